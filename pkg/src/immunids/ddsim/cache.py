"""Bounded per-node interest cache with FIFO eviction and gradient state."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

# gradient rates toward a neighbor, per cached interest
EXPLORATORY = 0
REINFORCED = 1


@dataclass(slots=True)
class Interest:
    """A subscription: `attribute` is the data tag, `origin` the subscribing node."""

    attribute: int
    origin: int
    timestamp: float = 0.0
    spurious: bool = False

    @property
    def key(self) -> tuple[int, int]:
        return (self.attribute, self.origin)


@dataclass(slots=True)
class CacheEntry:
    interest: Interest
    # neighbor id -> EXPLORATORY | REINFORCED; data for this interest is
    # forwarded toward these neighbors (the reverse interest path)
    gradients: dict = field(default_factory=dict)


class InterestCache:
    """Distinct interests keyed by (attribute, origin), FIFO-bounded.

    Re-inserting an existing key refreshes its timestamp and moves it to the
    newest position instead of growing the cache.  Entries older than `ttl`
    are lazily purged; because refreshes move entries to the back, the front
    of the queue is always the stalest entry, so purging is O(1) amortized.

    Per-attribute next-hop aggregates are maintained incrementally so the
    data plane never scans the cache.
    """

    def __init__(self, capacity: int, ttl: float = float("inf")):
        if capacity < 1:
            raise ValueError("cache capacity must be positive")
        self.capacity = capacity
        self.ttl = ttl
        self._entries: OrderedDict[tuple[int, int], CacheEntry] = OrderedDict()
        self._by_attribute: dict[int, set[int]] = {}
        self._hops_all: dict[int, dict[int, int]] = {}
        self._hops_reinforced: dict[int, dict[int, int]] = {}
        self.evicted_legit = 0
        self.evicted_spurious = 0
        self.expired = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._entries

    def entries(self) -> list[Interest]:
        return [e.interest for e in self._entries.values()]

    def get(self, key: tuple[int, int]) -> CacheEntry | None:
        return self._entries.get(key)

    # -- aggregate bookkeeping -------------------------------------------

    def _agg_add(self, agg: dict, attribute: int, neighbor: int) -> None:
        per = agg.get(attribute)
        if per is None:
            per = agg[attribute] = {}
        per[neighbor] = per.get(neighbor, 0) + 1

    def _agg_remove(self, agg: dict, attribute: int, neighbor: int) -> None:
        per = agg.get(attribute)
        if per is None:
            return
        n = per.get(neighbor, 0) - 1
        if n > 0:
            per[neighbor] = n
        else:
            per.pop(neighbor, None)
            if not per:
                agg.pop(attribute, None)

    def _drop_entry(self, key: tuple[int, int], entry: CacheEntry) -> None:
        attribute, origin = key
        origins = self._by_attribute.get(attribute)
        if origins is not None:
            origins.discard(origin)
            if not origins:
                del self._by_attribute[attribute]
        for neighbor, rate in entry.gradients.items():
            self._agg_remove(self._hops_all, attribute, neighbor)
            if rate == REINFORCED:
                self._agg_remove(self._hops_reinforced, attribute, neighbor)

    # -- core operations --------------------------------------------------

    def purge_expired(self, now: float) -> int:
        purged = 0
        while self._entries:
            key, entry = next(iter(self._entries.items()))
            if entry.interest.timestamp + self.ttl >= now:
                break
            del self._entries[key]
            self._drop_entry(key, entry)
            purged += 1
        self.expired += purged
        return purged

    def insert(self, interest: Interest) -> Interest | None:
        """Insert or refresh; returns the evicted interest if one was displaced."""
        self.purge_expired(interest.timestamp)
        key = interest.key
        existing = self._entries.get(key)
        if existing is not None:
            existing.interest.timestamp = interest.timestamp
            self._entries.move_to_end(key)
            return None
        evicted = None
        if len(self._entries) >= self.capacity:
            old_key, old = self._entries.popitem(last=False)
            evicted = old.interest
            self._drop_entry(old_key, old)
            if evicted.spurious:
                self.evicted_spurious += 1
            else:
                self.evicted_legit += 1
        self._entries[key] = CacheEntry(interest=interest)
        self._by_attribute.setdefault(interest.attribute, set()).add(interest.origin)
        return evicted

    def matching_origins(self, attribute: int, now: float) -> list[int]:
        """Origins with a live cached interest for `attribute`, sorted for determinism."""
        self.purge_expired(now)
        origins = self._by_attribute.get(attribute)
        return sorted(origins) if origins else []

    def live(self, key: tuple[int, int], now: float) -> bool:
        entry = self._entries.get(key)
        return entry is not None and entry.interest.timestamp + self.ttl >= now

    def add_gradient(self, key: tuple[int, int], neighbor: int) -> None:
        entry = self._entries.get(key)
        if entry is None or neighbor in entry.gradients:
            return
        entry.gradients[neighbor] = EXPLORATORY
        self._agg_add(self._hops_all, key[0], neighbor)

    def set_gradient_rate(self, attribute: int, origin: int, neighbor: int, rate: int) -> bool:
        entry = self._entries.get((attribute, origin))
        if entry is None:
            return False
        old = entry.gradients.get(neighbor)
        if old is None or old == rate:
            return False
        entry.gradients[neighbor] = rate
        if rate == REINFORCED:
            self._agg_add(self._hops_reinforced, attribute, neighbor)
        else:
            self._agg_remove(self._hops_reinforced, attribute, neighbor)
        return True

    def next_hops(self, attribute: int, exploratory: bool) -> list[int]:
        """Forwarding set for a data message: exploratory messages follow every
        gradient, full-rate messages prefer reinforced gradients when any exist."""
        if not exploratory:
            reinforced = self._hops_reinforced.get(attribute)
            if reinforced:
                return sorted(reinforced)
        hops = self._hops_all.get(attribute)
        return sorted(hops) if hops else []

    def reinforced_toward(self, attribute: int, neighbor: int) -> bool:
        per = self._hops_reinforced.get(attribute)
        return bool(per) and neighbor in per


def cache_insert(cache: InterestCache, interest: Interest) -> Interest | None:
    """Functional face of `InterestCache.insert`."""
    return cache.insert(interest)
