"""Scenario and protocol configuration, config-file parsing, seed derivation."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed config files or invalid parameter combinations."""


# The seven two-level experiment factors, in canonical order.  Each name
# lowercases to the matching ScenarioConfig attribute.
FACTOR_NAMES = ("N_M", "N_P", "I_P", "mu_M", "N_R", "N_S", "delta_sigma")


def derive_seed(root: int, *labels) -> int:
    """Derive a stable 63-bit sub-seed from a root seed and a label path.

    Every source of randomness in a pipeline draws from its own derived
    stream, so adding or removing one consumer never perturbs the others.
    """
    text = "{}/{}".format(root, "/".join(str(x) for x in labels))
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFFFFFFFFFFFFFF


@dataclass
class ScenarioConfig:
    """One simulation scenario: topology counts, traffic timing, attack knobs.

    All values have working defaults; a config file only needs to override
    what it cares about.  `None` fields are resolved from related knobs by
    `resolved()`.
    """

    # node population
    n_m: int = 0            # malicious subscriber count
    n_p: int = 3            # publishers
    n_r: int = 25           # relays
    n_s: int = 12           # subscribers (sinks)
    # traffic timing
    i_p: float = 1.0        # seconds between data messages per publisher
    mu_m: float = 0.5       # mean spurious-batch size as a fraction of the send buffer
    delta_sigma: float = 0.25   # per-publisher start-time stagger (publisher i starts at i*delta_sigma)
    # capacities and windows
    cache_capacity: int = 128
    send_buffer_capacity: int = 20
    block_length: float = 1.0
    duration: float = 30.0
    seed: int = 1
    # protocol plumbing
    malicious_std: float = 0.1      # std dev of the spurious-batch fraction draw
    radio_range: float | None = None    # link radius on the unit-square layout; default scales with N
    max_placement_attempts: int = 100
    interest_ttl: float | None = None       # default 10 * i_p
    refresh_interval: float | None = None   # default interest_ttl / 2
    exploratory_interval: float | None = None   # default i_p
    tx_time: float = 0.0008         # per-message transmit (service) time, seconds
    buffer_sample_interval: float = 0.25
    long_buffer_threshold: int | None = None    # default 0.8 * send_buffer_capacity
    attack_interval: float | None = None        # default block_length

    def resolved(self) -> "ScenarioConfig":
        """Return a copy with every None knob filled from its default rule."""
        cfg = dataclasses.replace(self)
        if cfg.radio_range is None:
            # a bit above the random-geometric connectivity threshold, so the
            # seeded placement retry loop converges quickly at any size
            n = max(cfg.n_nodes, 2)
            cfg.radio_range = min(max(1.25 * math.sqrt(math.log(n + 1.0) / (math.pi * n)), 0.12), 0.95)
        if cfg.interest_ttl is None:
            cfg.interest_ttl = 10.0 * cfg.i_p
        if cfg.refresh_interval is None:
            cfg.refresh_interval = cfg.interest_ttl / 2.0
        if cfg.exploratory_interval is None:
            cfg.exploratory_interval = cfg.i_p
        if cfg.long_buffer_threshold is None:
            cfg.long_buffer_threshold = int(0.8 * cfg.send_buffer_capacity)
        if cfg.attack_interval is None:
            cfg.attack_interval = cfg.block_length
        return cfg

    def validate(self) -> None:
        if min(self.n_m, self.n_p, self.n_r, self.n_s) < 0:
            raise ConfigError("node counts must be non-negative")
        if self.n_m > self.n_s:
            raise ConfigError(f"n_m ({self.n_m}) exceeds n_s ({self.n_s})")
        if self.n_p + self.n_s + self.n_r < 2:
            raise ConfigError("network needs at least 2 nodes")
        if not 0.0 <= self.mu_m <= 1.0:
            raise ConfigError("mu_m must lie in [0, 1]")
        if self.cache_capacity < 1 or self.send_buffer_capacity < 1:
            raise ConfigError("capacities must be positive")
        if self.block_length <= 0 or self.duration <= 0 or self.i_p <= 0:
            raise ConfigError("durations and intervals must be positive")

    @property
    def n_nodes(self) -> int:
        return self.n_p + self.n_s + self.n_r

    def factor_value(self, name: str):
        if name not in FACTOR_NAMES:
            raise ConfigError(f"unknown factor {name!r}")
        return getattr(self, name.lower())

    def with_factor(self, name: str, value) -> "ScenarioConfig":
        if name not in FACTOR_NAMES:
            raise ConfigError(f"unknown factor {name!r}")
        attr = name.lower()
        if attr in ("n_m", "n_p", "n_r", "n_s"):
            value = int(round(value))
        return dataclasses.replace(self, **{attr: value})


@dataclass
class AisParams:
    """Knobs of the detection protocol layered over the simulation."""

    n_lymph: int = 1            # lymph-node hosts
    d_per_node: int = 1         # resident inactive D agents per monitored node
    pattern_bits: int = 32      # molecular-pattern length L
    match_threshold: int = 8    # r: contiguous agreeing bits required for a match
    amp_bins: int = 16          # quantization bins for throughput encoding
    signal_p: float = 0.5       # per-recipient delivery probability
    signal_t: int = 5           # recipients sampled per send
    theta_amp: int = 3          # pathogenic AMP hits needed to activate a D agent
    theta_danger: int = 3       # danger DMP hits needed to activate a D agent
    theta_match: int = 3        # matching AMP messages needed to activate a T agent
    theta_costim: float = 0.5   # accumulated co-stimulation needed to activate a T agent
    proliferation_rate: int = 10
    mutation_max: float = 0.2   # per-bit flip probability at zero affinity
    lifespan: int = 50          # rounds before apoptosis
    birth_rate: int = 5         # immature T agents created per round
    window: int = 10            # sliding round window for hit counting
    maturation_attempts: int = 50   # regeneration budget during negative selection

    def validate(self) -> None:
        if self.n_lymph < 1:
            raise ConfigError("n_lymph must be positive")
        if self.pattern_bits < 1 or not 1 <= self.match_threshold <= self.pattern_bits:
            raise ConfigError("match_threshold must lie in [1, pattern_bits]")
        if not 0.0 <= self.signal_p <= 1.0:
            raise ConfigError("signal_p must lie in [0, 1]")
        if self.window < 1 or self.lifespan < 1:
            raise ConfigError("window and lifespan must be positive")


_SCENARIO_FIELDS = {f.name: f for f in fields(ScenarioConfig)}
_AIS_FIELDS = {f.name: f for f in fields(AisParams)}


def _coerce(raw: str, name: str, line_no: int):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    try:
        if raw.lower() in ("true", "false"):
            return raw.lower() == "true"
        if any(c in raw for c in ".eE") and not raw.lstrip("+-").isdigit():
            return float(raw)
        return int(raw)
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse value {raw!r} for key {name!r}")


def parse_config_text(text: str) -> tuple[ScenarioConfig, AisParams]:
    """Parse `key = value` lines (``#`` comments) into config objects.

    Unknown keys are rejected by name; scenario and protocol keys share one
    flat namespace.
    """
    scenario: dict = {}
    ais: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        value = _coerce(raw, key, line_no)
        if key in _SCENARIO_FIELDS:
            scenario[key] = value
        elif key in _AIS_FIELDS:
            ais[key] = value
        else:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
    cfg = ScenarioConfig(**scenario)
    params = AisParams(**ais)
    cfg.validate()
    params.validate()
    return cfg, params


def load_config(path: str | Path) -> tuple[ScenarioConfig, AisParams]:
    return parse_config_text(Path(path).read_text())


def config_text(cfg: ScenarioConfig, params: AisParams | None = None) -> str:
    """Canonical flat text rendering; stable across runs for hashing."""
    lines = []
    for f in fields(ScenarioConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)!r}")
    if params is not None:
        for f in fields(AisParams):
            lines.append(f"{f.name} = {getattr(params, f.name)!r}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ScenarioConfig, params: AisParams | None = None) -> str:
    return hashlib.sha256(config_text(cfg, params).encode()).hexdigest()[:16]
