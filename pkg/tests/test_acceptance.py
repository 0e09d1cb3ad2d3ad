"""Acceptance suite: one test per contract criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

import dataclasses
import random
import statistics
import time
from contextlib import contextmanager

import pytest
from scipy.stats import spearmanr

from immunids.ais import (
    AmpEncoder,
    CoStimulation,
    TAgent,
    negative_selection,
    send_signal,
)
from immunids.classify import LinearPlane, classify_dmp, DmpLabel
from immunids.cli import main
from immunids.config import AisParams, ScenarioConfig, derive_seed
from immunids.ddsim import Simulation, build_topology
from immunids.doe import build_design, select_dmp_features, significance
from immunids.metrics import Dmp, metrics_from_counters
from immunids.pipeline import (
    detection_scenario,
    run_detection,
    sweep_detections,
    train_model_for,
)

from conftest import reference_tables


@contextmanager
def criterion(num: int, name: str):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num:02d} {name}: FAIL ({time.monotonic() - start:.1f}s)")
        raise
    print(f"\nACCEPTANCE {num:02d} {name}: PASS ({time.monotonic() - start:.1f}s)")


@pytest.fixture(scope="module")
def params():
    return AisParams()


@pytest.fixture(scope="module")
def trained_model(params):
    return train_model_for(seed=500, params=params)


def brute_force_longest_run(a: int, b: int, length: int) -> int:
    best = run = 0
    for i in range(length):
        if ((a >> i) & 1) == ((b >> i) & 1):
            run += 1
            best = max(best, run)
        else:
            run = 0
    return best


def test_01_self_tolerance_exact():
    with criterion(1, "self-tolerance"):
        start = time.monotonic()
        length, r = 32, 8
        rng = random.Random(4242)
        # a production-shaped self set: encoded healthy throughputs
        encoder = AmpEncoder(lo=0.0, hi=20.0, bins=16, length=length)
        self_patterns = [encoder.encode(rng.uniform(4.0, 18.0)) for _ in range(200)]
        assert len(self_patterns) == 200
        candidates = [
            TAgent(agent_id=i, mp=rng.getrandbits(length), host=0) for i in range(500)
        ]
        matured = negative_selection(
            candidates, self_patterns, r=r, max_attempts=500, rng=rng, length=length,
        )
        assert len(matured) == 500
        for agent in matured:                      # exhaustive pairwise brute force
            for s in self_patterns:
                assert brute_force_longest_run(agent.mp, s, length) < r
        assert time.monotonic() - start < 5.0


def test_02_danger_gating_exact(trained_model, params):
    with criterion(2, "danger-gating"):
        stub = dataclasses.replace(
            trained_model, plane=LinearPlane(weights=(0.0, 0.0, -1.0), offset=0.0)
        )
        cfg = ScenarioConfig(
            n_p=3, n_s=40, n_r=57, n_m=6, mu_m=0.5, seed=808,
            cache_capacity=512, tx_time=0.002, exploratory_interval=0.5,
        )
        assert cfg.n_nodes == 100
        result = run_detection(cfg, params, stub, rounds=200, warmup_rounds=10)
        assert len(result.rounds) == 200
        assert all(r.activated_d == 0 for r in result.rounds)
        assert all(r.activated_t == 0 for r in result.rounds)
        assert result.flagged == ()


def test_03_signaling_statistics():
    with criterion(3, "signaling-statistics"):
        start = time.monotonic()
        rng = random.Random(31337)
        pool = [TAgent(agent_id=i, mp=0, host=0) for i in range(12)]
        deliveries = [
            len(send_signal(pool[0], pool, CoStimulation(0.5), t=10, p=0.5, rng=rng))
            for _ in range(10_000)
        ]
        mean = statistics.mean(deliveries)
        assert 4.85 <= mean <= 5.15
        assert time.monotonic() - start < 1.0


def test_04_doe_oracle_equivalence():
    with criterion(4, "doe-oracle-equivalence"):
        import numpy as np

        rng = np.random.default_rng(2024)
        design = build_design(k=3, p=0)
        reps = 5
        signs = np.repeat(design.rows, reps, axis=0).astype(float)
        y = 3.0 * signs[:, 0] + 1.0 * signs[:, 1] + rng.normal(0.0, 0.25, len(signs))
        table = significance(
            y.reshape(-1, 1), design, repetitions=reps,
            metric_names=("m",), factor_names=("A", "B", "C"),
        )
        grand = y.mean()
        sst = float(((y - grand) ** 2).sum())
        for j, factor in enumerate(("A", "B", "C")):
            hi = y[signs[:, j] == 1]
            lo = y[signs[:, j] == -1]
            ss = len(hi) * (hi.mean() - grand) ** 2 + len(lo) * (lo.mean() - grand) ** 2
            assert abs(table.get("m", factor) - ss / sst) < 1e-9

        seven_four = build_design(k=7, p=4)
        assert seven_four.n_runs == 8
        for j in range(7):
            assert int(seven_four.column(j).sum()) == 0


def test_05_feature_selection_reproduction():
    with criterion(5, "feature-selection"):
        malicious, honest = reference_tables()
        picked = select_dmp_features(malicious, honest, theta_hi=0.35, theta_lo=0.35)
        assert set(picked) == {
            "interest_throughput",
            "long_buffer_probability",
            "one_hop_delay",
        }


def test_06_classifier_geometry():
    with criterion(6, "classifier-geometry"):
        import numpy as np

        plane = LinearPlane(weights=(-1.8, -0.1, 0.2), offset=195.0)

        label, margin = classify_dmp(plane, Dmp(0.0, 0.0, 975.0))
        assert label is DmpLabel.SAFE and margin == 0.0

        label, margin = classify_dmp(plane, Dmp(0.0, 0.0, 2000.0))
        assert label is DmpLabel.DANGER

        label, _ = classify_dmp(plane, Dmp(200.0, 0.0, 0.0))
        assert label is DmpLabel.SAFE

        w = np.array(plane.weights)
        rng = np.random.default_rng(6)
        points = [(0.0, 0.0, 975.0), (0.0, 0.0, 2000.0), (200.0, 0.0, 0.0)] + [
            tuple(rng.uniform(-400, 400, 3)) for _ in range(100)
        ]
        for x in points:
            _, margin = classify_dmp(plane, Dmp(*x))
            score = float(w @ np.array(x)) - plane.offset
            foot = np.array(x) - (score / float(w @ w)) * w
            assert abs(abs(margin) - float(np.linalg.norm(np.array(x) - foot))) < 1e-12


def test_07_activation_monotonicity(trained_model, params):
    with criterion(7, "activation-monotonicity"):
        start = time.monotonic()
        seeds, rounds = 10, 20
        # a denser scanner population shortens T-cell onset, which keeps the
        # short sweep runs inside the runtime budget
        sweep_params = dataclasses.replace(params, d_per_node=2)
        configs = [
            dataclasses.replace(
                detection_scenario(n_m, seed=derive_seed(3000, "sweep", n_m, s)),
                interest_ttl=12.0,
                refresh_interval=6.0,
            )
            for n_m in range(0, 9)
            for s in range(seeds)
        ]
        points = sweep_detections(
            configs, sweep_params, trained_model, rounds=rounds, warmup_rounds=7, workers=2
        )
        by_nm_d = {n_m: [] for n_m in range(9)}
        by_nm_t = {n_m: [] for n_m in range(9)}
        for p in points:
            by_nm_d[p.n_m].append(p.activated_d)
            by_nm_t[p.n_m].append(p.activated_t)
        mean_d = [statistics.mean(by_nm_d[n]) for n in range(9)]
        mean_t = [statistics.mean(by_nm_t[n]) for n in range(9)]
        rho_d = spearmanr(range(9), mean_d).statistic
        rho_t = spearmanr(range(9), mean_t).statistic
        elapsed = time.monotonic() - start
        print(f"\n  mean activated D by attackers: {[round(x, 2) for x in mean_d]}")
        print(f"  mean activated T by attackers: {[round(x, 2) for x in mean_t]}")
        print(f"  spearman rho: D {rho_d:.3f}  T {rho_t:.3f}  ({elapsed:.0f}s)")
        assert rho_d >= 0.9
        assert rho_t >= 0.9
        assert elapsed < 180.0


def test_08_detection_rate_band(trained_model, params):
    with criterion(8, "detection-rate-band"):
        start = time.monotonic()
        configs = [
            detection_scenario(15, seed=derive_seed(4000, "band", s)) for s in range(10)
        ]
        points = sweep_detections(
            configs, params, trained_model, rounds=30, warmup_rounds=10, workers=2
        )
        mean_fp = statistics.mean(p.fp_rate for p in points)
        mean_fn = statistics.mean(p.fn_rate for p in points)
        elapsed = time.monotonic() - start
        print(f"\n  mean FP {mean_fp:.4f} (<=0.10)  mean FN {mean_fn:.4f} (<=0.15)  ({elapsed:.0f}s)")
        assert mean_fp <= 0.10
        assert mean_fn <= 0.15
        assert elapsed < 300.0


def test_09_cache_poisoning_mechanism():
    with criterion(9, "icp-mechanism"):
        base = dict(
            n_p=2, n_s=8, n_r=10, n_m=3, duration=20.0, seed=909, cache_capacity=24,
        )

        class BoundCheckedSimulation(Simulation):
            def _handle_interest_arrival(self, dest, *rest):
                super()._handle_interest_arrival(dest, *rest)
                assert len(self.states[dest].cache) <= self.config.cache_capacity

            def originate_interests(self, origin, interests, spurious):
                super().originate_interests(origin, interests, spurious)
                assert len(self.states[origin].cache) <= self.config.cache_capacity

        def run_one(mu):
            cfg = ScenarioConfig(mu_m=mu, **base)
            sim = BoundCheckedSimulation(build_topology(cfg), record_events=False)
            interest = []
            for block in sim.run_blocks():
                interest.append(
                    metrics_from_counters(block.counters.values()).interest_throughput
                )
                for st in sim.states:
                    assert len(st.cache) <= cfg.cache_capacity
            return sim.eviction_counts()["legit"], statistics.mean(interest)

        evictions_healthy, interest_healthy = run_one(0.0)
        evictions_attacked, interest_attacked = run_one(0.5)
        print(
            f"\n  legit evictions {evictions_healthy} -> {evictions_attacked}; "
            f"mean interest throughput {interest_healthy:.1f} -> {interest_attacked:.1f}"
        )
        assert evictions_attacked > evictions_healthy
        assert interest_attacked > interest_healthy


def test_10_pipeline_determinism(tmp_path):
    with criterion(10, "pipeline-determinism"):
        cfg_text = (
            "n_p = 3\nn_s = 20\nn_r = 0\nn_m = 3\nmu_m = 0.5\nseed = 71\n"
            "cache_capacity = 512\ntx_time = 0.002\nradio_range = 0.3\n"
            "exploratory_interval = 0.5\nduration = 16.0\n"
        )

        def pipeline(tag):
            root = tmp_path / tag
            root.mkdir()
            attack_cfg = root / "attack.cfg"
            attack_cfg.write_text(cfg_text)
            healthy_cfg = root / "healthy.cfg"
            healthy_cfg.write_text(cfg_text.replace("n_m = 3", "n_m = 0").replace("seed = 71", "seed = 72"))
            assert main(["simulate", "--config", str(healthy_cfg), "--out", str(root / "h")]) == 0
            assert main(["simulate", "--config", str(attack_cfg), "--out", str(root / "a")]) == 0
            assert main([
                "train",
                "--healthy", str(root / "h" / "metrics.csv"),
                "--attack", str(root / "a" / "metrics.csv"),
                "--out-model", str(root / "model.txt"),
                "--seed", "9",
            ]) == 0
            assert main([
                "detect", "--config", str(attack_cfg), "--model", str(root / "model.txt"),
                "--rounds", "18", "--warmup", "8", "--seed", "99", "--out", str(root / "det"),
            ]) == 0
            return root

        first = pipeline("one")
        second = pipeline("two")
        for name in ("det/detection_report.txt", "det/rounds.csv", "model.txt"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
