import pytest

import immunids.ais as ais_mod
from immunids.ais import CoStimulation, DState, TState
from immunids.classify import DetectionModel, LinearPlane
from immunids.config import AisParams
from immunids.pipeline import (
    detection_scenario,
    fit_model,
    run_detection,
    scenario_metric_rows,
    train_model_for,
)


@pytest.fixture(scope="module")
def params():
    return AisParams()


@pytest.fixture(scope="module")
def model(params):
    return train_model_for(seed=50, params=params, n_m=6, n_monitored=40, blocks=22)


def never_danger(model):
    """The same model with its plane replaced by a constant-safe stub."""
    import dataclasses

    stub = LinearPlane(weights=(0.0, 0.0, -1.0), offset=0.0)   # score <= 0 everywhere
    return dataclasses.replace(model, plane=stub)


class TestFitModel:
    def test_requires_malicious_rows(self, params):
        _, healthy = scenario_metric_rows(detection_scenario(0, seed=60, n_monitored=20))
        with pytest.raises(ValueError):
            fit_model(healthy, healthy, params)

    def test_fitted_model_separates_classes(self, model):
        assert model.train_accuracy >= 0.9
        assert model.amp_reference.benign_mean > model.amp_reference.pathogenic_mean
        assert model.margin_scale > 0
        assert len(model.self_patterns) >= 1

    def test_model_is_deterministic(self, params):
        a = train_model_for(seed=51, params=params, n_m=4, n_monitored=20, blocks=16)
        b = train_model_for(seed=51, params=params, n_m=4, n_monitored=20, blocks=16)
        assert a.plane.weights == b.plane.weights
        assert a.self_patterns == b.self_patterns


class TestDetection:
    def test_healthy_run_raises_no_alarms(self, model, params):
        res = run_detection(detection_scenario(0, seed=202, n_monitored=40), params, model, rounds=30)
        assert res.fp_rate == 0.0
        assert res.flagged == ()
        assert all(r.activated_d == 0 and r.activated_t == 0 for r in res.rounds)

    def test_attack_run_flags_every_attacker(self, model, params):
        res = run_detection(detection_scenario(6, seed=202, n_monitored=40), params, model, rounds=30)
        assert res.fn_rate == 0.0
        assert set(res.malicious_lt) <= set(res.flagged)
        assert max(r.activated_d for r in res.rounds) > 0

    def test_false_positives_are_partition_artifacts(self, model, params):
        # seed 201 walls a pocket of honest nodes off behind attackers
        res = run_detection(detection_scenario(6, seed=201, n_monitored=40), params, model, rounds=30)
        false_positives = set(res.flagged) - set(res.malicious_lt)
        assert false_positives <= set(res.partitioned_honest)

    def test_detection_is_deterministic(self, model, params):
        cfg = detection_scenario(6, seed=203, n_monitored=40)
        a = run_detection(cfg, params, model, rounds=25)
        b = run_detection(cfg, params, model, rounds=25)
        assert a.report_lines() == b.report_lines()

    def test_rounds_follow_requested_count(self, model, params):
        res = run_detection(detection_scenario(0, seed=204, n_monitored=20), params, model, rounds=17)
        assert [r.round_index for r in res.rounds] == list(range(17))


class TestGatingInvariants:
    def test_constant_safe_classifier_blocks_all_activation(self, model, params):
        stub = never_danger(model)
        res = run_detection(detection_scenario(6, seed=202, n_monitored=40), params, stub, rounds=30)
        assert all(r.activated_d == 0 for r in res.rounds)
        assert all(r.activated_t == 0 for r in res.rounds)
        assert res.flagged == ()

    def test_suppressed_costimulation_blocks_t_agents(self, model, params, monkeypatch):
        real = ais_mod.send_signal

        def drop_costim(sender, node_agents, signal, t, p, rng):
            if isinstance(signal, CoStimulation):
                return []
            return real(sender, node_agents, signal, t, p, rng)

        monkeypatch.setattr(ais_mod, "send_signal", drop_costim)
        res = run_detection(detection_scenario(6, seed=202, n_monitored=40), params, model, rounds=30)
        assert max(r.activated_d for r in res.rounds) > 0      # antigen traffic flows
        assert all(r.activated_t == 0 for r in res.rounds)     # but no help without co-stimulation
