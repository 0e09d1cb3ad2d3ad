import math
import random

import numpy as np
import pytest

from immunids.classify import (
    AmpLabel,
    AmpReference,
    DetectionModel,
    DmpLabel,
    LabeledSample,
    LinearPlane,
    classify_amp,
    classify_dmp,
    train,
    training_accuracy,
)
from immunids.metrics import Amp, Dmp

# the fixed reference separator used throughout the geometry tests
REF_PLANE = LinearPlane(weights=(-1.8, -0.1, 0.2), offset=195.0)


def brute_force_plane_distance(plane, x):
    """Distance via explicit foot-of-perpendicular projection."""
    w = np.array(plane.weights)
    x = np.array(x, dtype=float)
    score = float(w @ x) - plane.offset
    foot = x - (score / float(w @ w)) * w
    return float(np.linalg.norm(x - foot))


def dmp(t):
    return Dmp(*t)


class TestPlaneGeometry:
    def test_boundary_point_ties_to_safe_with_zero_margin(self):
        x = (0.0, 0.0, 975.0)       # 0.2 * 975 == 195 exactly
        label, margin = classify_dmp(REF_PLANE, dmp(x))
        assert label is DmpLabel.SAFE
        assert margin == 0.0

    def test_high_third_coordinate_is_danger(self):
        label, margin = classify_dmp(REF_PLANE, dmp((0.0, 0.0, 2000.0)))
        assert label is DmpLabel.DANGER
        expected = (0.2 * 2000.0 - 195.0) / math.sqrt(1.8 ** 2 + 0.1 ** 2 + 0.2 ** 2)
        assert margin == pytest.approx(expected, abs=1e-12)
        assert margin == pytest.approx(113.02, abs=0.01)

    def test_high_first_coordinate_is_safe(self):
        label, margin = classify_dmp(REF_PLANE, dmp((200.0, 0.0, 0.0)))
        assert label is DmpLabel.SAFE
        assert margin < 0

    def test_margin_equals_brute_force_distance(self):
        rng = random.Random(4)
        for _ in range(200):
            x = (rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(-500, 500))
            _, margin = classify_dmp(REF_PLANE, dmp(x))
            assert abs(margin) == pytest.approx(brute_force_plane_distance(REF_PLANE, x), abs=1e-12)

    def test_decision_is_scale_invariant(self):
        rng = random.Random(9)
        for _ in range(100):
            x = dmp((rng.uniform(-300, 300), rng.uniform(-300, 300), rng.uniform(-300, 300)))
            c = rng.uniform(0.01, 50.0)
            scaled = LinearPlane(
                weights=tuple(c * w for w in REF_PLANE.weights), offset=c * REF_PLANE.offset
            )
            assert classify_dmp(REF_PLANE, x)[0] is classify_dmp(scaled, x)[0]

    def test_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            LinearPlane(weights=(0.0, 0.0, 0.0), offset=1.0)


class TestTraining:
    def separable_samples(self):
        safe = [LabeledSample(dmp((0.0, 0.0, 0.0)), DmpLabel.SAFE) for _ in range(20)]
        danger = [LabeledSample(dmp((10.0, 10.0, 10.0)), DmpLabel.DANGER) for _ in range(20)]
        return safe + danger

    def test_separable_clusters_reach_full_accuracy(self):
        samples = self.separable_samples()
        plane = train(samples, regularization=1e-3, seed=0)
        assert training_accuracy(plane, samples) == 1.0
        for s in samples:
            label, margin = classify_dmp(plane, s.features)
            assert label is s.label
            assert abs(margin) > 0

    def test_conflicting_duplicates_stay_finite(self):
        samples = [
            LabeledSample(dmp((1.0, 1.0, 1.0)), DmpLabel.SAFE),
            LabeledSample(dmp((1.0, 1.0, 1.0)), DmpLabel.DANGER),
            LabeledSample(dmp((0.0, 0.0, 0.0)), DmpLabel.SAFE),
            LabeledSample(dmp((2.0, 2.0, 2.0)), DmpLabel.DANGER),
        ]
        plane = train(samples, regularization=1e-2, seed=1)
        assert all(math.isfinite(w) for w in plane.weights)
        assert math.isfinite(plane.offset)

    def test_single_class_rejected(self):
        samples = [LabeledSample(dmp((1.0, 2.0, 3.0)), DmpLabel.SAFE)] * 5
        with pytest.raises(ValueError):
            train(samples)

    def test_recovers_known_plane_labeling(self):
        rng = random.Random(12)

        def draw(n):
            out = []
            for _ in range(n):
                x = (rng.uniform(0, 250), rng.uniform(0, 500), rng.uniform(0, 2500))
                score = REF_PLANE.score(x)
                label = DmpLabel.DANGER if score > 0 else DmpLabel.SAFE
                out.append(LabeledSample(dmp(x), label))
            return out

        train_set = draw(200)
        held_out = draw(200)
        plane = train(train_set, regularization=1e-4, seed=3)
        agree = sum(
            classify_dmp(plane, s.features)[0] is s.label for s in held_out
        )
        assert agree >= 0.99 * len(held_out)

    def test_regularization_never_grows_weight_norm(self):
        rng = random.Random(5)
        samples = []
        for _ in range(80):
            x = (rng.gauss(0, 3), rng.gauss(0, 3), rng.gauss(0, 3))
            label = DmpLabel.DANGER if sum(x) > 0 else DmpLabel.SAFE
            samples.append(LabeledSample(dmp(x), label))
        norms = []
        for reg in (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0):
            plane = train(samples, regularization=reg, seed=2)
            norms.append(plane.norm())
        for a, b in zip(norms, norms[1:]):
            assert b <= a * (1 + 1e-6)

    def test_retraining_is_deterministic(self):
        samples = self.separable_samples()
        a = train(samples, regularization=1e-3, seed=7)
        b = train(samples, regularization=1e-3, seed=7)
        assert a.weights == b.weights and a.offset == b.offset


class TestAmpClassifier:
    def reference(self):
        return AmpReference.fit(
            benign=[8.0, 10.0, 12.0, 9.0, 11.0],
            pathogenic=[0.0, 0.5, 0.0, 1.0, 0.5],
        )

    def test_benign_mean_scores_zero_distance(self):
        ref = self.reference()
        label, distance = classify_amp(ref, Amp(data_throughput=ref.benign_mean, node=1))
        assert label is AmpLabel.BENIGN
        assert distance == 0.0

    def test_pathogenic_mean_scores_full_distance(self):
        ref = self.reference()
        label, distance = classify_amp(ref, Amp(data_throughput=ref.pathogenic_mean, node=1))
        assert label is AmpLabel.PATHOGENIC
        assert distance == 1.0

    def test_standardized_midpoint_ties_to_benign(self):
        ref = AmpReference(benign_mean=10.0, benign_std=2.0, pathogenic_mean=0.0, pathogenic_std=2.0)
        label, distance = classify_amp(ref, Amp(data_throughput=5.0, node=1))
        assert label is AmpLabel.BENIGN
        assert distance == 0.5

    def test_unfitted_reference_rejected(self):
        with pytest.raises(ValueError):
            classify_amp(None, Amp(data_throughput=1.0, node=1))
        with pytest.raises(ValueError):
            AmpReference.fit(benign=[], pathogenic=[1.0])


class TestModelFile:
    def model(self):
        return DetectionModel(
            plane=REF_PLANE,
            amp_reference=AmpReference(10.0, 2.0, 0.0, 0.5),
            encoder_lo=0.0,
            encoder_hi=20.0,
            encoder_bins=16,
            pattern_bits=32,
            self_patterns=(1, 2, 0xDEADBEEF),
            margin_scale=12.5,
            train_accuracy=0.98,
        )

    def test_round_trip(self, tmp_path):
        path = tmp_path / "model.txt"
        m = self.model()
        m.save(path)
        back = DetectionModel.load(path)
        assert back.plane.weights == m.plane.weights
        assert back.plane.offset == m.plane.offset
        assert back.self_patterns == m.self_patterns
        assert back.margin_scale == m.margin_scale

    def test_identical_saves_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        self.model().save(a)
        self.model().save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "model.txt"
        self.model().save(path)
        text = path.read_text().replace("format_version = 1", "format_version = 99")
        path.write_text(text)
        with pytest.raises(ValueError):
            DetectionModel.load(path)
