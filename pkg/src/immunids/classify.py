"""Linear safe/danger classification of danger patterns and the throughput discriminator.

The plane is fit by minimizing a squared-hinge loss with an L2 weight penalty
(the two-norm soft-margin objective) using deterministic full-batch gradient
descent on standardized features; the learned plane is mapped back to raw
feature units so stored models are directly interpretable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .metrics import Amp, Dmp


class DmpLabel(Enum):
    SAFE = "safe"
    DANGER = "danger"


class AmpLabel(Enum):
    BENIGN = "benign"
    PATHOGENIC = "pathogenic"


@dataclass(slots=True)
class LabeledSample:
    features: Dmp
    label: DmpLabel


@dataclass(slots=True)
class LinearPlane:
    """Separating plane: danger iff weights . x - offset > 0.

    The margin is the signed Euclidean distance from the plane, positive on
    the danger side.
    """

    weights: tuple[float, float, float]
    offset: float

    def __post_init__(self):
        if all(w == 0.0 for w in self.weights):
            raise ValueError("plane weights must not all be zero")

    def score(self, x: tuple[float, float, float]) -> float:
        w = self.weights
        return w[0] * x[0] + w[1] * x[1] + w[2] * x[2] - self.offset

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights))


def classify_dmp(plane: LinearPlane, x: Dmp) -> tuple[DmpLabel, float]:
    """Label a danger pattern; ties on the boundary fall to SAFE."""
    score = plane.score(x.as_tuple())
    margin = score / plane.norm()
    label = DmpLabel.DANGER if score > 0 else DmpLabel.SAFE
    return label, margin


def train(
    samples: list[LabeledSample],
    regularization: float = 1e-3,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 20000,
) -> LinearPlane:
    """Fit the plane on labeled danger patterns.

    Objective: 0.5 * regularization * |w|^2 + mean(max(0, 1 - y s)^2) with
    s = w.x + b and y in {-1 (safe), +1 (danger)}.  Gradient descent with
    backtracking line search runs until the relative objective change drops
    below `tol`; non-convergence is reported, not raised.
    """
    if regularization <= 0:
        raise ValueError("regularization must be positive")
    labels = {s.label for s in samples}
    if len(labels) < 2:
        raise ValueError("training requires both SAFE and DANGER samples")
    X = np.array([s.features.as_tuple() for s in samples], dtype=float)
    y = np.array([1.0 if s.label is DmpLabel.DANGER else -1.0 for s in samples])
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std < 1e-12] = 1.0
    Z = (X - mean) / std

    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1e-3, size=Z.shape[1])
    b = 0.0
    n = len(y)

    def objective(wv, bv):
        slack = np.maximum(0.0, 1.0 - y * (Z @ wv + bv))
        return 0.5 * regularization * float(wv @ wv) + float(slack @ slack) / n

    obj = objective(w, b)
    step = 1.0
    converged = False
    for _ in range(max_iter):
        slack = np.maximum(0.0, 1.0 - y * (Z @ w + b))
        coeff = -2.0 * slack * y / n
        grad_w = regularization * w + Z.T @ coeff
        grad_b = float(coeff.sum())
        # backtracking: shrink until the step actually decreases the objective
        step = min(step * 2.0, 1e6)
        while step > 1e-18:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            obj_new = objective(w_new, b_new)
            if obj_new <= obj:
                break
            step *= 0.5
        if step <= 1e-18:
            converged = True
            break
        w, b = w_new, b_new
        if obj - obj_new <= tol * max(abs(obj), 1.0):
            obj = obj_new
            converged = True
            break
        obj = obj_new
    if not converged:
        warnings.warn(f"plane training hit the iteration cap; objective={obj:.6g}")

    # map the standardized-space plane back to raw feature units
    w_raw = w / std
    offset = float(np.dot(w / std, mean) - b)
    return LinearPlane(weights=tuple(float(v) for v in w_raw), offset=offset)


def training_accuracy(plane: LinearPlane, samples: list[LabeledSample]) -> float:
    hits = 0
    for s in samples:
        label, _ = classify_dmp(plane, s.features)
        hits += label is s.label
    return hits / len(samples) if samples else 0.0


@dataclass(slots=True)
class AmpReference:
    """Per-class mean/spread of data throughput from training runs."""

    benign_mean: float
    benign_std: float
    pathogenic_mean: float
    pathogenic_std: float

    @classmethod
    def fit(cls, benign: list[float], pathogenic: list[float]) -> "AmpReference":
        if not benign or not pathogenic:
            raise ValueError("both benign and pathogenic throughput samples are required")
        b = np.array(benign, dtype=float)
        p = np.array(pathogenic, dtype=float)
        return cls(
            benign_mean=float(b.mean()),
            benign_std=float(b.std()),
            pathogenic_mean=float(p.mean()),
            pathogenic_std=float(p.std()),
        )


def classify_amp(reference: AmpReference, a: Amp) -> tuple[AmpLabel, float]:
    """Nearest-class call on one throughput value.

    Returns (label, closeness to the pathogenic class in [0, 1]); the
    closeness doubles as co-stimulation strength downstream.  A tie in
    standardized distance goes to BENIGN.
    """
    if reference is None:
        raise ValueError("AMP reference statistics are not fitted")
    sb = max(reference.benign_std, 1e-9)
    sp = max(reference.pathogenic_std, 1e-9)
    z_benign = abs(a.data_throughput - reference.benign_mean) / sb
    z_path = abs(a.data_throughput - reference.pathogenic_mean) / sp
    if z_benign + z_path == 0.0:
        return AmpLabel.BENIGN, 0.5
    distance = z_benign / (z_benign + z_path)
    label = AmpLabel.PATHOGENIC if z_path < z_benign else AmpLabel.BENIGN
    return label, distance


# ----------------------------------------------------------------------
# model persistence
# ----------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


@dataclass(slots=True)
class DetectionModel:
    """Everything the detection layer needs: plane, throughput reference,
    the throughput-to-pattern encoder range, self patterns, and the scale
    that normalizes danger margins into [0, 1]."""

    plane: LinearPlane
    amp_reference: AmpReference
    encoder_lo: float
    encoder_hi: float
    encoder_bins: int
    pattern_bits: int
    self_patterns: tuple[int, ...]
    margin_scale: float
    train_accuracy: float = 0.0

    def save(self, path: str | Path) -> None:
        lines = [
            f"format_version = {MODEL_FORMAT_VERSION}",
            f"plane_weights = {self.plane.weights[0]!r}, {self.plane.weights[1]!r}, {self.plane.weights[2]!r}",
            f"plane_offset = {self.plane.offset!r}",
            f"amp_benign_mean = {self.amp_reference.benign_mean!r}",
            f"amp_benign_std = {self.amp_reference.benign_std!r}",
            f"amp_pathogenic_mean = {self.amp_reference.pathogenic_mean!r}",
            f"amp_pathogenic_std = {self.amp_reference.pathogenic_std!r}",
            f"encoder_lo = {self.encoder_lo!r}",
            f"encoder_hi = {self.encoder_hi!r}",
            f"encoder_bins = {self.encoder_bins}",
            f"pattern_bits = {self.pattern_bits}",
            "self_patterns = " + ",".join(str(p) for p in self.self_patterns),
            f"margin_scale = {self.margin_scale!r}",
            f"train_accuracy = {self.train_accuracy!r}",
        ]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DetectionModel":
        kv: dict[str, str] = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            kv[key.strip()] = raw.strip()
        version = int(kv.get("format_version", "-1"))
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        weights = tuple(float(x) for x in kv["plane_weights"].split(","))
        patterns = tuple(int(x) for x in kv["self_patterns"].split(",")) if kv["self_patterns"] else ()
        return cls(
            plane=LinearPlane(weights=weights, offset=float(kv["plane_offset"])),
            amp_reference=AmpReference(
                benign_mean=float(kv["amp_benign_mean"]),
                benign_std=float(kv["amp_benign_std"]),
                pathogenic_mean=float(kv["amp_pathogenic_mean"]),
                pathogenic_std=float(kv["amp_pathogenic_std"]),
            ),
            encoder_lo=float(kv["encoder_lo"]),
            encoder_hi=float(kv["encoder_hi"]),
            encoder_bins=int(kv["encoder_bins"]),
            pattern_bits=int(kv["pattern_bits"]),
            self_patterns=patterns,
            margin_scale=float(kv["margin_scale"]),
            train_accuracy=float(kv["train_accuracy"]),
        )
