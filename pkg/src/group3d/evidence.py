"""Turn clusters into labeled, scored, axis-aligned 3D detections.

Each candidate label of a cluster is scored by its mean fragment confidence
times a saturating support weight ``1 - exp(-n / tau)`` of its fragment
count; the best-scoring label wins and the box is the AABB of all member
points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigurationError, ParseError, ValidationError
from .merging import Cluster
from .validation import check_positive
from .vocabulary import canonicalize

DEFAULT_TAU_SUPPORT = 3.0


@dataclass(frozen=True)
class EvidenceParams:
    tau_support: float = DEFAULT_TAU_SUPPORT

    def __post_init__(self):
        check_positive(self.tau_support, "tau_support")


@dataclass(frozen=True, eq=False)
class Instance:
    label: str
    score: float
    box_min: np.ndarray
    box_max: np.ndarray
    support: int = 0
    n_points: int = 0
    points: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lo = np.asarray(self.box_min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.box_max, dtype=np.float64).reshape(3)
        if (lo > hi).any():
            raise ValidationError("box min corner exceeds max corner")
        object.__setattr__(self, "box_min", lo)
        object.__setattr__(self, "box_max", hi)

    @property
    def box(self) -> np.ndarray:
        """Box as ``[xmin, ymin, zmin, xmax, ymax, zmax]``."""
        return np.concatenate([self.box_min, self.box_max])


class LabelScore(NamedTuple):
    mean_confidence: float
    support: int
    score: float


def support_weight(x: float, tau: float) -> float:
    """``1 - exp(-x / tau)``."""
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau!r}")
    if x < 0:
        raise ValidationError(f"support count must be non-negative, got {x!r}")
    return -math.expm1(-x / tau)


def score_labels(cluster: Cluster, params: EvidenceParams = EvidenceParams()) -> dict[str, LabelScore]:
    table = {}
    for label, confs in cluster.labels.items():
        mean = math.fsum(confs) / len(confs)
        n = len(confs)
        table[label] = LabelScore(mean, n, mean * support_weight(n, params.tau_support))
    return table


def finalize_instance(cluster: Cluster, params: EvidenceParams = EvidenceParams()) -> Instance:
    table = score_labels(cluster, params)
    # highest score; ties go to the label seen earliest in fragment memory
    label = min(table, key=lambda c: (-table[c].score, cluster.first_index[c]))
    pts = cluster.points
    return Instance(
        label=label,
        score=table[label].score,
        box_min=pts.min(axis=0),
        box_max=pts.max(axis=0),
        support=table[label].support,
        n_points=pts.shape[0],
        points=pts,
    )


def run_evidence(clusters: Sequence[Cluster], params: EvidenceParams = EvidenceParams()) -> list[Instance]:
    return [finalize_instance(c, params) for c in clusters]


class EvidenceAccumulator(TransformerMixin, BaseEstimator):
    """Stateless transformer: clusters in, instances out."""

    def __init__(self, tau_support=DEFAULT_TAU_SUPPORT):
        self.tau_support = tau_support

    def fit(self, X=None, y=None):
        self.params_ = EvidenceParams(self.tau_support)
        return self

    def transform(self, X):
        return run_evidence(list(X), EvidenceParams(self.tau_support))

    def __sklearn_is_fitted__(self):
        return True


# -- detection files ----------------------------------------------------------


def format_detection(inst: Instance) -> str:
    coords = " ".join(f"{v:.6f}" for v in inst.box)
    return f"label {inst.label} score {inst.score:.6f} box {coords}"


def write_detections(path, instances: Sequence[Instance]) -> None:
    text = "".join(format_detection(i) + "\n" for i in instances)
    Path(path).write_text(text, encoding="utf-8")


def read_detections(path) -> list[Instance]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 11 or parts[0] != "label" or parts[-9] != "score" or parts[-7] != "box":
            raise ParseError("expected 'label <name> score <s> box <6 floats>'", str(path), lineno)
        try:
            score = float(parts[-8])
            coords = [float(v) for v in parts[-6:]]
        except ValueError:
            raise ParseError("non-numeric score or box value", str(path), lineno) from None
        label = canonicalize(" ".join(parts[1:-9]))
        try:
            out.append(Instance(label, score, coords[:3], coords[3:]))
        except ValidationError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
    return out


def write_instance_points(path, instances: Sequence[Instance]) -> None:
    """Member points of each instance: ``GP1 <count>`` then ``x y z index`` lines."""
    rows = []
    for k, inst in enumerate(instances):
        if inst.points is None:
            continue
        rows.extend(f"{x:.6f} {y:.6f} {z:.6f} {k}" for x, y, z in inst.points)
    Path(path).write_text(f"GP1 {len(rows)}\n" + "".join(r + "\n" for r in rows), encoding="utf-8")


def read_instance_points(path, instances: Sequence[Instance]) -> list[Instance]:
    """Attach points from a ``GP1`` file to ``instances`` (matched by index)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("GP1 "):
        raise ParseError("expected header 'GP1 <count>'", str(path), 1)
    try:
        count = int(lines[0].split()[1])
        data = np.array([ln.split() for ln in lines[1:]], dtype=np.float64).reshape(-1, 4)
    except ValueError:
        raise ParseError("malformed point rows", str(path)) from None
    if data.shape[0] != count:
        raise ParseError(f"header declares {count} points, found {data.shape[0]}", str(path))
    idx = data[:, 3].astype(int)
    if count and (idx.min() < 0 or idx.max() >= len(instances)):
        raise ParseError("instance index out of range", str(path))
    out = []
    for k, inst in enumerate(instances):
        pts = data[idx == k, :3]
        out.append(Instance(inst.label, inst.score, inst.box_min, inst.box_max,
                            inst.support, pts.shape[0], pts))
    return out
