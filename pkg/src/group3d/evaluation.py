"""Detection and instance-segmentation metrics.

Average precision uses greedy matching (predictions by descending score,
each taking the unmatched ground truth of highest IoU at or above the
threshold, lowest index on ties) and the all-point interpolated area under
the precision/recall staircase. Classes without ground truth are left out
of the mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EvaluationError, ParseError, ValidationError
from .evidence import Instance
from .validation import check_positive
from .vocabulary import canonicalize


@dataclass(frozen=True, eq=False)
class GroundTruthBox:
    label: str
    box_min: np.ndarray
    box_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.box_min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.box_max, dtype=np.float64).reshape(3)
        if (lo > hi).any():
            raise ValidationError("box min corner exceeds max corner")
        object.__setattr__(self, "box_min", lo)
        object.__setattr__(self, "box_max", hi)

    @property
    def box(self) -> np.ndarray:
        return np.concatenate([self.box_min, self.box_max])


@dataclass(frozen=True, eq=False)
class GroundTruthVertexSet:
    vertices: np.ndarray
    instance_ids: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        ids = np.asarray(self.instance_ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != v.shape[0] or len(self.labels) != v.shape[0]:
            raise ValidationError("vertices, instance ids and labels differ in length")
        if ids.size and ids.min() < 0:
            raise ValidationError("instance ids must be non-negative")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "instance_ids", ids)
        object.__setattr__(self, "labels", tuple(self.labels))

    def instances(self) -> dict[int, tuple[str, np.ndarray]]:
        """GT instance id -> (label, vertex indices)."""
        out = {}
        for gid in np.unique(self.instance_ids):
            idx = np.flatnonzero(self.instance_ids == gid)
            out[int(gid)] = (self.labels[idx[0]], idx)
        return out


def _as_box(b) -> np.ndarray:
    if hasattr(b, "box"):
        return np.asarray(b.box, dtype=np.float64)
    arr = np.asarray(b, dtype=np.float64).reshape(-1)
    if arr.shape != (6,):
        raise ValidationError("a box is [xmin, ymin, zmin, xmax, ymax, zmax]")
    return arr


def box_iou_3d(a, b) -> float:
    """Axis-aligned 3D IoU. Zero-volume boxes always score 0."""
    a, b = _as_box(a), _as_box(b)
    lo = np.maximum(a[:3], b[:3])
    hi = np.minimum(a[3:], b[3:])
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    vol_a = float(np.prod(a[3:] - a[:3]))
    vol_b = float(np.prod(b[3:] - b[:3]))
    union = vol_a + vol_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def greedy_match(scores: Sequence[float], iou: np.ndarray, iou_thr: float) -> np.ndarray:
    """True-positive flags, in descending-score order (stable on ties)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_gt = iou.shape[1] if iou.ndim == 2 else 0
    taken = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(len(order), dtype=bool)
    for rank, i in enumerate(order):
        best, best_iou = -1, -1.0
        for j in range(n_gt):
            if not taken[j] and iou[i, j] >= iou_thr and iou[i, j] > best_iou:
                best, best_iou = j, iou[i, j]
        if best >= 0:
            taken[best] = True
            tp[rank] = True
    return tp


def ap_from_flags(tp: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP from ranked true-positive flags."""
    if n_gt == 0:
        return float("nan")
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, tp.size + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(preds, gts, iou_thr: float) -> float:
    """AP of one class.

    ``preds`` are ``(score, box)`` pairs or Instances, ``gts`` boxes or
    GroundTruthBoxes. Returns NaN when there is no ground truth.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValidationError(f"IoU threshold must lie in (0, 1], got {iou_thr}")
    scores, boxes = [], []
    for p in preds:
        if isinstance(p, Instance):
            scores.append(p.score)
            boxes.append(p.box)
        else:
            scores.append(float(p[0]))
            boxes.append(_as_box(p[1]))
    gt_boxes = [_as_box(g) for g in gts]
    iou = np.array([[box_iou_3d(b, g) for g in gt_boxes] for b in boxes]).reshape(len(boxes), len(gt_boxes))
    return ap_from_flags(greedy_match(scores, iou, iou_thr), len(gt_boxes))


def per_class_ap(preds: Sequence[Instance], gts: Sequence[GroundTruthBox], iou_thr: float) -> dict[str, float]:
    classes = sorted({g.label for g in gts})
    return {
        c: average_precision([p for p in preds if p.label == c], [g for g in gts if g.label == c], iou_thr)
        for c in classes
    }


def mean_ap(preds: Sequence[Instance], gts: Sequence[GroundTruthBox], iou_thr: float) -> float:
    """Unweighted mean of per-class AP over classes present in the ground truth."""
    table = per_class_ap(preds, gts, iou_thr)
    if not table:
        raise EvaluationError("ground truth has no classes")
    return float(np.mean(list(table.values())))


# -- instance segmentation via label transfer ----------------------------------


@dataclass(frozen=True, eq=False)
class VertexAssignment:
    """Per-vertex predicted instance index (-1 = unassigned) plus the
    label and score of every predicted instance."""

    instance_ids: np.ndarray
    labels: tuple[str, ...]
    scores: tuple[float, ...]
    distances: np.ndarray


def transfer_instance_labels(
    instances: Sequence[Instance],
    gt: GroundTruthVertexSet,
    radius: float = 0.05,
    require_box: bool = True,
) -> VertexAssignment:
    """Give each GT vertex the instance owning its nearest predicted point.

    The assignment holds only if that point is closer than ``radius`` and,
    with ``require_box``, the vertex lies inside the instance's box.
    """
    radius = check_positive(radius, "radius")
    n = gt.vertices.shape[0]
    ids = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, np.inf)
    labels = tuple(i.label for i in instances)
    scores = tuple(float(i.score) for i in instances)
    chunks = [i.points for i in instances if i.points is not None and len(i.points)]
    if not chunks or n == 0:
        return VertexAssignment(ids, labels, scores, dist)
    owner = np.concatenate([
        np.full(len(inst.points), k) for k, inst in enumerate(instances)
        if inst.points is not None and len(inst.points)
    ])
    tree = cKDTree(np.concatenate(chunks))
    dist, nearest = tree.query(gt.vertices, k=1)
    cand = owner[nearest]
    ok = dist < radius
    if require_box:
        lo = np.stack([instances[k].box_min for k in cand]) if n else np.zeros((0, 3))
        hi = np.stack([instances[k].box_max for k in cand]) if n else np.zeros((0, 3))
        ok &= ((gt.vertices >= lo) & (gt.vertices <= hi)).all(axis=1)
    ids[ok] = cand[ok]
    return VertexAssignment(ids, labels, scores, dist)


def instance_seg_per_class_ap(assign: VertexAssignment, gt: GroundTruthVertexSet, iou_thr: float) -> dict[str, float]:
    gt_inst = gt.instances()
    gt_by_class: dict[str, list[np.ndarray]] = {}
    for label, idx in gt_inst.values():
        gt_by_class.setdefault(label, []).append(idx)
    pred_masks = {}
    for k in range(len(assign.labels)):
        idx = np.flatnonzero(assign.instance_ids == k)
        if idx.size:
            pred_masks[k] = idx
    table = {}
    for label in sorted(gt_by_class):
        gts = gt_by_class[label]
        preds = [k for k in sorted(pred_masks) if assign.labels[k] == label]
        iou = np.zeros((len(preds), len(gts)))
        for a, k in enumerate(preds):
            for b, g in enumerate(gts):
                inter = np.intersect1d(pred_masks[k], g, assume_unique=True).size
                union = pred_masks[k].size + g.size - inter
                iou[a, b] = inter / union
        scores = [assign.scores[k] for k in preds]
        table[label] = ap_from_flags(greedy_match(scores, iou, iou_thr), len(gts))
    return table


def instance_seg_ap(assign: VertexAssignment, gt: GroundTruthVertexSet, iou_thr: float) -> float:
    """Class-mean AP of transferred vertex instances (simplified ScanNet-style
    protocol: no score threshold, no minimum region size)."""
    table = instance_seg_per_class_ap(assign, gt, iou_thr)
    if not table:
        raise EvaluationError("ground truth has no classes")
    return float(np.mean(list(table.values())))


# -- files and reports ------------------------------------------------------------


def write_gt_boxes(path, boxes: Iterable[GroundTruthBox]) -> None:
    lines = [f"label {b.label} box " + " ".join(repr(float(v)) for v in b.box) for b in boxes]
    Path(path).write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def read_gt_boxes(path) -> list[GroundTruthBox]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 9 or parts[0] != "label" or parts[-7] != "box":
            raise ParseError("expected 'label <name> box <6 floats>'", str(path), lineno)
        try:
            coords = [float(v) for v in parts[-6:]]
            out.append(GroundTruthBox(canonicalize(" ".join(parts[1:-7])), coords[:3], coords[3:]))
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
    return out


def write_gt_vertices(path, gt: GroundTruthVertexSet) -> None:
    rows = [
        f"{x!r} {y!r} {z!r} {int(i)} {lab}"
        for (x, y, z), i, lab in zip(gt.vertices.tolist(), gt.instance_ids, gt.labels)
    ]
    Path(path).write_text(f"GV1 {len(rows)}\n" + "".join(r + "\n" for r in rows), encoding="utf-8")


def read_gt_vertices(path) -> GroundTruthVertexSet:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != "GV1":
        raise ParseError("expected header 'GV1 <count>'", str(path), 1)
    try:
        count = int(head[1])
    except ValueError:
        raise ParseError("non-integer vertex count", str(path), 1) from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != count:
        raise ParseError(f"header declares {count} vertices, found {len(body)}", str(path))
    verts, ids, labels = [], [], []
    for lineno, line in enumerate(body, start=2):
        parts = line.split()
        if len(parts) < 5:
            raise ParseError("expected 'x y z instance_id label'", str(path), lineno)
        try:
            verts.append([float(p) for p in parts[:3]])
            ids.append(int(parts[3]))
        except ValueError:
            raise ParseError("non-numeric vertex field", str(path), lineno) from None
        labels.append(canonicalize(" ".join(parts[4:])))
    return GroundTruthVertexSet(np.array(verts).reshape(-1, 3), np.array(ids, dtype=np.int64), tuple(labels))


def evaluate(
    preds: Sequence[Instance],
    gt_boxes: Sequence[GroundTruthBox],
    thresholds: Sequence[float] = (0.25, 0.5),
    gt_vertices: GroundTruthVertexSet | None = None,
    radius: float = 0.05,
) -> dict[str, float]:
    """Flat ``metric -> value`` dict (per-class AP and means at each threshold)."""
    results: dict[str, float] = {}
    for thr in thresholds:
        table = per_class_ap(preds, gt_boxes, thr)
        if not table:
            raise EvaluationError("ground truth has no classes")
        for c, ap in table.items():
            results[f"AP@{thr:.2f}/{c}"] = ap
        results[f"mAP@{thr:.2f}"] = float(np.mean(list(table.values())))
    if gt_vertices is not None:
        assign = transfer_instance_labels(preds, gt_vertices, radius)
        for thr in thresholds:
            table = instance_seg_per_class_ap(assign, gt_vertices, thr)
            if not table:
                raise EvaluationError("ground truth has no classes")
            for c, ap in table.items():
                results[f"inst_AP@{thr:.2f}/{c}"] = ap
            results[f"inst_mAP@{thr:.2f}"] = float(np.mean(list(table.values())))
    return results


def format_report(results: dict[str, float]) -> str:
    """Human-readable table followed by ``metric value`` lines."""
    thresholds = sorted({k.split("@")[1].split("/")[0] for k in results})
    classes = sorted({k.split("/", 1)[1] for k in results if "/" in k and k.startswith("AP@")})
    width = max([len(c) for c in classes] + [8])
    out = ["class".ljust(width) + "".join(f"  AP@{t}" for t in thresholds)]
    for c in classes:
        out.append(c.ljust(width) + "".join(f"  {results.get(f'AP@{t}/{c}', float('nan')):7.4f}" for t in thresholds))
    out.append("mean".ljust(width) + "".join(f"  {results[f'mAP@{t}']:7.4f}" for t in thresholds))
    if any(k.startswith("inst_") for k in results):
        out.append("")
        out.append("instance segmentation (label transfer, simplified per-class AP)")
        out.append("mean".ljust(width) + "".join(f"  {results[f'inst_mAP@{t}']:7.4f}" for t in thresholds))
    out.append("")
    out.extend(f"{k.replace(' ', '_')} {v:.6f}" for k, v in results.items())
    return "\n".join(out) + "\n"
