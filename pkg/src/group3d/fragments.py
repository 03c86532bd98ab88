"""3D fragment memory: one lifted point set per (frame, category mask)."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError, ProviderDataError, ValidationError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    SimilarityTransform,
    apply_transform,
    lift_mask,
)
from .validation import check_positive, check_unit_interval
from .vocabulary import SceneVocabulary, canonicalize
from .voxelgrid import VoxelSet, voxelize

logger = logging.getLogger(__name__)

MIN_FRAGMENT_POINTS = 5


@dataclass(frozen=True, eq=False)
class CategoryMask:
    frame_id: int
    category: str
    bits: np.ndarray
    s_query: float

    def __post_init__(self):
        check_unit_interval(self.s_query, "s_query")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValidationError("mask bits must be 2-D")
        object.__setattr__(self, "bits", bits)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape


@dataclass(frozen=True)
class FramePresence:
    """Per-category presence scores for one frame."""

    frame_id: int
    scores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for cat, s in self.scores.items():
            check_unit_interval(s, f"s_pres[{cat}]")

    def __getitem__(self, cat: str) -> float:
        try:
            return self.scores[cat]
        except KeyError:
            raise ProviderDataError(
                f"frame {self.frame_id} has no presence score for category {cat!r}"
            ) from None


@dataclass(frozen=True, eq=False)
class Fragment:
    points: np.ndarray
    category: str
    confidence: float
    frame_id: int
    voxels: VoxelSet
    extent: float

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FragmentMemory:
    fragments: tuple[Fragment, ...] = ()

    def __len__(self) -> int:
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)

    def __getitem__(self, i) -> Fragment:
        return self.fragments[i]


@dataclass(frozen=True, eq=False)
class FrameData:
    """Everything needed to lift one frame's masks."""

    frame_id: int
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: DepthMap
    masks: Sequence[CategoryMask]
    presence: FramePresence


def compose_confidence(s_query: float, s_pres: float) -> float:
    """Fragment confidence: query score times presence score."""
    return check_unit_interval(s_query, "s_query") * check_unit_interval(s_pres, "s_pres")


def aabb_volume(points: np.ndarray) -> float:
    if points.shape[0] == 0:
        return 0.0
    return float(np.prod(points.max(axis=0) - points.min(axis=0)))


def build_fragment(
    mask: CategoryMask,
    presence: FramePresence,
    depth: DepthMap,
    K: CameraIntrinsics,
    T: CameraPose,
    voxel_size: float,
    *,
    min_points: int = 1,
    transform: SimilarityTransform | None = None,
) -> Fragment | None:
    """Lift ``mask`` into a Fragment, or ``None`` if fewer than ``min_points`` survive.

    With ``transform`` set, the lifted points are mapped through it (used when
    poses and depth come from a reconstruction in its own frame and scale).
    """
    voxel_size = check_positive(voxel_size, "voxel_size")
    confidence = compose_confidence(mask.s_query, presence[mask.category])
    points = lift_mask(mask.bits, depth, K, T)
    if points.shape[0] < max(min_points, 1):
        return None
    if transform is not None:
        points = apply_transform(points, transform)
    points.setflags(write=False)
    return Fragment(
        points=points,
        category=mask.category,
        confidence=confidence,
        frame_id=mask.frame_id,
        voxels=voxelize(points, voxel_size),
        extent=aabb_volume(points),
    )


def build_fragment_memory(
    frames: Sequence[FrameData],
    vocab: SceneVocabulary,
    voxel_size: float,
    *,
    min_points: int = MIN_FRAGMENT_POINTS,
    transform: SimilarityTransform | None = None,
    n_jobs: int = 1,
) -> FragmentMemory:
    """Lift every mask of every frame.

    Fragments are ordered by frame id, then by the category's position in
    the vocabulary, then by mask order within the frame. Masks that lift to
    fewer than ``min_points`` points are dropped.
    """
    jobs = []
    for frame in sorted(frames, key=lambda f: f.frame_id):
        ordered = sorted(
            enumerate(frame.masks),
            key=lambda im: (_vocab_index(vocab, im[1], frame.frame_id), im[0]),
        )
        for _, mask in ordered:
            jobs.append((mask, frame))

    def lift(job):
        mask, frame = job
        return build_fragment(
            mask, frame.presence, frame.depth, frame.intrinsics, frame.pose, voxel_size,
            min_points=min_points, transform=transform,
        )

    if n_jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            built = list(pool.map(lift, jobs))
    else:
        built = [lift(j) for j in jobs]
    fragments = tuple(f for f in built if f is not None)
    logger.debug("lifted %d of %d masks into fragments", len(fragments), len(jobs))
    return FragmentMemory(fragments)


def _vocab_index(vocab: SceneVocabulary, mask: CategoryMask, frame_id: int) -> int:
    if mask.category not in vocab:
        raise ProviderDataError(
            f"frame {frame_id}: mask category {mask.category!r} is not in the scene vocabulary"
        )
    return vocab.index(mask.category)


# -- run-length mask files ---------------------------------------------------


def rle_encode(bits) -> list[tuple[int, int]]:
    """Runs of ones over the row-major flattened mask as ``(start, length)``."""
    flat = np.asarray(bits, dtype=bool).ravel()
    padded = np.concatenate([[False], flat, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, ends = edges[0::2], edges[1::2]
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def rle_decode(runs, height: int, width: int) -> np.ndarray:
    flat = np.zeros(height * width, dtype=bool)
    prev_end = 0
    for start, length in runs:
        if start < prev_end or length <= 0 or start + length > flat.size:
            raise ValueError(f"invalid run {start}:{length}")
        flat[start:start + length] = True
        prev_end = start + length
    return flat.reshape(height, width)


def format_rle(runs) -> str:
    return " ".join(f"{s}:{n}" for s, n in runs)


def parse_rle(line: str) -> list[tuple[int, int]]:
    runs = []
    for tok in line.split():
        s, sep, n = tok.partition(":")
        if not sep:
            raise ValueError(f"run {tok!r} is not 'start:length'")
        runs.append((int(s), int(n)))
    return runs


def write_mask_file(path, frame_id: int, shape, entries) -> None:
    """``entries``: iterable of ``(category, bits, s_query, s_pres)``."""
    h, w = shape
    lines = [f"frame {frame_id}", f"size {h} {w}"]
    for category, bits, s_query, s_pres in entries:
        lines.append(f"cat {category} {s_query!r} {s_pres!r}")
        lines.append(format_rle(rle_encode(bits)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mask_file(path) -> tuple[int, tuple[int, int], list[CategoryMask], FramePresence]:
    """Parse a per-frame mask file into masks and the frame's presence table.

    A category may be listed more than once (one entry per instance mask);
    repeated entries must agree on the presence score.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2:
        raise ParseError("expected 'frame' and 'size' header lines", str(path), len(lines) + 1)
    frame_id = _header_ints(lines[0], "frame", 1, path)[0]
    h, w = _header_ints(lines[1], "size", 2, path)
    if h <= 0 or w <= 0:
        raise ParseError("mask size must be positive", str(path), 2)
    if len(lines) % 2:
        raise ParseError("category entry without a run-length line", str(path), len(lines))
    masks: list[CategoryMask] = []
    presence: dict[str, float] = {}
    for i in range(2, len(lines), 2):
        lineno = i + 1
        parts = lines[i].split()
        if len(parts) < 4 or parts[0] != "cat":
            raise ParseError("expected 'cat <name> <s_query> <s_pres>'", str(path), lineno)
        category = canonicalize(" ".join(parts[1:-2]))
        if not category:
            raise ParseError("empty category name", str(path), lineno)
        try:
            s_query, s_pres = float(parts[-2]), float(parts[-1])
            check_unit_interval(s_query, "s_query")
            check_unit_interval(s_pres, "s_pres")
        except ValueError as exc:
            raise ParseError(f"bad scores: {exc}", str(path), lineno) from None
        if category in presence and presence[category] != s_pres:
            raise ParseError(
                f"conflicting presence scores for {category!r}", str(path), lineno
            )
        presence[category] = s_pres
        try:
            bits = rle_decode(parse_rle(lines[i + 1]), h, w)
        except ValueError as exc:
            raise ParseError(f"bad run-length encoding: {exc}", str(path), lineno + 1) from None
        masks.append(CategoryMask(frame_id, category, bits, s_query))
    return frame_id, (h, w), masks, FramePresence(frame_id, presence)


def _header_ints(line: str, keyword: str, lineno: int, path: Path) -> list[int]:
    parts = line.split()
    if not parts or parts[0] != keyword:
        raise ParseError(f"expected '{keyword}' header", str(path), lineno)
    try:
        values = [int(p) for p in parts[1:]]
    except ValueError:
        raise ParseError(f"non-integer value in '{keyword}' header", str(path), lineno) from None
    expected = 1 if keyword == "frame" else 2
    if len(values) != expected:
        raise ParseError(f"'{keyword}' header takes {expected} integer(s)", str(path), lineno)
    return values
