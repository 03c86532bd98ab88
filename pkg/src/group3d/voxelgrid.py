"""Voxel sets and the overlap predicates that gate fragment merging.

A point ``p`` falls in voxel ``floor(p / s)`` (componentwise, rounding toward
negative infinity). Voxel sets are stored as sorted unique int64 codes so
intersections and unions are plain sorted-array operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError
from .validation import check_positive

# 21 signed bits per axis; at 1 cm voxels that is +/- 10 km.
_BITS = 21
_OFFSET = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1


def voxel_keys(points, voxel_size: float) -> np.ndarray:
    """Integer voxel indices, shape (n, 3), one row per point (duplicates kept)."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not np.isfinite(P).all():
        bad = int(np.flatnonzero(~np.isfinite(P).all(axis=1))[0])
        raise ValidationError(f"cannot voxelize non-finite point at row {bad}")
    return np.floor(P / voxel_size).astype(np.int64)


def _pack(keys: np.ndarray) -> np.ndarray:
    if keys.size and (keys.min() < -_OFFSET or keys.max() >= _OFFSET):
        raise ValidationError(
            f"voxel index outside the supported range [-{_OFFSET}, {_OFFSET}); "
            "use a larger voxel size or recenter the scene"
        )
    k = keys + _OFFSET
    return (k[:, 0] << (2 * _BITS)) | (k[:, 1] << _BITS) | k[:, 2]


def _unpack(codes: np.ndarray) -> np.ndarray:
    out = np.empty((codes.size, 3), dtype=np.int64)
    out[:, 0] = (codes >> (2 * _BITS)) & _MASK
    out[:, 1] = (codes >> _BITS) & _MASK
    out[:, 2] = codes & _MASK
    return out - _OFFSET


@dataclass(frozen=True, eq=False)
class VoxelSet:
    """Set of voxel keys at a fixed voxel size."""

    codes: np.ndarray
    voxel_size: float

    def __post_init__(self):
        self.codes.setflags(write=False)

    @classmethod
    def from_keys(cls, keys, voxel_size: float) -> "VoxelSet":
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        return cls(np.unique(_pack(keys)), check_positive(voxel_size, "voxel_size"))

    @classmethod
    def empty(cls, voxel_size: float) -> "VoxelSet":
        return cls(np.zeros(0, dtype=np.int64), check_positive(voxel_size, "voxel_size"))

    def __len__(self) -> int:
        return int(self.codes.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelSet):
            return NotImplemented
        return self.voxel_size == other.voxel_size and np.array_equal(self.codes, other.codes)

    def __contains__(self, key) -> bool:
        code = _pack(np.asarray(key, dtype=np.int64).reshape(1, 3))[0]
        i = np.searchsorted(self.codes, code)
        return bool(i < self.codes.size and self.codes[i] == code)

    def keys(self) -> np.ndarray:
        """Voxel indices as an (n, 3) int64 array, lexicographically sorted."""
        return _unpack(self.codes)

    def to_set(self) -> set[tuple[int, int, int]]:
        return {tuple(int(c) for c in k) for k in self.keys()}

    def intersection_size(self, other: "VoxelSet") -> int:
        _check_same_size(self, other)
        return int(np.intersect1d(self.codes, other.codes, assume_unique=True).size)

    def union(self, other: "VoxelSet") -> "VoxelSet":
        _check_same_size(self, other)
        return VoxelSet(np.union1d(self.codes, other.codes), self.voxel_size)


def _check_same_size(a: VoxelSet, b: VoxelSet) -> None:
    if a.voxel_size != b.voxel_size:
        raise ConfigurationError(
            f"voxel sets built with different voxel sizes ({a.voxel_size} vs {b.voxel_size})"
        )


def voxelize(points, voxel_size: float) -> VoxelSet:
    """``{floor(p / s) | p in points}`` as a VoxelSet."""
    s = check_positive(voxel_size, "voxel_size")
    return VoxelSet(np.unique(_pack(voxel_keys(points, s))), s)


def voxel_iou(a: VoxelSet, b: VoxelSet) -> float:
    """``|A & B| / |A | B|``; 0 when both are empty."""
    inter = a.intersection_size(b)
    union = len(a) + len(b) - inter
    if union == 0:
        return 0.0
    return inter / union


def voxel_containment(b: VoxelSet, a: VoxelSet) -> float:
    """Fraction of ``b``'s voxels that are also in ``a``."""
    if len(b) == 0:
        raise ValidationError("containment of an empty voxel set is undefined")
    return a.intersection_size(b) / len(b)


def overlap(a: VoxelSet, b: VoxelSet, tau_iou: float, tau_cont: float) -> bool:
    """Geometric merge test: IoU(A, B) >= tau_iou or Cont(B -> A) >= tau_cont.

    ``a`` is the (usually larger) existing cluster, ``b`` the incoming fragment.
    """
    inter = a.intersection_size(b)
    if len(b) == 0:
        raise ValidationError("containment of an empty voxel set is undefined")
    union = len(a) + len(b) - inter
    iou = inter / union if union else 0.0
    return iou >= tau_iou or inter / len(b) >= tau_cont
