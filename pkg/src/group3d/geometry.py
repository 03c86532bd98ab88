"""Pinhole camera geometry: back-projection, depth filtering, pose alignment.

Poses map world to camera coordinates, ``x_cam = R @ x_world + t``. Pixel
``(u, v)`` addresses column ``u`` and row ``v``; the ray through it is
``K^-1 [u, v, 1]`` with unit z, so a depth value is the camera-frame z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigurationError, ParseError, ValidationError
from .validation import check_points, check_rotation

DEPTH_MAGIC = b"GD1"
MAD_SCALE = 1.4826
MAD_CUTOFF = 3.0
MAD_ZERO_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigurationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigurationError("image dimensions must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,) or not np.isfinite(t).all():
            raise ValidationError("translation must be a finite 3-vector")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, ``-R^T t``."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in meters, shape (height, width). Non-positive or
    non-finite entries are invalid."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValidationError(f"depth map must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def valid(self) -> np.ndarray:
        v = self.values
        return np.isfinite(v) & (v > 0)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``p -> scale * R @ p + t``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))


def _is_valid_depth(d) -> bool:
    return math.isfinite(d) and d > 0


def back_project(u, v, depth, K: CameraIntrinsics, T: CameraPose):
    """Lift one pixel to a world point.

    Returns ``None`` for an invalid depth; callers skip such pixels.
    """
    if not _is_valid_depth(depth):
        return None
    ray = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    return T.rotation.T @ (depth * ray - T.translation)


def back_project_pixels(u, v, depth, K: CameraIntrinsics, T: CameraPose) -> np.ndarray:
    """Vectorized ``back_project`` for arrays of valid pixels. Returns (n, 3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    cam = np.stack([(u - K.cx) / K.fx * d, (v - K.cy) / K.fy * d, d], axis=-1)
    # row-vector form of R^T (x - t)
    return (cam - T.translation) @ T.rotation


def project(points, K: CameraIntrinsics, T: CameraPose):
    """Project world points; returns ``(u, v, depth)`` arrays."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = P @ T.rotation.T + T.translation
    z = cam[:, 2]
    return K.fx * cam[:, 0] / z + K.cx, K.fy * cam[:, 1] / z + K.cy, z


def _mad_pass(values: np.ndarray) -> np.ndarray:
    med = np.median(values)
    dev = np.abs(values - med)
    mad = np.median(dev)
    if mad == 0:
        return dev <= MAD_ZERO_TOL
    return dev <= MAD_CUTOFF * MAD_SCALE * mad


def filter_depth_outliers(depths) -> np.ndarray:
    """Indices of depths that survive invalid-entry removal and the MAD rule.

    The median +/- 3 scaled-MAD rule is applied repeatedly until nothing
    more is removed, which makes the filter idempotent.
    """
    d = np.asarray(depths, dtype=np.float64).reshape(-1)
    keep = np.flatnonzero(np.isfinite(d) & (d > 0))
    while keep.size:
        inliers = _mad_pass(d[keep])
        if inliers.all():
            break
        keep = keep[inliers]
    return keep


def lift_mask(mask, depth: DepthMap, K: CameraIntrinsics, T: CameraPose) -> np.ndarray:
    """Back-project the selected pixels of a binary mask, row-major order.

    Invalid depths are skipped and depth outliers within the mask region are
    suppressed. Returns an (n, 3) array, possibly empty.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != depth.shape or m.shape != K.shape:
        raise ValidationError(
            f"mask {m.shape}, depth {depth.shape} and intrinsics {K.shape} disagree"
        )
    rows, cols = np.nonzero(m)  # row-major
    d = depth.values[rows, cols]
    keep = filter_depth_outliers(d)
    if keep.size == 0:
        return np.zeros((0, 3))
    return back_project_pixels(cols[keep], rows[keep], d[keep], K, T)


def align_to_reference(
    pred_pose0: CameraPose, ref_pose0: CameraPose, pred_depth0: DepthMap, ref_depth0: DepthMap
) -> SimilarityTransform:
    """Similarity taking the predicted world frame onto the reference frame.

    Scale is the median ratio ``ref / pred`` over pixels valid in both
    first-frame depth maps. The rigid part makes the first predicted camera
    coincide with the first reference camera.
    """
    if pred_depth0.shape != ref_depth0.shape:
        raise ValidationError(
            f"depth maps differ in shape: {pred_depth0.shape} vs {ref_depth0.shape}"
        )
    both = pred_depth0.valid() & ref_depth0.valid()
    if not both.any():
        raise AlignmentError("no pixel has valid depth in both first-frame depth maps")
    ratio = ref_depth0.values[both].astype(np.float64) / pred_depth0.values[both].astype(np.float64)
    scale = float(np.median(ratio))
    Rr, tr = ref_pose0.rotation, ref_pose0.translation
    Rp, tp = pred_pose0.rotation, pred_pose0.translation
    # ref camera coords = scale * pred camera coords
    rotation = Rr.T @ Rp
    translation = Rr.T @ (scale * tp - tr)
    return SimilarityTransform(scale, rotation, translation)


def apply_transform(points, S: SimilarityTransform) -> np.ndarray:
    P = check_points(points)
    return S.scale * (P @ S.rotation.T) + S.translation


def transform_pose(T: CameraPose, S: SimilarityTransform) -> CameraPose:
    """Express a predicted-frame pose in the aligned frame (depths scale by S.scale)."""
    R = T.rotation @ S.rotation.T
    t = S.scale * T.translation - R @ S.translation
    return CameraPose(R, t)


def read_depth(path) -> DepthMap:
    """Read a ``GD1`` depth file: ``GD1 <w> <h>\\n`` then float32 LE, row-major."""
    path = Path(path)
    data = path.read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("missing header line", str(path), 1)
    parts = data[:nl].split()
    if len(parts) != 3 or parts[0] != DEPTH_MAGIC:
        raise ParseError("expected header 'GD1 <width> <height>'", str(path), 1)
    try:
        w, h = int(parts[1]), int(parts[2])
    except ValueError:
        raise ParseError("non-integer image size in header", str(path), 1) from None
    if w <= 0 or h <= 0:
        raise ParseError("image size must be positive", str(path), 1)
    body = data[nl + 1:]
    expected = 4 * w * h
    if len(body) != expected:
        raise ParseError(
            f"expected {expected} bytes of depth payload, found {len(body)}", str(path)
        )
    values = np.frombuffer(body, dtype="<f4").reshape(h, w)
    return DepthMap(values)


def write_depth(path, depth) -> None:
    values = np.asarray(depth.values if isinstance(depth, DepthMap) else depth)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(b"GD1 %d %d\n" % (w, h))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
