"""Scene directories: layout, loading, validation and frame sampling.

Layout (paths relative to the scene directory)::

    manifest.json          format tag, frame ids, image size, file hashes
    intrinsics.txt         frame <id> <fx> <fy> <cx> <cy> <width> <height>
    poses.txt              frame <id> <r00 .. r22> <t0 t1 t2>   (world -> camera)
    depth/<id>.gd1         GD1 depth maps
    masks/<id>.txt         run-length category masks
    vocab.txt              one comma-separated category line per frame
    groups.txt             grouping response (optional)
    gt_boxes.txt           ground-truth boxes (optional)
    gt_vertices.txt        ground-truth vertices (optional)
    reference/pose0.txt    reference first pose, estimated-pose scenes only
    reference/depth0.gd1   reference first depth, estimated-pose scenes only
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import LoadError, ParseError, ValidationError
from .evaluation import GroundTruthBox, GroundTruthVertexSet, read_gt_boxes, read_gt_vertices
from .fragments import FrameData, read_mask_file
from .geometry import CameraIntrinsics, CameraPose, DepthMap, read_depth

MANIFEST = "manifest.json"
SCENE_FORMAT = "group3d-scene"


@dataclass(frozen=True, eq=False)
class SceneBundle:
    frames: tuple[FrameData, ...]
    vocab_lines: tuple[str, ...]
    grouping_text: str | None = None
    gt_boxes: tuple[GroundTruthBox, ...] | None = None
    gt_vertices: GroundTruthVertexSet | None = None
    reference_pose0: CameraPose | None = None
    reference_depth0: DepthMap | None = None
    manifest: dict = field(default_factory=dict)

    @property
    def frame_ids(self) -> list[int]:
        return [f.frame_id for f in self.frames]


def sample_frame_indices(total: int, budget: int) -> list[int]:
    """Uniform, deterministic selection of ``budget`` of ``total`` frame positions."""
    if budget <= 0:
        raise ValidationError("frame budget must be positive")
    if total <= budget:
        return list(range(total))
    return [i * total // budget for i in range(budget)]


def depth_name(frame_id: int) -> str:
    return f"depth/{frame_id:06d}.gd1"


def mask_name(frame_id: int) -> str:
    return f"masks/{frame_id:06d}.txt"


def format_pose_line(frame_id: int, pose: CameraPose) -> str:
    vals = list(pose.rotation.reshape(-1)) + list(pose.translation)
    return f"frame {frame_id} " + " ".join(repr(float(v)) for v in vals)


def format_intrinsics_line(frame_id: int, K: CameraIntrinsics) -> str:
    return f"frame {frame_id} {K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r} {K.width} {K.height}"


def _parse_framed(path: Path, n_values: int) -> dict[int, list[str]]:
    out: dict[int, list[str]] = {}
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "frame" or len(parts) != n_values + 2:
            raise ParseError(f"expected 'frame <id>' and {n_values} values", str(path), lineno)
        try:
            fid = int(parts[1])
        except ValueError:
            raise ParseError("non-integer frame id", str(path), lineno) from None
        if fid in out:
            raise ParseError(f"duplicate frame id {fid}", str(path), lineno)
        out[fid] = parts[2:] + [str(lineno)]
    return out


def read_poses(path) -> dict[int, CameraPose]:
    path = Path(path)
    poses = {}
    for fid, vals in _parse_framed(path, 12).items():
        *nums, lineno = vals
        try:
            arr = np.array([float(v) for v in nums])
            poses[fid] = CameraPose(arr[:9].reshape(3, 3), arr[9:])
        except (ValueError, ValidationError) as exc:
            raise ParseError(f"bad pose: {exc}", str(path), int(lineno)) from None
    return poses


def read_intrinsics(path) -> dict[int, CameraIntrinsics]:
    path = Path(path)
    out = {}
    for fid, vals in _parse_framed(path, 6).items():
        *nums, lineno = vals
        try:
            fx, fy, cx, cy = (float(v) for v in nums[:4])
            out[fid] = CameraIntrinsics(fx, fy, cx, cy, int(nums[4]), int(nums[5]))
        except ValueError as exc:
            raise ParseError(f"bad intrinsics: {exc}", str(path), int(lineno)) from None
    return out


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise LoadError(f"missing file: {path}") from None


def _require(path: Path) -> Path:
    if not path.is_file():
        raise LoadError(f"missing file: {path}")
    return path


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(root, info: dict) -> None:
    """Write ``manifest.json`` listing every file under ``root`` with its hash."""
    root = Path(root)
    files = {
        p.relative_to(root).as_posix(): file_sha256(p)
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != MANIFEST
    }
    doc = {"format": SCENE_FORMAT, "version": 1, **info, "files": files}
    (root / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(root) -> dict:
    path = _require(Path(root) / MANIFEST)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    if doc.get("format") != SCENE_FORMAT:
        raise ParseError(f"not a {SCENE_FORMAT} manifest", str(path))
    return doc


def load_scene(path, frame_budget: int | None = None, verify_hashes: bool = False) -> SceneBundle:
    """Load and validate a scene directory.

    Frames are taken in manifest order and, when ``frame_budget`` is given,
    uniformly subsampled. A missing ``groups.txt`` leaves ``grouping_text``
    as None, which downstream means all-singleton groups.
    """
    root = Path(path)
    if not root.is_dir():
        raise LoadError(f"scene directory not found: {root}")
    manifest = read_manifest(root)
    if verify_hashes:
        for rel, digest in manifest.get("files", {}).items():
            if file_sha256(_require(root / rel)) != digest:
                raise ValidationError(f"content hash mismatch for {rel}")
    frame_ids = [int(f) for f in manifest.get("frames", [])]
    intrinsics = read_intrinsics(_require(root / "intrinsics.txt"))
    poses = read_poses(_require(root / "poses.txt"))
    vocab_lines = _read_text(root / "vocab.txt").splitlines()
    if len(vocab_lines) != len(frame_ids):
        raise ValidationError(
            f"vocab.txt has {len(vocab_lines)} lines for {len(frame_ids)} frames"
        )
    keep = sample_frame_indices(len(frame_ids), frame_budget) if frame_budget else range(len(frame_ids))

    frames = []
    shape = None
    for pos in keep:
        fid = frame_ids[pos]
        if fid not in intrinsics or fid not in poses:
            raise ValidationError(f"frame {fid} lacks intrinsics or a pose")
        K = intrinsics[fid]
        depth = read_depth(_require(root / depth_name(fid)))
        mask_path = _require(root / mask_name(fid))
        mfid, mshape, masks, presence = read_mask_file(mask_path)
        if mfid != fid:
            raise ParseError(f"mask file declares frame {mfid}, expected {fid}", str(mask_path), 1)
        for s, what in ((depth.shape, "depth"), (mshape, "masks"), (K.shape, "intrinsics")):
            if shape is None:
                shape = s
            if s != shape:
                raise ValidationError(f"frame {fid}: {what} resolution {s} differs from {shape}")
        frames.append(FrameData(fid, K, poses[fid], depth, tuple(masks), presence))

    grouping = root / "groups.txt"
    gt_boxes = root / "gt_boxes.txt"
    gt_vertices = root / "gt_vertices.txt"
    ref_pose = ref_depth = None
    if (root / "reference").is_dir():
        ref_poses = read_poses(_require(root / "reference" / "pose0.txt"))
        if len(ref_poses) != 1:
            raise ValidationError("reference/pose0.txt must hold exactly one pose")
        ref_pose = next(iter(ref_poses.values()))
        ref_depth = read_depth(_require(root / "reference" / "depth0.gd1"))
    return SceneBundle(
        frames=tuple(frames),
        vocab_lines=tuple(vocab_lines[p] for p in keep),
        grouping_text=grouping.read_text(encoding="utf-8") if grouping.is_file() else None,
        gt_boxes=tuple(read_gt_boxes(gt_boxes)) if gt_boxes.is_file() else None,
        gt_vertices=read_gt_vertices(gt_vertices) if gt_vertices.is_file() else None,
        reference_pose0=ref_pose,
        reference_depth0=ref_depth,
        manifest=manifest,
    )


def read_vocab_fixture(path) -> list[str]:
    return _read_text(Path(path)).splitlines()


def load_ground_truth(root) -> tuple[list[GroundTruthBox], GroundTruthVertexSet | None]:
    root = Path(root)
    boxes = read_gt_boxes(_require(root / "gt_boxes.txt"))
    verts = root / "gt_vertices.txt"
    return boxes, (read_gt_vertices(verts) if verts.is_file() else None)

