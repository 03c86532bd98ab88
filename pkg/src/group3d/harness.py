"""Deterministic synthetic scenes with exact geometry.

Objects are axis-aligned boxes resting in an axis-aligned room. Cameras sit
on a horizontal circle inside the room, looking at a common target. Depth is
rendered per pixel by ray/box intersection, so lifting a rendered pixel
lands back on the surface it came from; masks are the pixels whose nearest
hit is a given object. Everything random is drawn from one seeded generator.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ValidationError
from .evaluation import GroundTruthBox, GroundTruthVertexSet, write_gt_boxes, write_gt_vertices
from .fragments import write_mask_file
from .geometry import CameraIntrinsics, CameraPose, DepthMap, write_depth
from .scene import (
    depth_name,
    format_intrinsics_line,
    format_pose_line,
    mask_name,
    write_manifest,
)
from .vocabulary import DEFAULT_K

BACKGROUND = -1

LABEL_POOL = (
    "chair", "table", "sofa", "bed", "cabinet", "bookshelf", "desk", "toilet",
    "sink", "dresser", "nightstand", "lamp", "monitor", "bathtub", "refrigerator",
    "piano", "stool", "ottoman", "trash can", "washing machine",
)

SYNONYM_POOL = (
    ("chair", "armchair", "seat"),
    ("sofa", "couch"),
    ("table", "desk", "counter"),
    ("cabinet", "cupboard"),
    ("bookshelf", "shelf", "bookcase"),
    ("bed", "mattress"),
    ("trash can", "bin"),
    ("monitor", "screen", "display"),
    ("dresser", "drawer"),
    ("stool", "ottoman", "footrest"),
)


@dataclass(frozen=True)
class ObjectSpec:
    label: str
    box_min: tuple[float, float, float]
    box_max: tuple[float, float, float]
    synonyms: tuple[str, ...] = ()

    @property
    def group(self) -> tuple[str, ...]:
        """The label plus its synonyms, label first."""
        return (self.label,) + tuple(s for s in self.synonyms if s != self.label)


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple[ObjectSpec, ...]
    room_min: tuple[float, float, float] = (-3.0, -3.0, 0.0)
    room_max: tuple[float, float, float] = (3.0, 3.0, 3.0)
    n_cameras: int = 32
    orbit_radius: float = 2.7
    orbit_height: float = 2.3
    target: tuple[float, float, float] = (0.0, 0.0, 0.4)
    fov_deg: float = 60.0
    image_size: tuple[int, int] = (64, 64)
    seed: int = 0

    def validate(self) -> None:
        rmin, rmax = np.array(self.room_min), np.array(self.room_max)
        if (rmin >= rmax).any():
            raise ValidationError("room min corner must be below its max corner")
        for ob in self.objects:
            lo, hi = np.array(ob.box_min), np.array(ob.box_max)
            if (lo >= hi).any():
                raise ValidationError(f"object {ob.label!r} has an empty box")
            if (lo < rmin).any() or (hi > rmax).any():
                raise ValidationError(f"object {ob.label!r} lies outside the room")
        if self.n_cameras < 1:
            raise ValidationError("need at least one camera")
        h, w = self.image_size
        if h < 1 or w < 1:
            raise ValidationError("image size must be positive")
        for c in camera_centers(self):
            if (c <= rmin).any() or (c >= rmax).any():
                raise ValidationError("camera orbit leaves the room")
            for ob in self.objects:
                if (c >= ob.box_min).all() and (c <= ob.box_max).all():
                    raise ValidationError(f"a camera sits inside object {ob.label!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        doc = dict(doc)
        doc["objects"] = tuple(
            ObjectSpec(o["label"], tuple(o["box_min"]), tuple(o["box_max"]), tuple(o.get("synonyms", ())))
            for o in doc["objects"]
        )
        for key in ("room_min", "room_max", "target", "image_size"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NoiseSpec:
    """``label_swap``: probability that a mask's label is redrawn uniformly
    from its object's synonym group (the true label included).
    ``depth_sigma``: Gaussian depth noise in meters.
    ``jitter``: query scores are ``1 - U(0, jitter)``."""

    label_swap: float = 0.0
    depth_sigma: float = 0.0
    jitter: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.label_swap <= 1.0:
            raise ValidationError("label_swap must lie in [0, 1]")
        if self.depth_sigma < 0:
            raise ValidationError("depth_sigma must be non-negative")
        if not 0.0 <= self.jitter <= 1.0:
            raise ValidationError("jitter must lie in [0, 1]")


@dataclass(eq=False)
class SyntheticFrame:
    frame_id: int
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: np.ndarray
    object_ids: np.ndarray
    masks: list[tuple[str, np.ndarray, float, float]] = field(default_factory=list)
    mask_objects: list[int] = field(default_factory=list)
    vocab_line: str = ""


@dataclass(eq=False)
class SyntheticScene:
    spec: SceneSpec
    noise: NoiseSpec
    frames: list[SyntheticFrame]
    gt_boxes: list[GroundTruthBox]
    gt_vertices: GroundTruthVertexSet
    grouping_text: str
    pose_mode: str = "given"
    reference_pose0: CameraPose | None = None
    reference_depth0: np.ndarray | None = None
    dropped_masks: int = 0

    @property
    def n_objects(self) -> int:
        return len(self.spec.objects)


# -- cameras and rendering ------------------------------------------------------


def camera_centers(spec: SceneSpec) -> np.ndarray:
    angles = 2 * np.pi * np.arange(spec.n_cameras) / spec.n_cameras
    tx, ty, _ = spec.target
    return np.stack([
        tx + spec.orbit_radius * np.cos(angles),
        ty + spec.orbit_radius * np.sin(angles),
        np.full(spec.n_cameras, spec.orbit_height),
    ], axis=1)


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> CameraPose:
    """World-to-camera pose with +z toward ``target`` and +y pointing down."""
    c = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - c
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return CameraPose(R, -R @ c)


def make_intrinsics(spec: SceneSpec) -> CameraIntrinsics:
    h, w = spec.image_size
    f = (w / 2) / np.tan(np.radians(spec.fov_deg) / 2)
    return CameraIntrinsics(float(f), float(f), (w - 1) / 2, (h - 1) / 2, w, h)


def _slab(origin, dirs, lo, hi):
    """Entry/exit ray parameters against an AABB, per ray."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (np.asarray(lo) - origin) * inv
        t2 = (np.asarray(hi) - origin) * inv
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
    return tmin.max(axis=1), tmax.min(axis=1)


def render(spec: SceneSpec, K: CameraIntrinsics, T: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Depth (camera z) and nearest-object id per pixel; id -1 is the room."""
    h, w = K.height, K.width
    v, u = np.mgrid[0:h, 0:w]
    rays_cam = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u, dtype=float)], axis=-1)
    dirs = rays_cam.reshape(-1, 3) @ T.rotation  # rows are R^T d
    origin = T.center
    best = np.full(h * w, np.inf)
    ids = np.full(h * w, BACKGROUND, dtype=np.int64)
    for k, ob in enumerate(spec.objects):
        tnear, tfar = _slab(origin, dirs, ob.box_min, ob.box_max)
        hit = (tnear <= tfar) & (tnear > 0) & (tnear < best)
        best[hit] = tnear[hit]
        ids[hit] = k
    _, t_room = _slab(origin, dirs, spec.room_min, spec.room_max)
    room = ids == BACKGROUND
    best[room] = t_room[room]
    depth = np.where(np.isfinite(best) & (best > 0), best, 0.0)
    return depth.reshape(h, w), ids.reshape(h, w)


def visibility_report(spec: SceneSpec) -> np.ndarray:
    """Visible pixel count per (frame, object), shape (n_cameras, n_objects)."""
    spec.validate()
    K = make_intrinsics(spec)
    out = np.zeros((spec.n_cameras, len(spec.objects)), dtype=np.int64)
    for f, c in enumerate(camera_centers(spec)):
        _, ids = render(spec, K, look_at(c, spec.target))
        counts = np.bincount(ids[ids >= 0].ravel(), minlength=len(spec.objects))
        out[f] = counts
    return out


# -- ground truth -------------------------------------------------------------


def sample_surface(ob: ObjectSpec, spacing: float, rng: np.random.Generator) -> np.ndarray:
    """Jittered-grid samples on the five faces other than the bottom."""
    lo, hi = np.array(ob.box_min, dtype=float), np.array(ob.box_max, dtype=float)
    pts = []
    faces = [(2, hi[2])] + [(a, v) for a in (0, 1) for v in (lo[a], hi[a])]
    for axis, value in faces:
        a, b = [i for i in range(3) if i != axis]
        na = max(1, int(np.ceil((hi[a] - lo[a]) / spacing)))
        nb = max(1, int(np.ceil((hi[b] - lo[b]) / spacing)))
        ga, gb = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
        ua = (ga.ravel() + rng.random(ga.size)) / na
        ub = (gb.ravel() + rng.random(gb.size)) / nb
        p = np.empty((ua.size, 3))
        p[:, axis] = value
        p[:, a] = lo[a] + ua * (hi[a] - lo[a])
        p[:, b] = lo[b] + ub * (hi[b] - lo[b])
        pts.append(p)
    return np.concatenate(pts)


def grouping_text_for(spec: SceneSpec) -> str:
    lines, seen = [], set()
    for ob in spec.objects:
        members = ob.group
        if len(members) < 2 or frozenset(members) in seen:
            continue
        seen.add(frozenset(members))
        lines.append(f"group{len(lines)}: [{', '.join(members)}]")
    return "".join(ln + "\n" for ln in lines)


# -- generation ---------------------------------------------------------------


def _random_similarity(rng: np.random.Generator):
    q = float(rng.uniform(0.5, 2.0))
    R = Rotation.random(random_state=rng).as_matrix()
    t = rng.uniform(-2.0, 2.0, size=3)
    return q, R, t


def generate_scene(
    spec: SceneSpec,
    noise: NoiseSpec = NoiseSpec(),
    *,
    pose_mode: str = "given",
    k: int = DEFAULT_K,
    vertex_spacing: float = 0.04,
) -> SyntheticScene:
    """Render every camera and derive provider-style outputs.

    With ``pose_mode="estimated"`` the poses and depths are re-expressed in a
    random similarity frame (as a reconstruction would return them) and the
    true first pose and depth are kept as the alignment reference.
    """
    spec.validate()
    if pose_mode not in ("given", "estimated"):
        raise ValidationError(f"unknown pose mode {pose_mode!r}")
    rng = np.random.default_rng(spec.seed)
    K = make_intrinsics(spec)
    frames = []
    for fid, c in enumerate(camera_centers(spec)):
        T = look_at(c, spec.target)
        depth, ids = render(spec, K, T)
        frames.append(SyntheticFrame(fid, K, T, depth, ids))

    # noise is drawn frame by frame, object by object, in a fixed order
    for fr in frames:
        counts = np.bincount(fr.object_ids[fr.object_ids >= 0].ravel(), minlength=len(spec.objects))
        visible = [k_ for k_ in range(len(spec.objects)) if counts[k_] > 0]
        for obj in visible:
            ob = spec.objects[obj]
            label = ob.label
            if noise.label_swap > 0 and len(ob.group) > 1 and rng.random() < noise.label_swap:
                label = ob.group[int(rng.integers(len(ob.group)))]
            s_query = 1.0 - float(rng.uniform(0.0, noise.jitter)) if noise.jitter > 0 else 1.0
            fr.masks.append((label, fr.object_ids == obj, s_query, 1.0))
            fr.mask_objects.append(obj)
        if noise.depth_sigma > 0:
            valid = fr.depth > 0
            fr.depth = fr.depth + np.where(valid, rng.normal(0.0, noise.depth_sigma, fr.depth.shape), 0.0)
            fr.depth[valid & (fr.depth <= 0)] = 0.0
        # vocabulary line: labels of this frame's masks, largest first
        order = sorted(range(len(fr.masks)), key=lambda i: (-int(fr.masks[i][1].sum()), i))
        line: list[str] = []
        for i in order:
            if fr.masks[i][0] not in line:
                line.append(fr.masks[i][0])
        fr.vocab_line = ", ".join(line[:k])

    # masks must name vocabulary categories, as they would when prompted by it
    vocab = {c.strip() for fr in frames for c in fr.vocab_line.split(",") if c.strip()}
    dropped = 0
    for fr in frames:
        kept = [(m, o) for m, o in zip(fr.masks, fr.mask_objects) if m[0] in vocab]
        dropped += len(fr.masks) - len(kept)
        fr.masks = [m for m, _ in kept]
        fr.mask_objects = [o for _, o in kept]

    gt_boxes = [GroundTruthBox(ob.label, ob.box_min, ob.box_max) for ob in spec.objects]
    verts, ids, labels = [], [], []
    for k_, ob in enumerate(spec.objects):
        pts = sample_surface(ob, vertex_spacing, rng)
        verts.append(pts)
        ids.append(np.full(len(pts), k_))
        labels.extend([ob.label] * len(pts))
    gt_vertices = GroundTruthVertexSet(np.concatenate(verts), np.concatenate(ids), tuple(labels))

    scene = SyntheticScene(
        spec, noise, frames, gt_boxes, gt_vertices, grouping_text_for(spec), pose_mode,
        dropped_masks=dropped,
    )
    if pose_mode == "estimated":
        scene.reference_pose0 = frames[0].pose
        scene.reference_depth0 = frames[0].depth.copy()
        q, Rq, tq = _random_similarity(rng)
        # reconstruction frame: x_pred = q * Rq @ x_world + tq
        for fr in frames:
            R = fr.pose.rotation @ Rq.T
            t = q * fr.pose.translation - R @ tq
            fr.pose = CameraPose(R, t)
            fr.depth = fr.depth * q
    return scene


def write_scene(scene: SyntheticScene, out_dir) -> Path:
    """Emit the scene directory in the formats ``load_scene`` consumes."""
    root = Path(out_dir)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    intr, poses, vocab = [], [], []
    for fr in scene.frames:
        intr.append(format_intrinsics_line(fr.frame_id, fr.intrinsics))
        poses.append(format_pose_line(fr.frame_id, fr.pose))
        vocab.append(fr.vocab_line)
        write_depth(root / depth_name(fr.frame_id), fr.depth)
        write_mask_file(root / mask_name(fr.frame_id), fr.frame_id, fr.depth.shape, fr.masks)
    (root / "intrinsics.txt").write_text("\n".join(intr) + "\n", encoding="utf-8")
    (root / "poses.txt").write_text("\n".join(poses) + "\n", encoding="utf-8")
    (root / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    (root / "groups.txt").write_text(scene.grouping_text, encoding="utf-8")
    write_gt_boxes(root / "gt_boxes.txt", scene.gt_boxes)
    write_gt_vertices(root / "gt_vertices.txt", scene.gt_vertices)
    if scene.pose_mode == "estimated":
        (root / "reference").mkdir(exist_ok=True)
        (root / "reference" / "pose0.txt").write_text(
            format_pose_line(0, scene.reference_pose0) + "\n", encoding="utf-8"
        )
        write_depth(root / "reference" / "depth0.gd1", scene.reference_depth0)
    write_manifest(root, {
        "frames": [fr.frame_id for fr in scene.frames],
        "image_size": list(scene.spec.image_size),
        "objects": scene.n_objects,
        "pose_mode": scene.pose_mode,
        "seed": scene.spec.seed,
    })
    return root


def load_spec(path) -> tuple[SceneSpec, NoiseSpec, str]:
    """Read a JSON scene spec; optional ``noise`` and ``pose_mode`` keys."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    noise = NoiseSpec(**doc.pop("noise", {}))
    pose_mode = doc.pop("pose_mode", "given")
    return SceneSpec.from_dict(doc), noise, pose_mode


# -- scene templates ------------------------------------------------------------


def _place_boxes(rng, sizes, bound: float, gap: float, tries: int = 200, restarts: int = 100):
    """Rejection-sample floor positions keeping every pair ``gap`` apart."""
    for _ in range(restarts):
        placed: list[tuple[np.ndarray, np.ndarray]] = []
        for sx, sy, sz in sizes:
            for _ in range(tries):
                x = rng.uniform(-bound, bound - sx)
                y = rng.uniform(-bound, bound - sy)
                lo, hi = np.array([x, y, 0.0]), np.array([x + sx, y + sy, sz])
                if all(
                    (lo[:2] >= h[:2] + gap).any() or (hi[:2] + gap <= l[:2]).any()
                    for l, h in placed
                ):
                    placed.append((lo, hi))
                    break
            else:
                break
        if len(placed) == len(sizes):
            return placed
    raise ValidationError("could not place all objects without overlap")


def random_scene_spec(
    seed: int,
    n_objects: int,
    n_cameras: int,
    image_size: tuple[int, int] = (64, 64),
    *,
    gap: float = 0.2,
    with_synonyms: bool = False,
) -> SceneSpec:
    """Distinct-label objects on the floor, pairwise separated by ``gap``."""
    rng = np.random.default_rng(seed)
    labels = [LABEL_POOL[i] for i in rng.permutation(len(LABEL_POOL))[:n_objects]]
    sizes = [
        (rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.4, 1.2))
        for _ in range(n_objects)
    ]
    boxes = _place_boxes(rng, sizes, 1.8, gap)
    objects = tuple(
        ObjectSpec(lab, tuple(float(v) for v in lo), tuple(float(v) for v in hi))
        for lab, (lo, hi) in zip(labels, boxes)
    )
    return SceneSpec(objects=objects, n_cameras=n_cameras, image_size=image_size, seed=seed)


ABLATION_GROUP_POOL = tuple(g for g in SYNONYM_POOL if 2 <= len(g) <= 3)


def ablation_scene_spec(
    seed: int,
    n_groups: int = 2,
    n_cameras: int = 48,
    *,
    fov_deg: float = 45.0,
    bound: float = 2.4,
) -> SceneSpec:
    """Scene for comparing grouping modes under taxonomy noise.

    Every member of ``n_groups`` synonym groups is a separate object on the
    floor, so each alias of an object is also a ground-truth class. Members
    of the last group sit on top of members of the first group, which gives
    cross-group contact that only a category gate keeps apart. Spreading
    objects toward the walls with a narrow field of view makes the number of
    views per object uneven.
    """
    rng = np.random.default_rng(seed)
    if not 1 <= n_groups <= len(ABLATION_GROUP_POOL):
        raise ValidationError(f"n_groups must lie in [1, {len(ABLATION_GROUP_POOL)}]")
    picked = [ABLATION_GROUP_POOL[i] for i in rng.choice(len(ABLATION_GROUP_POOL), n_groups, replace=False)]
    members = [(lab, g) for g in picked for lab in g]
    sizes = [(rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), rng.uniform(0.3, 1.0)) for _ in members]
    boxes = [(lo.copy(), hi.copy()) for lo, hi in _place_boxes(rng, sizes, bound, 0.2)]
    if n_groups > 1:
        first = len(picked[0])
        top = range(len(members) - len(picked[-1]), len(members))
        for j, k in enumerate(top):
            if j >= first:
                break
            blo, bhi = boxes[j]
            size = np.minimum(boxes[k][1] - boxes[k][0], (bhi - blo) * 0.7)
            size[2] = min(size[2], 0.5)
            lo = np.array([(blo[0] + bhi[0] - size[0]) / 2, (blo[1] + bhi[1] - size[1]) / 2, bhi[2]])
            boxes[k] = (lo, lo + size)
    objects = tuple(
        ObjectSpec(lab, tuple(float(v) for v in lo), tuple(float(v) for v in hi), tuple(g))
        for (lab, g), (lo, hi) in zip(members, boxes)
    )
    return SceneSpec(objects=objects, n_cameras=n_cameras, fov_deg=fov_deg, seed=seed)


ABLATION_NOISE = NoiseSpec(label_swap=0.5)


def to_bundle(scene: SyntheticScene):
    """In-memory SceneBundle equivalent to ``load_scene(write_scene(scene, d))``."""
    from .fragments import CategoryMask, FrameData, FramePresence
    from .scene import SceneBundle

    frames = []
    for fr in scene.frames:
        masks = tuple(CategoryMask(fr.frame_id, lab, bits, sq) for lab, bits, sq, _ in fr.masks)
        presence = FramePresence(fr.frame_id, {lab: sp for lab, _, _, sp in fr.masks})
        depth = DepthMap(np.asarray(fr.depth, dtype="<f4"))
        frames.append(FrameData(fr.frame_id, fr.intrinsics, fr.pose, depth, masks, presence))
    ref_depth = None
    if scene.reference_depth0 is not None:
        ref_depth = DepthMap(np.asarray(scene.reference_depth0, dtype="<f4"))
    return SceneBundle(
        frames=tuple(frames),
        vocab_lines=tuple(fr.vocab_line for fr in scene.frames),
        grouping_text=scene.grouping_text,
        gt_boxes=tuple(scene.gt_boxes),
        gt_vertices=scene.gt_vertices,
        reference_pose0=scene.reference_pose0,
        reference_depth0=ref_depth,
    )
