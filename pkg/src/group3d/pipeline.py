"""End-to-end orchestration and the top-level estimator."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigurationError, Group3DError, ValidationError
from .evidence import DEFAULT_TAU_SUPPORT, EvidenceParams, Instance, run_evidence
from .fragments import MIN_FRAGMENT_POINTS, FragmentMemory, build_fragment_memory
from .geometry import align_to_reference
from .merging import DEFAULT_TAU_CONT, DEFAULT_TAU_IOU, DEFAULT_VOXEL_SIZE, Cluster, MergeParams, merge_fragments
from .scene import SceneBundle, sample_frame_indices
from .validation import check_positive, check_threshold
from .vocabulary import (
    DEFAULT_K,
    CompatibilityGroups,
    SceneVocabulary,
    aggregate_vocabulary,
    parse_group_spec,
    parse_vocab_response,
)

logger = logging.getLogger(__name__)

POSE_MODES = ("given", "estimated")
GROUPING_MODES = ("compat-groups", "same-category", "none")
DEFAULT_FRAME_BUDGET = 128


@dataclass(frozen=True)
class PipelineConfig:
    voxel_size: float = DEFAULT_VOXEL_SIZE
    tau_iou: float = DEFAULT_TAU_IOU
    tau_cont: float = DEFAULT_TAU_CONT
    tau_support: float = DEFAULT_TAU_SUPPORT
    k: int = DEFAULT_K
    frame_budget: int = DEFAULT_FRAME_BUDGET
    pose_mode: str = "given"
    min_fragment_points: int = MIN_FRAGMENT_POINTS
    grouping: str = "compat-groups"
    n_jobs: int = 1

    def __post_init__(self):
        check_positive(self.voxel_size, "voxel_size")
        check_threshold(self.tau_iou, "tau_iou")
        check_threshold(self.tau_cont, "tau_cont")
        check_positive(self.tau_support, "tau_support")
        if self.k < 1:
            raise ConfigurationError("k must be at least 1")
        if self.frame_budget < 1:
            raise ConfigurationError("frame_budget must be at least 1")
        if self.min_fragment_points < 1:
            raise ConfigurationError("min_fragment_points must be at least 1")
        if self.pose_mode not in POSE_MODES:
            raise ConfigurationError(f"pose_mode must be one of {POSE_MODES}")
        if self.grouping not in GROUPING_MODES:
            raise ConfigurationError(f"grouping must be one of {GROUPING_MODES}")


@dataclass(eq=False)
class PipelineResult:
    vocabulary: SceneVocabulary
    groups: CompatibilityGroups
    fragments: FragmentMemory
    clusters: list[Cluster]
    instances: list[Instance]


def build_groups(text: str | None, vocab: SceneVocabulary, mode: str) -> CompatibilityGroups:
    if mode == "none":
        return CompatibilityGroups.universal(vocab)
    if mode == "same-category" or text is None:
        return CompatibilityGroups.singletons(vocab)
    return parse_group_spec(text, vocab)


class _stage:
    """Tag Group3DErrors raised inside the block with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if isinstance(exc, Group3DError) and exc.stage is None:
            exc.stage = self.name
        return False


def run_pipeline_detailed(bundle: SceneBundle, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    frames = list(bundle.frames)
    lines = list(bundle.vocab_lines)
    if len(frames) > config.frame_budget:
        keep = sample_frame_indices(len(frames), config.frame_budget)
        frames = [frames[i] for i in keep]
        lines = [lines[i] for i in keep]

    with _stage("vocabulary"):
        vocab = aggregate_vocabulary(parse_vocab_response(ln, config.k) for ln in lines)
        groups = build_groups(bundle.grouping_text, vocab, config.grouping)

    transform = None
    if config.pose_mode == "estimated":
        with _stage("alignment"):
            if bundle.reference_pose0 is None or bundle.reference_depth0 is None:
                raise ValidationError("estimated pose mode needs reference/pose0.txt and reference/depth0.gd1")
            if not frames:
                raise ValidationError("no frames to align")
            first = min(frames, key=lambda f: f.frame_id)
            transform = align_to_reference(
                first.pose, bundle.reference_pose0, first.depth, bundle.reference_depth0
            )

    with _stage("fragments"):
        memory = build_fragment_memory(
            frames, vocab, config.voxel_size,
            min_points=config.min_fragment_points, transform=transform, n_jobs=config.n_jobs,
        )
    with _stage("merging"):
        clusters = merge_fragments(memory, groups, MergeParams(config.tau_iou, config.tau_cont, config.voxel_size))
    with _stage("evidence"):
        instances = run_evidence(clusters, EvidenceParams(config.tau_support))
    logger.info(
        "vocabulary %d, fragments %d, clusters %d", len(vocab), len(memory), len(clusters)
    )
    return PipelineResult(vocab, groups, memory, clusters, instances)


def run_pipeline(bundle: SceneBundle, config: PipelineConfig = PipelineConfig()) -> list[Instance]:
    return run_pipeline_detailed(bundle, config).instances


class Group3DDetector(BaseEstimator):
    """Training-free open-vocabulary 3D detector with an estimator interface.

    There is nothing to learn, so ``fit`` only validates the parameters.
    ``predict`` takes a SceneBundle and returns a list of Instances;
    ``fit_predict`` additionally keeps the intermediate products
    (``vocabulary_``, ``groups_``, ``fragments_``, ``clusters_``,
    ``instances_``) of that scene.
    """

    def __init__(
        self,
        voxel_size=DEFAULT_VOXEL_SIZE,
        tau_iou=DEFAULT_TAU_IOU,
        tau_cont=DEFAULT_TAU_CONT,
        tau_support=DEFAULT_TAU_SUPPORT,
        k=DEFAULT_K,
        frame_budget=DEFAULT_FRAME_BUDGET,
        pose_mode="given",
        min_fragment_points=MIN_FRAGMENT_POINTS,
        grouping="compat-groups",
        n_jobs=1,
    ):
        self.voxel_size = voxel_size
        self.tau_iou = tau_iou
        self.tau_cont = tau_cont
        self.tau_support = tau_support
        self.k = k
        self.frame_budget = frame_budget
        self.pose_mode = pose_mode
        self.min_fragment_points = min_fragment_points
        self.grouping = grouping
        self.n_jobs = n_jobs

    def _config(self) -> PipelineConfig:
        return PipelineConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def predict(self, X: SceneBundle) -> list[Instance]:
        check_is_fitted(self, "config_")
        return run_pipeline(X, self.config_)

    def fit_predict(self, X: SceneBundle, y=None) -> list[Instance]:
        self.fit()
        result = run_pipeline_detailed(X, self.config_)
        self.vocabulary_ = result.vocabulary
        self.groups_ = result.groups
        self.fragments_ = result.fragments
        self.clusters_ = result.clusters
        self.instances_ = result.instances
        return result.instances
