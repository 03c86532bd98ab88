"""Open-vocabulary 3D detection by group-gated merging of lifted 2D masks.

Per-view category masks are lifted to 3D fragments with depth and camera
poses, merged greedily when their voxel overlap is large enough and their
categories share a semantic compatibility group, and turned into labeled
boxes by multi-view evidence accumulation.
"""

from .errors import (
    AlignmentError,
    ConfigurationError,
    EvaluationError,
    Group3DError,
    LoadError,
    ParseError,
    ProviderDataError,
    ProviderError,
    UnknownCategoryError,
    ValidationError,
)
from .evaluation import (
    GroundTruthBox,
    GroundTruthVertexSet,
    average_precision,
    box_iou_3d,
    evaluate,
    instance_seg_ap,
    mean_ap,
    transfer_instance_labels,
)
from .evidence import EvidenceAccumulator, EvidenceParams, Instance, support_weight
from .fragments import CategoryMask, Fragment, FragmentMemory, FrameData, FramePresence, build_fragment_memory
from .geometry import CameraIntrinsics, CameraPose, DepthMap, SimilarityTransform, align_to_reference, back_project
from .merging import Cluster, GroupGatedMerger, MergeParams, merge_fragments
from .pipeline import Group3DDetector, PipelineConfig, run_pipeline
from .providers import ChatCompletionProvider, FixtureProvider
from .scene import SceneBundle, load_scene
from .vocabulary import CompatibilityGroups, SceneVocabulary, canonicalize, parse_group_spec
from .voxelgrid import VoxelSet, voxel_containment, voxel_iou, voxelize

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "ConfigurationError", "EvaluationError", "Group3DError", "LoadError",
    "ParseError", "ProviderDataError", "ProviderError", "UnknownCategoryError", "ValidationError",
    "GroundTruthBox", "GroundTruthVertexSet", "average_precision", "box_iou_3d", "evaluate",
    "instance_seg_ap", "mean_ap", "transfer_instance_labels",
    "EvidenceAccumulator", "EvidenceParams", "Instance", "support_weight",
    "CategoryMask", "Fragment", "FragmentMemory", "FrameData", "FramePresence", "build_fragment_memory",
    "CameraIntrinsics", "CameraPose", "DepthMap", "SimilarityTransform", "align_to_reference", "back_project",
    "Cluster", "GroupGatedMerger", "MergeParams", "merge_fragments",
    "Group3DDetector", "PipelineConfig", "run_pipeline",
    "ChatCompletionProvider", "FixtureProvider",
    "SceneBundle", "load_scene",
    "CompatibilityGroups", "SceneVocabulary", "canonicalize", "parse_group_spec",
    "VoxelSet", "voxel_containment", "voxel_iou", "voxelize",
]
