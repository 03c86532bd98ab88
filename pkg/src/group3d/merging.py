"""Group-gated greedy merging of fragments into instance clusters.

Fragments are visited largest first. Each one joins the first existing
cluster (in creation order) that is in the same compatibility group and
passes the voxel overlap test, with the cluster as the reference set and the
fragment as the contained one. Otherwise it starts a new cluster. The pass is
single and order-dependent by design.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .fragments import Fragment, FragmentMemory
from .validation import check_positive, check_threshold
from .vocabulary import CompatibilityGroups, group_of
from .voxelgrid import VoxelSet, overlap, voxelize

DEFAULT_TAU_IOU = 0.01
DEFAULT_TAU_CONT = 0.10
DEFAULT_VOXEL_SIZE = 0.05


@dataclass(frozen=True)
class MergeParams:
    tau_iou: float = DEFAULT_TAU_IOU
    tau_cont: float = DEFAULT_TAU_CONT
    voxel_size: float = DEFAULT_VOXEL_SIZE

    def __post_init__(self):
        check_threshold(self.tau_iou, "tau_iou")
        check_threshold(self.tau_cont, "tau_cont")
        check_positive(self.voxel_size, "voxel_size")


@dataclass
class Cluster:
    """A growing 3D instance.

    ``labels`` maps each member category to the confidences of its
    fragments; ``first_index`` records, per category, the lowest memory index
    among its supporting fragments (used for deterministic tie-breaks).
    """

    group_id: int
    voxels: VoxelSet
    members: list[int] = field(default_factory=list)
    fragments: list[Fragment] = field(default_factory=list, repr=False)
    labels: dict[str, list[float]] = field(default_factory=dict)
    first_index: dict[str, int] = field(default_factory=dict)

    @classmethod
    def seed(cls, index: int, fragment: Fragment, group_id: int) -> "Cluster":
        c = cls(group_id=group_id, voxels=fragment.voxels)
        c._record(index, fragment)
        return c

    def add(self, index: int, fragment: Fragment) -> None:
        self.voxels = self.voxels.union(fragment.voxels)
        self._record(index, fragment)

    def _record(self, index: int, fragment: Fragment) -> None:
        self.members.append(index)
        self.fragments.append(fragment)
        self.labels.setdefault(fragment.category, []).append(fragment.confidence)
        prev = self.first_index.get(fragment.category)
        if prev is None or index < prev:
            self.first_index[fragment.category] = index

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([f.points for f in self.fragments], axis=0)


def sort_fragments(memory: FragmentMemory) -> list[int]:
    """Memory indices ordered by descending AABB volume, then descending
    confidence, then ascending index."""
    return sorted(
        range(len(memory)),
        key=lambda i: (-memory[i].extent, -memory[i].confidence, i),
    )


def merge_fragments(
    memory: FragmentMemory,
    groups: CompatibilityGroups,
    params: MergeParams = MergeParams(),
) -> list[Cluster]:
    clusters: list[Cluster] = []
    for i in sort_fragments(memory):
        frag = memory[i]
        gid = group_of(frag.category, groups)
        for cluster in clusters:
            if cluster.group_id == gid and overlap(
                cluster.voxels, frag.voxels, params.tau_iou, params.tau_cont
            ):
                cluster.add(i, frag)
                break
        else:
            clusters.append(Cluster.seed(i, frag, gid))
    return clusters


class GroupGatedMerger(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`merge_fragments`.

    ``fit`` takes a FragmentMemory (or a sequence of fragments) and the
    compatibility groups; afterwards ``labels_[i]`` is the cluster index of
    fragment ``i`` and ``clusters_`` holds the clusters in creation order.
    """

    def __init__(self, tau_iou=DEFAULT_TAU_IOU, tau_cont=DEFAULT_TAU_CONT, voxel_size=DEFAULT_VOXEL_SIZE):
        self.tau_iou = tau_iou
        self.tau_cont = tau_cont
        self.voxel_size = voxel_size

    def fit(self, X, y=None, *, groups: CompatibilityGroups):
        memory = X if isinstance(X, FragmentMemory) else FragmentMemory(tuple(X))
        params = MergeParams(self.tau_iou, self.tau_cont, self.voxel_size)
        if any(f.voxels.voxel_size != params.voxel_size for f in memory):
            memory = FragmentMemory(tuple(
                replace(f, voxels=voxelize(f.points, params.voxel_size)) for f in memory
            ))
        self.clusters_ = merge_fragments(memory, groups, params)
        labels = np.full(len(memory), -1, dtype=np.intp)
        for k, cluster in enumerate(self.clusters_):
            labels[cluster.members] = k
        self.labels_ = labels
        self.n_clusters_ = len(self.clusters_)
        return self

    def fit_predict(self, X, y=None, *, groups: CompatibilityGroups):
        return self.fit(X, groups=groups).labels_
