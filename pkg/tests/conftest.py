from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from group3d.fragments import Fragment
from group3d.geometry import CameraIntrinsics, CameraPose
from group3d.voxelgrid import voxelize

settings.register_profile(
    "default", deadline=None, max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def K100():
    """fx = fy = 100, principal point (50, 50), 101 x 101 image."""
    return CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 101, 101)


@pytest.fixture
def identity_pose():
    return CameraPose.identity()


def make_fragment(points, category="chair", confidence=1.0, frame_id=0, voxel_size=0.05) -> Fragment:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    extent = float(np.prod(pts.max(axis=0) - pts.min(axis=0))) if len(pts) else 0.0
    return Fragment(pts, category, confidence, frame_id, voxelize(pts, voxel_size), extent)


def cells(keys, voxel_size=0.05):
    """Points at the centres of the given integer voxel keys."""
    return (np.asarray(keys, dtype=np.float64).reshape(-1, 3) + 0.5) * voxel_size


def random_memory(rng, n_fragments, categories=("chair", "sofa", "table", "bed"), extent=8, voxel_size=0.05):
    """Random fragments made of voxel-centre points inside a small shared region,
    so that overlaps of every strength occur."""
    from group3d.fragments import FragmentMemory

    frags = []
    for f in range(n_fragments):
        lo = rng.integers(0, extent, size=3)
        hi = lo + rng.integers(1, 4, size=3)
        keys = np.stack(np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij"), -1).reshape(-1, 3)
        keys = keys[rng.random(len(keys)) < 0.8]
        if len(keys) == 0:
            keys = lo[None, :]
        frags.append(make_fragment(
            cells(keys, voxel_size), str(rng.choice(categories)), float(rng.uniform(0.1, 1.0)), f, voxel_size,
        ))
    return FragmentMemory(tuple(frags))


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
