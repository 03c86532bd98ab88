from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from group3d.errors import ConfigurationError, ValidationError
from group3d.voxelgrid import VoxelSet, overlap, voxel_containment, voxel_iou, voxel_keys, voxelize

from oracles import containment_oracle, iou_oracle, voxel_keys_list


def V(*keys, s=0.05):
    return VoxelSet.from_keys(np.array(keys, dtype=np.int64).reshape(-1, 3), s)


def test_negative_coordinates_use_floor():
    assert voxel_keys([[0.12, -0.01, 0.26]], 0.05).tolist() == [[2, -1, 5]]


@pytest.mark.parametrize("s", [0.01, 0.05, 0.1, 1.0])
def test_origin_maps_to_zero_key(s):
    assert voxelize([[0.0, 0.0, 0.0]], s).to_set() == {(0, 0, 0)}


def test_points_in_one_cell_collapse():
    assert len(voxelize([[0.01, 0.01, 0.01], [0.04, 0.02, 0.03]], 0.05)) == 1


def test_cell_boundary_goes_up():
    # -0.2 / 0.05 == -4.0 exactly, so the point belongs to cell -4
    assert voxel_keys([[-0.2, 0.5, 0.25]], 0.125).tolist() == [[-2, 4, 2]]
    assert voxel_keys([[-0.25, 0.0, 0.0]], 0.05).tolist()[0][0] == -5


def test_non_finite_point_rejected():
    with pytest.raises(ValidationError):
        voxelize([[0.0, float("nan"), 0.0]], 0.05)


def test_key_range_limit():
    with pytest.raises(ValidationError):
        voxelize([[1e6, 0.0, 0.0]], 0.05)


def test_iou_examples():
    a = V((0, 0, 0), (1, 0, 0))
    assert voxel_iou(a, a) == 1.0
    assert voxel_iou(a, V((1, 0, 0), (2, 0, 0))) == pytest.approx(1 / 3, abs=0)
    assert voxel_iou(a, V((5, 5, 5))) == 0.0
    assert voxel_iou(VoxelSet.empty(0.05), VoxelSet.empty(0.05)) == 0.0


def test_containment_examples():
    assert voxel_containment(V((0, 0, 0)), V((0, 0, 0), (1, 1, 1))) == 1.0
    assert voxel_containment(V((0, 0, 0), (5, 5, 5)), V((0, 0, 0))) == 0.5
    assert voxel_containment(V((1, 0, 0)), V((0, 0, 0))) == 0.0


def test_containment_of_empty_set_is_an_error():
    with pytest.raises(ValidationError):
        voxel_containment(VoxelSet.empty(0.05), V((0, 0, 0)))


def test_mismatched_voxel_sizes():
    with pytest.raises(ConfigurationError):
        voxel_iou(V((0, 0, 0), s=0.05), V((0, 0, 0), s=0.1))


def test_overlap_containment_branch():
    # |A| = 600, |B| = 25, 3 shared: IoU = 3/622 ~ 0.005, Cont(B->A) = 3/25 = 0.12
    a = V(*[(i, 0, 0) for i in range(600)])
    b = V(*([(i, 0, 0) for i in range(3)] + [(i, 9, 9) for i in range(22)]))
    assert voxel_iou(a, b) == pytest.approx(3 / 622)
    assert voxel_iou(a, b) < 0.01
    assert voxel_containment(b, a) == pytest.approx(0.12)
    assert overlap(a, b, 0.01, 0.10)


def test_overlap_iou_branch_and_neither():
    a = V(*[(i, 0, 0) for i in range(100)])
    b = V(*([(i, 0, 0) for i in range(4)] + [(i, 5, 5) for i in range(96)]))
    assert voxel_iou(a, b) == pytest.approx(4 / 196) and voxel_containment(b, a) == 0.04
    assert overlap(a, b, 0.01, 0.10)
    assert not overlap(a, V((0, 7, 7)), 0.01, 0.10)


def test_containment_is_asymmetric():
    small, big = V((0, 0, 0)), V(*[(i, 0, 0) for i in range(20)])
    assert voxel_containment(small, big) == 1.0
    assert voxel_containment(big, small) == 0.05


key = st.tuples(*(st.integers(-6, 6),) * 3)


@given(st.sets(key, max_size=40), st.sets(key, min_size=1, max_size=40))
def test_predicates_against_oracle(a_keys, b_keys):
    a, b = V(*a_keys) if a_keys else VoxelSet.empty(0.05), V(*b_keys)
    sa, sb = sorted(a_keys), sorted(b_keys)
    assert voxel_iou(a, b) == iou_oracle(sa, sb)
    assert voxel_iou(a, b) == voxel_iou(b, a)
    assert voxel_containment(b, a) == containment_oracle(sb, sa)
    assert voxel_iou(a, b) <= voxel_containment(b, a)


@given(
    st.lists(st.tuples(*(st.floats(-3, 3),) * 3), min_size=1, max_size=50),
    st.sampled_from([0.01, 0.05, 0.1]),
)
def test_voxelize_matches_python_floor(points, s):
    assert sorted(voxelize(points, s).to_set()) == voxel_keys_list(points, s)


@given(
    st.lists(st.tuples(*(st.integers(-2000, 2000),) * 3), min_size=1, max_size=30),
    st.tuples(*(st.integers(-20, 20),) * 3),
)
def test_translation_by_whole_cells_shifts_keys(ticks, k):
    # exact binary grid: s = 1/16, points on multiples of 1/64
    s = 0.0625
    P = np.array(ticks, dtype=np.float64) / 64.0
    shift = np.array(k, dtype=np.float64) * s
    a = voxel_keys(P, s)
    b = voxel_keys(P + shift, s)
    np.testing.assert_array_equal(b, a + np.array(k))


def test_union_and_membership():
    a, b = V((0, 0, 0), (1, 0, 0)), V((1, 0, 0), (-3, 2, 1))
    u = a.union(b)
    assert u.to_set() == {(0, 0, 0), (1, 0, 0), (-3, 2, 1)}
    assert (-3, 2, 1) in u and (9, 9, 9) not in u
    assert a.intersection_size(b) == 1
