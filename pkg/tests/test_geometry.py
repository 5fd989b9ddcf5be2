import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from aifrecon.geometry import (
    FrameGeometry,
    RigidPose,
    VolumeMeta,
    make_beam_direction_map,
    pixel_to_world,
    pixels_to_world,
    rotation_x,
    rotation_z,
    round_half_away,
    transform_direction,
    world_to_voxel,
    world_to_voxel_array,
)


# -- RigidPose ----------------------------------------------------------------


def test_pose_rejects_non_orthonormal():
    m = np.eye(4)
    m[0, 0] = 1.1
    with pytest.raises(ValueError):
        RigidPose(m)


def test_pose_rejects_bad_last_row():
    m = np.eye(4)
    m[3, 0] = 1e-9
    with pytest.raises(ValueError):
        RigidPose(m)


def test_pose_rejects_shape_and_nan():
    with pytest.raises(ValueError):
        RigidPose(np.eye(3))
    m = np.eye(4)
    m[0, 3] = np.nan
    with pytest.raises(ValueError):
        RigidPose(m)


def test_pose_tolerance_is_configurable():
    m = np.eye(4)
    m[:3, :3] *= 1 + 2e-5  # |R^T R - I| ~ 4e-5
    with pytest.raises(ValueError):
        RigidPose(m)
    RigidPose(m, tol=1e-4)


def test_pose_compose_and_translation():
    a = RigidPose.from_rt(rotation_z(math.pi / 2), [1.0, 2.0, 3.0])
    b = RigidPose.from_rt(np.eye(3), [1.0, 0.0, 0.0])
    c = a.compose(b)
    np.testing.assert_allclose(c.matrix, a.matrix @ b.matrix)


# -- beam direction map -------------------------------------------------------


def test_linear_beams_all_point_down():
    bmap = make_beam_direction_map(FrameGeometry(7, 5, (0.3, 0.2)))
    assert bmap.dirs.shape == (5, 7, 3)
    assert np.all(bmap.dirs == np.array([0.0, 1.0, 0.0]))


def test_phased_pixel_at_apex_falls_back_to_down():
    # apex = (W*sx/2, 0, 0) = (1, 0, 0), the position of pixel col 1 row 0
    bmap = make_beam_direction_map(FrameGeometry(2, 2, (1.0, 1.0), "phased", 0.0))
    np.testing.assert_array_equal(bmap.dirs[0, 1], [0.0, 1.0, 0.0])


def test_phased_direction_example():
    # apex (1.5, 0, 0); pixel col 0 row 1 sits at (0, 1.5, 0)
    bmap = make_beam_direction_map(FrameGeometry(3, 2, (1.0, 1.5), "phased", 0.0))
    np.testing.assert_allclose(bmap.dirs[1, 0], [-math.sqrt(0.5), math.sqrt(0.5), 0.0], atol=1e-12)


def test_phased_far_apex_converges_to_down():
    geom = FrameGeometry(9, 6, (0.4, 0.5), "phased", 1e6 * 0.5)
    bmap = make_beam_direction_map(geom)
    np.testing.assert_allclose(bmap.dirs[:, 4], np.tile([0.0, 1.0, 0.0], (6, 1)), atol=1e-3)


def test_beam_map_is_unit_and_pure():
    geom = FrameGeometry(11, 13, (0.3, 0.25), "phased", 2.0)
    a, b = make_beam_direction_map(geom), make_beam_direction_map(geom)
    assert a.dirs.tobytes() == b.dirs.tobytes()
    np.testing.assert_allclose(np.linalg.norm(a.dirs, axis=-1), 1.0, atol=1e-12)


def test_frame_geometry_validation():
    for bad in [dict(width=0), dict(height=0), dict(pixel_spacing=(0, 1)), dict(apex_offset=-1), dict(probe_kind="convex")]:
        kw = dict(width=2, height=2, pixel_spacing=(1.0, 1.0))
        kw.update(bad)
        with pytest.raises(ValueError):
            FrameGeometry(**kw)


# -- pixel_to_world -----------------------------------------------------------


def test_pixel_to_world_identity():
    geom = FrameGeometry(32, 32, (0.1, 0.1))
    np.testing.assert_allclose(pixel_to_world(10, 20, geom, RigidPose.identity()), [1.0, 2.0, 0.0])


def test_pixel_to_world_translation():
    geom = FrameGeometry(4, 4, (0.5, 0.5))
    np.testing.assert_allclose(pixel_to_world(0, 0, geom, RigidPose.from_rt(np.eye(3), [5, 0, 0])), [5, 0, 0])


def test_pixel_to_world_rotation_then_translation():
    geom = FrameGeometry(4, 4, (1.0, 1.0))
    pose = RigidPose.from_rt(rotation_z(math.pi / 2), [0, 0, 1])
    np.testing.assert_allclose(pixel_to_world(1, 0, geom, pose), [0, 1, 1], atol=1e-15)


def test_pixel_to_world_out_of_range():
    with pytest.raises(IndexError):
        pixel_to_world(4, 0, FrameGeometry(4, 4, (1.0, 1.0)), RigidPose.identity())


def test_pixels_to_world_matches_matrix_product():
    rng = np.random.default_rng(0)
    geom = FrameGeometry(5, 4, (0.3, 0.7))
    pose = RigidPose.from_rt(Rotation.random(random_state=1).as_matrix(), rng.normal(size=3))
    rows, cols = np.meshgrid(np.arange(4), np.arange(5), indexing="ij")
    got = pixels_to_world(cols, rows, geom, pose)
    hom = np.stack([cols * 0.3, rows * 0.7, np.zeros_like(cols, dtype=float), np.ones_like(cols, dtype=float)], -1)
    np.testing.assert_allclose(got, (hom @ pose.matrix.T)[..., :3], atol=1e-12)


# -- world_to_voxel -----------------------------------------------------------


def test_world_to_voxel_examples():
    meta = VolumeMeta((5, 5, 5))
    assert world_to_voxel((0, 0, 0), meta) == (0, 0, 0)
    assert world_to_voxel((2.5, 0, 0), meta) == (3, 0, 0)
    assert world_to_voxel((-0.6, 0, 0), meta) is None
    assert world_to_voxel((-0.4, 0, 0), meta) == (0, 0, 0)
    assert world_to_voxel((4.5, 0, 0), meta) is None


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([0.5, 1.5, 2.5, -0.5, -1.5, 0.49, -0.49]), [1, 2, 3, -1, -2, 0, -0])


def test_world_to_voxel_honours_origin_and_spacing():
    meta = VolumeMeta((4, 4, 4), (2.0, 0.5, 1.0), (-3.0, 1.0, 0.0))
    assert world_to_voxel((-3 + 2 * 1.5, 1.0 + 0.5 * 2, 3.0), meta) == (2, 2, 3)


@settings(max_examples=50, deadline=None)
@given(
    dims=st.tuples(*(st.integers(1, 9),) * 3),
    spacing=st.tuples(*(st.floats(0.05, 5.0),) * 3),
    origin=st.tuples(*(st.floats(-100, 100),) * 3),
)
def test_voxel_center_round_trip(dims, spacing, origin):
    meta = VolumeMeta(dims, spacing, origin)
    centers = meta.voxel_centers()
    idx, inside = world_to_voxel_array(centers, meta)
    assert inside.all()
    expect = np.stack(np.meshgrid(*(np.arange(d) for d in dims), indexing="ij"), axis=-1)
    np.testing.assert_array_equal(idx, expect)


# -- transform_direction ------------------------------------------------------


def test_transform_direction_examples():
    np.testing.assert_allclose(transform_direction(RigidPose.identity(), (0, 1, 0)), (0, 1, 0))
    np.testing.assert_allclose(transform_direction(RigidPose.from_rt(rotation_x(math.pi), [1, 2, 3]), (0, 1, 0)), (0, -1, 0), atol=1e-15)
    np.testing.assert_allclose(transform_direction(RigidPose.from_rt(rotation_z(math.pi / 2), [0, 0, 0]), (1, 0, 0)), (0, 1, 0), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_transform_direction_preserves_length(seed):
    rng = np.random.default_rng(seed)
    pose = RigidPose.from_rt(Rotation.random(random_state=seed).as_matrix(), rng.normal(size=3))
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    out = transform_direction(pose, d)
    assert abs(np.linalg.norm(out) - 1) < 1e-6
    np.testing.assert_allclose(out, pose.rotation @ d, atol=1e-12)


# -- VolumeMeta ---------------------------------------------------------------


def test_volume_meta_validation_and_index():
    with pytest.raises(ValueError):
        VolumeMeta((0, 1, 1))
    with pytest.raises(ValueError):
        VolumeMeta((1, 1, 1), (0.0, 1.0, 1.0))
    meta = VolumeMeta((3, 4, 5))
    assert meta.size == 60
    assert meta.linear_index(np.array([[1, 2, 3]]))[0] == 1 + 3 * (2 + 4 * 3)
