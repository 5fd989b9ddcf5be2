import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aifrecon.geometry import VolumeMeta
from aifrecon.metrics import (
    EmptyRegion,
    SurfaceMask,
    compare,
    completeness,
    contrast,
    otsu_threshold,
    report,
)
from aifrecon.simulate import HalfSpace, make_phantom
from aifrecon.volume import MetaMismatch, ScalarVolume

META = VolumeMeta((6, 6, 6))


def _mask():
    m = np.zeros(META.dims, bool)
    m[2:4, 2:4, 2:4] = True
    return SurfaceMask(META, m)


def test_constant_volume_contrast_is_one():
    cr, cnr = contrast(ScalarVolume(META, np.full(META.dims, 7.0)), _mask())
    assert cr == 1.0 and cnr == 0.0


def test_noiseless_two_level_contrast():
    mask = _mask()
    data = np.where(mask.mask, 200.0, 100.0)
    cr, cnr = contrast(ScalarVolume(META, data), mask)
    assert cr == 2.0
    assert cnr == pytest.approx(100.0 / np.sqrt(1e-6))


def test_zero_background_uses_epsilon_floor():
    mask = _mask()
    cr, _ = contrast(ScalarVolume(META, np.where(mask.mask, 5.0, 0.0)), mask)
    assert cr == pytest.approx(5.0 / 1e-6)


def test_region_restricts_background():
    mask = _mask()
    data = np.where(mask.mask, 100.0, 0.0)
    region = np.zeros(META.dims, bool)
    region[1:5, 1:5, 1:5] = True
    data[region & ~mask.mask] = 50.0
    cr, _ = contrast(ScalarVolume(META, data), mask, region)
    assert cr == 2.0


def test_empty_regions_raise():
    mask = _mask()
    vol = ScalarVolume(META, np.ones(META.dims))
    with pytest.raises(EmptyRegion):
        contrast(vol, mask, np.zeros(META.dims, bool))
    with pytest.raises(EmptyRegion):
        contrast(vol, mask, mask.mask)  # no background inside
    with pytest.raises(EmptyRegion):
        completeness(vol, SurfaceMask(META, np.zeros(META.dims, bool)), 10)


def test_completeness_extremes_and_validation():
    mask = _mask()
    assert completeness(ScalarVolume(META, np.full(META.dims, 255.0)), mask, 128) == 1.0
    assert completeness(ScalarVolume(META, np.zeros(META.dims)), mask, 128) == 0.0
    for bad in (0, 255, -1):
        with pytest.raises(ValueError):
            completeness(ScalarVolume(META, np.zeros(META.dims)), mask, bad)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t1=st.floats(1, 254), t2=st.floats(1, 254))
def test_completeness_monotone_in_threshold(seed, t1, t2):
    rng = np.random.default_rng(seed)
    vol = ScalarVolume(META, rng.uniform(0, 255, META.dims))
    lo, hi = sorted((t1, t2))
    assert completeness(vol, _mask(), lo) >= completeness(vol, _mask(), hi)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.floats(0.01, 100))
def test_contrast_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    data = rng.uniform(10, 255, META.dims)
    cr = contrast(ScalarVolume(META, data), _mask())[0]
    cr_k = contrast(ScalarVolume(META, k * data), _mask())[0]
    assert cr_k == pytest.approx(cr, rel=1e-6)


def test_reduction_order_independence():
    rng = np.random.default_rng(1)
    data = rng.uniform(0, 255, META.dims)
    perm = rng.permutation(data.size)
    shuffled = data.ravel()[perm].reshape(META.dims)
    mask_s = _mask().mask.ravel()[perm].reshape(META.dims)
    a = report(ScalarVolume(META, data), _mask(), 100)
    b = report(ScalarVolume(META, shuffled), SurfaceMask(META, mask_s), 100)
    for fa, fb in zip(a.__dict__.values(), b.__dict__.values()):
        assert abs(fa - fb) <= 1e-9 * max(1.0, abs(fa))


def test_compare_order_and_permutation_invariance():
    rng = np.random.default_rng(2)
    vols = [(f"v{i}", ScalarVolume(META, rng.uniform(0, 255, META.dims))) for i in range(3)]
    rows = compare(vols, _mask(), 90.0)
    assert [n for n, _ in rows] == ["v0", "v1", "v2"]
    rev = dict(compare(list(reversed(vols)), _mask(), 90.0))
    for n, r in rows:
        assert rev[n] == r
    single = compare({"only": vols[0][1]}, _mask(), 90.0)
    assert len(single) == 1
    same = compare([("a", vols[0][1]), ("b", vols[0][1])], _mask(), 90.0)
    assert same[0][1] == same[1][1]


def test_compare_rejects_mismatched_grid():
    with pytest.raises(MetaMismatch):
        compare([("x", ScalarVolume(VolumeMeta((5, 6, 6)), np.zeros((5, 6, 6))))], _mask(), 10.0)


def test_report_invariants():
    rng = np.random.default_rng(3)
    r = report(ScalarVolume(META, rng.uniform(0, 255, META.dims)), _mask(), 128)
    assert 0 <= r.completeness <= 1 and r.contrast_ratio >= 0


def test_surface_mask_from_label():
    meta = VolumeMeta((10, 10, 10))
    label = make_phantom(HalfSpace((0, 1, 0), 4.5), meta)
    m = SurfaceMask.from_label(label).mask
    ys = np.flatnonzero(m.any(axis=(0, 2)))
    # inner boundary row y=5 grown by one voxel
    np.testing.assert_array_equal(ys, [4, 5, 6])
    assert m[:, 4:7, :].all()  # cut faces at the grid border are not surface-only
    assert not SurfaceMask.from_label(label, dilation=0).mask[:, 6].any()


def test_otsu_threshold_separates_modes():
    data = np.concatenate([np.full(500, 20.0), np.full(100, 180.0)]).reshape(6, 10, 10)
    vol = ScalarVolume(VolumeMeta((6, 10, 10)), data)
    t = otsu_threshold(vol)
    assert 20 < t < 180
    with pytest.raises(ValueError):
        otsu_threshold(ScalarVolume(META, np.ones(META.dims)))
    region = np.zeros((6, 10, 10), bool)
    with pytest.raises(EmptyRegion):
        otsu_threshold(vol, region)
