import math

import numpy as np
import pytest

from conftest import THICK, case_spec, on_axis
from oralcad.cb_pipeline import (
    build_training_pool,
    denoised_bone_mask,
    detect_candidates,
    overlaps_truth,
    run_cb_slice,
)
from oralcad.detect import detect_slices, detect_volume
from oralcad.errors import ContractError, EmptyPoolError
from oralcad.eval3d import GroundTruthLesion
from oralcad.imaging import fill_se_for_diameter, morph_close
from oralcad.mlp import init_network
from oralcad.ob_pipeline import clear_bottom_third, ob_from_mask, run_ob_slice, subtract
from oralcad.phantom import ArcGeometry, CavitySpec, LesionSpec, PhantomSpec, band_coordinates, generate_phantom
from oralcad.volume_io import CtVolume, VoxelSpacing


def constant_model(score):
    m = init_network(0)
    m.w1[:] = 0
    m.w2[:] = 0
    m.b2[:] = [math.log(score / (1 - score)), 0.0]
    return m


def slice_with(lesions, k=10, **kw):
    spec = case_spec(seed=5, lesions=lesions, n_slices=21, **kw)
    vol, _ = generate_phantom(spec)
    return spec, vol[k]


# -- close-border -----------------------------------------------------------

def test_one_candidate_at_lesion_centroid():
    c = on_axis(10.0, 5.0)
    _, sl = slice_with([LesionSpec("CB", c, 10.0)])
    cands = detect_candidates(sl, THICK)
    assert len(cands) == 1
    cx, cy = cands[0][0].centroid
    assert math.hypot(cx - c[0] / 0.2, cy - c[1] / 0.2) <= 2.0
    roi = cands[0][1]
    assert roi.pixels.dtype == np.uint8 and roi.source_blob is cands[0][0]


@pytest.mark.parametrize("diameter", [7.5, 10.0, 15.0, 20.0])
def test_candidate_recall_over_lesion_depth(diameter):
    # slices cutting the sphere in a chord under 5 mm fall below the fill size
    sp = VoxelSpacing()
    r = diameter / 2
    n = int(2 * r / sp.slice_thickness_mm) + 5
    z0 = (n - 1) * sp.slice_thickness_mm / 2
    c = on_axis(-10.0, z0)
    vol, _ = generate_phantom(PhantomSpec(seed=int(diameter), n_slices=n, lesions=(LesionSpec("CB", c, diameter),)))
    hits = total = 0
    for k in range(n):
        dz = k * sp.slice_thickness_mm - z0
        if r * r - dz * dz <= 2.5 ** 2:
            continue
        total += 1
        hits += any(math.hypot(b.centroid[0] * sp.in_plane_mm - c[0], b.centroid[1] * sp.in_plane_mm - c[1]) < r
                    for b, _ in detect_candidates(vol[k], sp))
    assert total > 0 and hits / total >= 0.9


def test_small_hole_is_not_a_candidate():
    _, sl = slice_with([LesionSpec("CB", on_axis(0.0, 5.0), 3.0)], cb_diameter_range_mm=(1.0, 20.0))
    assert detect_candidates(sl, THICK) == []


def test_candidate_in_bottom_third_is_excluded():
    img = np.full((120, 120), 3000, np.uint16)
    ys, xs = np.mgrid[0:120, 0:120]
    for cy in (35, 95):   # 8.4 mm holes; the second sits below row 80
        d = np.hypot(xs - 60, ys - cy)
        img[(d > 14) & (d <= 19)] = 50000
    cands = detect_candidates(img, VoxelSpacing(0.3, 0.3))
    assert [round(b.centroid[1]) for b, _ in cands] == [35]


def test_constant_slice_has_no_candidates():
    assert detect_candidates(np.full((32, 32), 7, np.uint16), THICK) == []
    assert denoised_bone_mask(np.full((32, 32), 7, np.uint16), THICK)[1] is None


def test_run_cb_slice_scores_and_threshold(mixed_case):
    _, vol, _ = mixed_case
    dets = run_cb_slice(vol[20], THICK, constant_model(0.9), 0.5, slice_index=20)
    assert dets and all(d.kind == "CB" and d.slice_index == 20 for d in dets)
    assert all(d.score == pytest.approx(0.9, abs=1e-12) for d in dets)
    assert run_cb_slice(vol[20], THICK, constant_model(0.9), 1.0) == []


def test_trained_model_flags_the_lesion_only(mixed_case, small_model):
    spec, vol, truths = mixed_case
    cb = [t for t in truths if t.kind == "CB"]
    dets = run_cb_slice(vol[20], THICK, small_model, 0.5, slice_index=20)
    assert len(dets) == 1
    assert overlaps_truth(dets[0].centroid_px, 20, THICK, cb)


def test_threshold_monotone(mixed_case, small_model):
    _, vol, _ = mixed_case
    prev = None
    for t in (1.0, 0.9, 0.5, 0.1, 0.0):
        now = {(d.slice_index, d.centroid_px) for k in range(15, 26)
               for d in run_cb_slice(vol[k], THICK, small_model, t, slice_index=k)}
        if prev is not None:
            assert prev <= now
        prev = now


def test_overlaps_truth_geometry():
    t = [GroundTruthLesion("p", "CB", (10.0, 10.0, 5.0), 10.0)]
    sp = VoxelSpacing(0.2, 0.5)
    assert overlaps_truth((50, 50), 10, sp, t)
    assert not overlaps_truth((50, 50), 21, sp, t)      # z = 10.5, beyond the sphere
    assert not overlaps_truth((80, 50), 10, sp, t)      # 6 mm away in plane


def test_training_pool_labels():
    spec = PhantomSpec(seed=2, n_slices=70, lesions=(LesionSpec("CB", on_axis(5.0, 7.0), 12.0),),
                       cavities=(CavitySpec(on_axis(-30.0, 7.0), 8.0),))
    vol, truths = generate_phantom(spec)
    pool = build_training_pool([(vol, truths)])
    assert sum(s.label == "lesion" for s in pool) >= 40
    normal_only = build_training_pool([(vol, [])])
    assert {s.label for s in normal_only} == {"normal"}


def test_empty_pool_raises():
    vol = CtVolume(np.full((3, 32, 32), 5, np.uint16), THICK, "flat")
    with pytest.raises(EmptyPoolError):
        build_training_pool([(vol, [])])


# -- open-border ------------------------------------------------------------

def test_subtract_rules():
    rng = np.random.default_rng(0)
    a, b = rng.random((20, 20)) < 0.5, rng.random((20, 20)) < 0.5
    expect = np.array([[a[i, j] and not b[i, j] for j in range(20)] for i in range(20)])
    assert np.array_equal(subtract(a, b), expect)
    assert not subtract(a, a).any()
    assert np.array_equal(subtract(a, np.zeros_like(a)), a)
    with pytest.raises(ContractError):
        subtract(a, b[:5])


def test_clear_bottom_third():
    m = np.ones((9, 2), bool)
    assert clear_bottom_third(m)[:, 0].tolist() == [True] * 7 + [False] * 2


def test_gap_detected_inside_the_gap():
    c = on_axis(25.0, 5.0)
    spec, sl = slice_with([LesionSpec("OB", c, 15.0)])
    dets = run_ob_slice(sl, THICK, slice_index=10)
    assert len(dets) == 1
    d = dets[0]
    assert d.kind == "OB" and d.score == 1.0 and 5 < d.equiv_diameter_mm < 30
    arc = ArcGeometry()
    ys, xs = np.mgrid[0:512, 0:512]
    rad, s = band_coordinates(arc, xs * 0.2, ys * 0.2)
    _, s0 = band_coordinates(arc, c[0], c[1])
    gap = (rad >= arc.inner_radius_mm) & (rad <= arc.outer_radius_mm) & (np.abs(s - s0) <= 7.5)
    gy, gx = np.nonzero(gap)
    assert np.min(np.hypot(gx - d.centroid_px[0], gy - d.centroid_px[1])) <= 3.0


@pytest.mark.parametrize("diameter", [3.0, 40.0])
def test_gap_outside_window_not_detected(diameter):
    _, sl = slice_with([LesionSpec("OB", on_axis(0.0, 5.0), diameter)], ob_diameter_range_mm=(1.0, 50.0))
    assert run_ob_slice(sl, THICK) == []


def test_step_four_contains_step_three(mixed_case):
    _, vol, _ = mixed_case
    _, closed = denoised_bone_mask(vol[20], THICK)
    s3 = clear_bottom_third(closed)
    s4 = morph_close(s3, fill_se_for_diameter(30, THICK))
    assert not (s3 & ~s4).any()


def test_enclosed_holes_excluded_on_request(mixed_case):
    _, vol, _ = mixed_case
    _, closed = denoised_bone_mask(vol[20], THICK)
    literal = ob_from_mask(closed, THICK)
    combined = ob_from_mask(closed, THICK, exclude_enclosed=True)
    assert len(literal) > len(combined) == 1
    assert ob_from_mask(None, THICK) == []


def test_ob_deterministic(mixed_case):
    _, vol, _ = mixed_case
    assert run_ob_slice(vol[18], THICK) == run_ob_slice(vol[18], THICK)


# -- whole volume -----------------------------------------------------------

def test_mixed_volume_gives_one_cluster_per_lesion(mixed_case, small_model):
    _, vol, truths = mixed_case
    res = detect_volume(vol, small_model, workers=1)
    assert sorted(c.kind for c in res.clusters) == ["CB", "OB"]
    for c in res.clusters:
        t = next(t for t in truths if t.kind == c.kind)
        assert math.dist(c.centroid_mm, t.centroid_mm) <= 5.0
    h = vol.height
    assert all(d.centroid_px[1] <= 2 * h / 3 for d in res.cb + res.ob)


def test_normal_volume_gives_no_clusters(normal_case, small_model):
    _, vol, _ = normal_case
    assert detect_volume(vol, small_model, workers=1).clusters == []


def test_parallel_matches_serial(mixed_case, small_model):
    _, vol, _ = mixed_case
    assert detect_slices(vol, small_model, workers=1) == detect_slices(vol, small_model, workers=2)
