import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from aerialmission.sensing import PixelPoint
from aerialmission.vision import (
    HsvPixel,
    RasterImage,
    SegModel,
    Tracker,
    VisionError,
    _design,
    adaptive_retrain,
    cross_entropy,
    dbscan_labels,
    extract_top_pair,
    fb_track,
    fit_rectangle_corners,
    hsv_array,
    hsv_to_rgb,
    kmeans_segment,
    logreg_train,
    lr_bound,
    mask_iou,
    ratio_check,
    read_pgm,
    read_ppm,
    rgb_array,
    rgb_to_hsv,
    segment_structure,
    select_patch_cluster,
    write_pgm,
    write_ppm,
)
from aerialmission.vision_scenes import PATCH_WHITE, block_scene, snowy_recolor, structure_scene, texture, zoom_sequence
from oracles import corner_error, dbscan_reference, irls_logistic, rect_raster, rect_vertices

DATA = Path(__file__).parent / "data"


# -- colour ----------------------------------------------------------------------------------


def test_hsv_examples():
    assert rgb_to_hsv((255, 0, 0)) == HsvPixel(0.0, 1.0, 1.0)
    g = rgb_to_hsv((128, 128, 128))
    assert g.s == 0.0 and g.v == pytest.approx(128 / 255, abs=1e-9)
    assert rgb_to_hsv((0, 0, 255)).h == pytest.approx(240.0)
    assert rgb_to_hsv((255, 0, 1)).h > 359.0


@settings(max_examples=300, deadline=None)
@given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
def test_hsv_round_trip(rgb):
    p = rgb_to_hsv(rgb)
    assert 0 <= p.h < 360 and 0 <= p.s <= 1 and 0 <= p.v <= 1
    back = rgb_array(np.array([p.h, p.s, p.v]))
    assert np.max(np.abs(back - np.array(rgb))) <= 1.0 + 1e-9
    assert hsv_to_rgb(p) == tuple(rgb)


def test_raster_buffer_length_checked():
    with pytest.raises(ValueError):
        RasterImage(2, 2, bytes(11))


# -- k-means -----------------------------------------------------------------------------------


def test_kmeans_two_tone_centres():
    a = np.zeros((20, 30, 3), np.uint8)
    a[:, :12] = (30, 160, 200)
    a[:, 12:] = (240, 240, 240)
    r = kmeans_segment(RasterImage.from_array(a), 2, seed=3)
    got = sorted(hsv_to_rgb(c) for c in r.centers)
    want = sorted([(30, 160, 200), (240, 240, 240)])
    assert np.max(np.abs(np.subtract(got, want))) <= 1
    assert len(np.unique(r.labels[:, :12])) == 1 and len(np.unique(r.labels[:, 12:])) == 1


def test_kmeans_rejects_tiny_roi():
    with pytest.raises(ValueError):
        kmeans_segment(RasterImage.from_array(np.zeros((1, 2, 3))), 3)


def test_kmeans_deterministic():
    img, _, _ = block_scene(2)
    a, b = kmeans_segment(img, 3, seed=5), kmeans_segment(img, 3, seed=5)
    assert np.array_equal(a.labels, b.labels) and a.sse == b.sse


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_kmeans_sse_non_increasing(seed, k):
    rng = np.random.default_rng(seed)
    img = RasterImage.from_array(rng.integers(0, 256, (12, 16, 3)))
    sse = kmeans_segment(img, k, seed=seed).sse
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(sse, sse[1:]))


def test_patch_cluster_recall_on_block_scene():
    for seed in range(5):
        img, patch, _ = block_scene(seed, angle=0.2 * seed)
        r = kmeans_segment(img, 3, seed=seed)
        sel = r.labels == select_patch_cluster(r.centers, rgb_to_hsv(PATCH_WHITE))
        assert np.count_nonzero(sel & patch) / np.count_nonzero(patch) > 0.99


def test_select_patch_cluster_examples():
    white, red = HsvPixel(0.0, 0.0, 1.0), HsvPixel(0.0, 1.0, 1.0)
    assert select_patch_cluster([red, white], HsvPixel(0.0, 0.02, 0.97)) == 1
    assert select_patch_cluster([HsvPixel(180.0, 1.0, 1.0), HsvPixel(359.0, 1.0, 1.0)], HsvPixel(1.0, 1.0, 1.0)) == 1
    assert select_patch_cluster([red, red], red) == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 359.9), st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=3), st.tuples(st.floats(0, 359.9), st.floats(0, 1), st.floats(0, 1)))
def test_select_patch_cluster_matches_exhaustive(centres, cal):
    def dist(a, b):
        dh = abs(a[0] - b[0]) % 360
        dh = min(dh, 360 - dh) / 180
        return math.sqrt(dh**2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)

    ds = [dist(c, cal) for c in centres]
    best = min(range(3), key=lambda i: (ds[i], i))
    got = select_patch_cluster([HsvPixel(*c) for c in centres], HsvPixel(*cal))
    assert ds[got] == pytest.approx(ds[best], abs=1e-12)


# -- rectangle fitting ---------------------------------------------------------------------------


def test_axis_aligned_rectangle_exact():
    m = np.zeros((200, 200), bool)
    m[100:120, 100:140] = True
    got = [(c.u, c.v) for c in fit_rectangle_corners(m)]
    assert np.allclose(got, [(100, 100), (140, 100), (140, 120), (100, 120)], atol=1e-9)


def test_rotated_30_within_one_pixel():
    centre, size, ang = (120.0, 110.0), (40.0, 20.0), math.radians(30)
    got = fit_rectangle_corners(rect_raster(240, 220, centre, size, ang))
    assert corner_error(got, rect_vertices(centre, size, ang)) < 1.0


def test_salt_noise_outside_component_ignored():
    rng = np.random.default_rng(0)
    centre, size, ang = (80.0, 70.0), (50.0, 24.0), 0.4
    m = rect_raster(160, 140, centre, size, ang)
    clean = fit_rectangle_corners(m)
    far = ~ndimage.binary_dilation(m, iterations=2)
    salt = far & (rng.uniform(size=m.shape) < 0.05)
    noisy = fit_rectangle_corners(m | salt)
    assert [(c.u, c.v) for c in noisy] == [(c.u, c.v) for c in clean]


def test_corners_sorted_clockwise_from_top_left():
    for ang in np.linspace(0, math.pi, 13):
        cs = fit_rectangle_corners(rect_raster(200, 200, (100, 100), (60, 30), ang))
        p = np.array([[c.u, c.v] for c in cs])
        sums = p.sum(axis=1)
        ties = np.flatnonzero(sums <= sums.min() + 1e-9)
        assert ties[np.argmin(p[ties, 1])] == 0
        cross = [(p[(i + 1) % 4] - p[i])[0] * (p[(i + 2) % 4] - p[(i + 1) % 4])[1] - (p[(i + 1) % 4] - p[i])[1] * (p[(i + 2) % 4] - p[(i + 1) % 4])[0] for i in range(4)]
        assert all(c > 0 for c in cross)  # clockwise on screen (v axis down)


def test_empty_mask_no_patch():
    with pytest.raises(VisionError) as e:
        fit_rectangle_corners(np.zeros((10, 10), bool))
    assert e.value.code == "NO_PATCH"


def _corners(*uv):
    return [PixelPoint(float(u), float(v)) for u, v in uv]


def test_ratio_check_examples():
    rect = _corners((0, 0), (40, 0), (40, 20), (0, 20))
    assert ratio_check(rect, 2.0)
    assert ratio_check(rect, 0.5)
    assert not ratio_check(rect, 4.0)
    assert not ratio_check(_corners((0, 0), (25, 0), (25, 10), (0, 10)), 2.0)  # exactly 25% off
    assert not ratio_check(_corners((0, 0), (10, 0), (10, 0), (0, 0)), 2.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1, 50), st.floats(1, 50), st.floats(0.05, 20), st.floats(0.3, 3.0), st.floats(0, 6.28))
def test_ratio_check_scale_invariant(a, b, scale, phys, ang):
    c, s = math.cos(ang), math.sin(ang)
    base = [(0, 0), (a, 0), (a, b), (0, b)]
    rot = [(x * c - y * s, x * s + y * c) for x, y in base]
    r1 = ratio_check(_corners(*rot), phys)
    r2 = ratio_check(_corners(*[(x * scale, y * scale) for x, y in rot]), phys)
    hi, lo = max(a, b), min(a, b)
    ph = max(phys, 1 / phys)
    if abs(abs(hi / lo - ph) / ph - 0.25) > 1e-9:
        assert r1 == r2


def test_block_scene_end_to_end_corners():
    for seed in range(4):
        img, _, truth = block_scene(seed, patch_size=(44.0, 30.0), angle=0.15 * seed)
        r = kmeans_segment(img, 3, seed=seed)
        patch = r.labels == select_patch_cluster(r.centers, rgb_to_hsv(PATCH_WHITE))
        found = fit_rectangle_corners(patch)
        assert max(math.hypot(a.u - b.u, a.v - b.v) for a, b in zip(found, truth)) < 2.0
        assert ratio_check(found, 44.0 / 30.0)


# -- logistic regression -----------------------------------------------------------------------


def _yellow_gray(n=200, seed=0):
    rng = np.random.default_rng(seed)
    yellow = hsv_array(np.clip(rng.normal((225, 190, 35), 6, (n, 3)), 0, 255))
    gray = hsv_array(np.clip(rng.normal((90, 88, 86), 6, (n, 3)), 0, 255))
    return np.vstack([yellow, gray]), np.r_[np.ones(n), np.zeros(n)]


def test_logreg_separable_perfect():
    x, y = _yellow_gray()
    m = logreg_train(x, y, epochs=500)
    assert np.array_equal(m.predict(x), y.astype(bool))


def test_logreg_loss_monotone_below_bound():
    x, y = _yellow_gray(seed=1)
    hist = []
    logreg_train(x, y, epochs=300, lr=lr_bound(x), history=hist)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_logreg_matches_irls():
    rng = np.random.default_rng(3)
    hsv = np.column_stack([rng.uniform(0, 360, 100), rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)])
    x = _design(hsv)
    y = (rng.uniform(size=100) < 1 / (1 + np.exp(-x @ np.array([-1.0, 4.0, 2.0, -2.5])))).astype(float)
    m = logreg_train(hsv, y, epochs=5000)
    assert np.allclose(m.weights, irls_logistic(x, y), atol=1e-6)
    assert cross_entropy(m.weights, x, y) <= cross_entropy(irls_logistic(x, y), x, y) + 1e-9


def test_logreg_rejects_single_class():
    with pytest.raises(ValueError):
        logreg_train(np.zeros((5, 3)), np.ones(5))


def test_segmodel_weights_finite():
    with pytest.raises(ValueError):
        SegModel([0.0, np.nan, 0.0, 0.0])


# -- structure corners -------------------------------------------------------------------------


def _trained(seed=0):
    img, mask, top = structure_scene(seed)
    model = logreg_train(hsv_array(img.array()).reshape(-1, 3), mask.ravel(), epochs=2000, seed=seed)
    return img, mask, top, model


def test_structure_top_pair():
    for seed in range(3):
        img, mask, top, model = _trained(seed)
        pair = extract_top_pair(segment_structure(img, model))
        assert pair[0].u < pair[1].u
        for a, b in zip(pair, top):
            assert abs(a.u - b.u) <= 2 and abs(a.v - b.v) <= 2


def test_uniform_frame_no_structure():
    _, _, _, model = _trained()
    gray = RasterImage.from_array(np.full((60, 80, 3), (90, 88, 86)))
    with pytest.raises(VisionError) as e:
        extract_top_pair(segment_structure(gray, model))
    assert e.value.code == "NO_STRUCTURE"


def test_tiny_blob_degenerate():
    m = np.zeros((40, 40), bool)
    m[10:13, 10:13] = True
    with pytest.raises(VisionError) as e:
        extract_top_pair(m)
    assert e.value.code == "DEGENERATE"


def test_shifted_corner_fault():
    img, _, _, model = _trained()
    mask = segment_structure(img, model)
    good = extract_top_pair(mask)
    bad = extract_top_pair(mask, offset=(6.0, -4.0))
    for g, b in zip(good, bad):
        assert (b.u - g.u, b.v - g.v) == (6.0, -4.0)


# -- DBSCAN and retraining -----------------------------------------------------------------------


def test_dbscan_two_blobs_and_isolated_noise():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 0.05, (40, 2))
    b = rng.normal(5, 0.05, (40, 2))
    lab = dbscan_labels(np.vstack([a, b, [[20.0, 20.0]]]), 0.3, 4)
    assert set(lab[:40]) == {0} and set(lab[40:80]) == {1} and lab[80] == -1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 120), st.floats(0.05, 0.5), st.integers(1, 6))
def test_dbscan_matches_reference(seed, n, eps, min_pts):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(rng.uniform(0, 2, 2), 0.15, (n // 2 + 1, 2)), rng.uniform(0, 2, (n // 2, 2))])
    assert np.array_equal(dbscan_labels(x, eps, min_pts), dbscan_reference(x, eps, min_pts))


def test_dbscan_rejects_bad_params():
    with pytest.raises(ValueError):
        dbscan_labels(np.zeros((3, 2)), 0.0, 2)


def test_retrain_stationary_self_consistent():
    img, _, _, prior = _trained(1)
    new = adaptive_retrain(img, prior, seed=1)
    assert mask_iou(segment_structure(img, new), segment_structure(img, prior)) > 0.9


def test_retrain_recovers_snowy_recolor():
    img, mask, _, prior = _trained(2)
    snow = snowy_recolor(img, 2)
    assert mask_iou(segment_structure(snow, prior), mask) < 0.5
    assert mask_iou(segment_structure(snow, adaptive_retrain(snow, prior, seed=2)), mask) > 0.9


def test_retrain_single_cluster_fails():
    _, _, _, prior = _trained()
    flat = RasterImage.from_array(np.full((40, 40, 3), (225, 190, 35)))
    with pytest.raises(VisionError) as e:
        adaptive_retrain(flat, prior)
    assert e.value.code == "RETRAIN_FAILED"


# -- tracking --------------------------------------------------------------------------------------


def test_track_pure_translation():
    t = texture(1, 160, 120)
    nxt = np.roll(t, (4, -3), axis=(0, 1))
    box, failed = fb_track((60, 40, 24, 24), t, nxt)
    assert not failed
    assert box[0] == pytest.approx(57.0, abs=0.05) and box[1] == pytest.approx(44.0, abs=0.05)


def test_track_noise_fails():
    t = texture(2, 160, 120)
    noise = np.random.default_rng(0).uniform(0, 255, t.shape).astype(np.float32)
    assert fb_track((60, 40, 24, 24), t, noise)[1]


def test_track_out_of_bounds_rejected():
    t = texture(2, 50, 50)
    with pytest.raises(ValueError):
        fb_track((40, 40, 20, 20), t, t)


def test_track_zoom_descent_within_three_px():
    frames, centres = zoom_sequence(0)
    box = (80.0, 60.0, 24.0, 24.0)
    for k in range(1, len(frames)):
        box, failed = fb_track(box, frames[k - 1], frames[k])
        assert not failed
        assert math.hypot(box[0] + 12 - centres[k][0], box[1] + 12 - centres[k][1]) < 3.0


def test_tracker_reseeds_every_50_frames():
    t = texture(3, 120, 100)
    tr = Tracker((40.0, 30.0, 20.0, 20.0))
    for k in range(1, 101):
        box, _ = tr.step(t, detection=(41.0, 31.0, 20.0, 20.0))
        if k in (50, 100):
            assert box == (41.0, 31.0, 20.0, 20.0)
    assert tr.frames == 100


# -- I/O and golden regression --------------------------------------------------------------------


def test_ppm_pgm_round_trip(tmp_path):
    img, mask, _ = block_scene(4)
    write_ppm(tmp_path / "a.ppm", img)
    write_pgm(tmp_path / "m.pgm", mask)
    assert read_ppm(tmp_path / "a.ppm") == img
    assert np.array_equal(read_pgm(tmp_path / "m.pgm") > 0, mask)


def test_golden_block_patch_and_corners():
    img = read_ppm(DATA / "block.ppm")
    golden = read_pgm(DATA / "block_patch.pgm") > 0
    r = kmeans_segment(img, 3, seed=0)
    patch = r.labels == select_patch_cluster(r.centers, rgb_to_hsv(PATCH_WHITE))
    assert np.array_equal(patch, golden)
    want = json.loads((DATA / "corners.json").read_text())
    assert np.allclose([[c.u, c.v] for c in fit_rectangle_corners(patch)], want["block"], atol=1e-9)


def test_golden_structure_mask_and_pair():
    img = read_ppm(DATA / "structure.ppm")
    want = json.loads((DATA / "corners.json").read_text())
    model = SegModel(want["weights"])
    mask = segment_structure(img, model)
    assert np.array_equal(mask, read_pgm(DATA / "structure_mask.pgm") > 0)
    assert [[c.u, c.v] for c in extract_top_pair(mask)] == want["structure_top_pair"]
