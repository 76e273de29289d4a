from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from replaylab.augment import (
    AugmentPlan,
    adjust_brightness,
    adjust_contrast,
    adjust_gamma,
    apply_plan,
    center_crop,
    denormalize,
    elastic_displacement_field,
    elastic_warp,
    embed_raster,
    grid_warp,
    horizontal_flip,
    load_tensor,
    normalize,
    optical_warp,
    read_ppm,
    resize_bilinear,
    rotate90,
    save_tensor,
    spatial_step,
    write_ppm,
)

GOLDEN = Path(__file__).parent / "golden"


def random_image(h=128, w=128, seed=0):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


# ---------------------------------------------------------------------------
# step 1: center crop
# ---------------------------------------------------------------------------


def test_center_crop_128_offsets_are_14():
    img = random_image()
    out = center_crop(img, 100, 100)
    assert out.shape == (100, 100, 3)
    # exhaustive pixel oracle: out(x, y) == in(x + 14, y + 14)
    np.testing.assert_array_equal(out, img[14:114, 14:114])


def test_center_crop_identity_when_sizes_match():
    img = random_image(40, 40, seed=3)
    np.testing.assert_array_equal(center_crop(img, 40, 40), img)


def test_center_crop_too_large_raises():
    with pytest.raises(ValueError, match="larger than image"):
        center_crop(random_image(50, 50), 100, 100)


# ---------------------------------------------------------------------------
# step 2: spatial
# ---------------------------------------------------------------------------


def test_double_flip_is_identity():
    img = random_image(9, 7, seed=1)
    np.testing.assert_array_equal(horizontal_flip(horizontal_flip(img)), img)


def test_four_quarter_turns_are_identity():
    img = random_image(12, 12, seed=2)
    out = img
    for _ in range(4):
        out = rotate90(out, 1)
    np.testing.assert_array_equal(out, img)


def test_flip_of_asymmetric_3x3_fixture():
    # hand-enumerated 3x3 layout: columns reverse, rows stay
    img = np.arange(27, dtype=np.uint8).reshape(3, 3, 3)
    out = horizontal_flip(img)
    expected = np.stack([img[:, 2], img[:, 1], img[:, 0]], axis=1)
    np.testing.assert_array_equal(out, expected)
    assert tuple(out[0, :, 0]) == (6, 3, 0)


def test_spatial_step_output_is_flip_or_rotation():
    img = random_image(16, 16, seed=4)
    candidates = [horizontal_flip(img)] + [rotate90(img, k) for k in (1, 2, 3)]
    for seed in range(20):
        out = spatial_step(img, np.random.default_rng(seed))
        assert any(out.shape == c.shape and np.array_equal(out, c) for c in candidates)


# ---------------------------------------------------------------------------
# step 3: photometric
# ---------------------------------------------------------------------------


def test_unit_gamma_is_identity():
    img = random_image(20, 20, seed=5)
    np.testing.assert_array_equal(adjust_gamma(img, 1.0), img)


def test_zero_contrast_and_brightness_are_identity():
    img = random_image(20, 20, seed=6)
    np.testing.assert_array_equal(adjust_contrast(img, 0.0), img)
    np.testing.assert_array_equal(adjust_brightness(img, 0.0), img)


def test_gamma_half_on_quarter_value():
    # 0.25 ** 0.5 == 0.5 on the unit scale
    img = np.full((4, 4, 3), round(0.25 * 255), dtype=np.uint8)
    out = adjust_gamma(img, 0.5)
    expected = np.clip(np.rint(np.power(round(0.25 * 255) / 255.0, 0.5) * 255), 0, 255)
    assert np.all(out == expected)
    assert abs(out[0, 0, 0] / 255.0 - 0.5) < 0.01


def test_photometric_clamps_to_valid_range():
    img = random_image(10, 10, seed=7)
    bright = adjust_brightness(img, 0.4)
    dark = adjust_brightness(img, -0.4)
    for out in (bright, dark):
        assert out.dtype == np.uint8
        assert out.min() >= 0 and out.max() <= 255


# ---------------------------------------------------------------------------
# step 4: distortions
# ---------------------------------------------------------------------------


def test_elastic_zero_alpha_zero_affine_is_identity():
    img = random_image(32, 32, seed=8)
    out = elastic_warp(img, np.random.default_rng(0), alpha=0.0, sigma=6.0,
                       alpha_affine=0.0)
    np.testing.assert_array_equal(out, img)


def test_grid_zero_jitter_is_identity():
    img = random_image(40, 40, seed=9)
    out = grid_warp(img, np.random.default_rng(0), cells=5, jitter=0.0)
    np.testing.assert_array_equal(out, img)


def test_optical_zero_limits_is_identity():
    img = random_image(40, 40, seed=10)
    out = optical_warp(img, np.random.default_rng(0), distort_limit=0.0,
                       shift_limit=0.0)
    np.testing.assert_array_equal(out, img)


def test_elastic_displacement_golden_values():
    # pinned at first implementation: max |displacement| for alpha=120, sigma=6
    expected = {0: 13.972340178826, 1: 12.202037455234, 2: 14.917991102306}
    for seed, value in expected.items():
        dy, dx = elastic_displacement_field((128, 128), np.random.default_rng(seed),
                                            alpha=120.0, sigma=6.0)
        assert np.hypot(dx, dy).max() == pytest.approx(value, rel=1e-9)


def test_warps_preserve_shape_and_dtype():
    img = random_image(64, 48, seed=11)
    for warp in (
        lambda: elastic_warp(img, np.random.default_rng(1)),
        lambda: grid_warp(img, np.random.default_rng(2)),
        lambda: optical_warp(img, np.random.default_rng(3)),
    ):
        out = warp()
        assert out.shape == img.shape
        assert out.dtype == np.uint8


# ---------------------------------------------------------------------------
# step 5: resize
# ---------------------------------------------------------------------------


def test_resize_constant_image_stays_constant():
    img = np.full((17, 13, 3), 77, dtype=np.uint8)
    out = resize_bilinear(img, 224, 224)
    assert np.all(out == 77)


def test_resize_checkerboard_midpoint_average():
    cb = np.zeros((2, 2, 3), dtype=np.float64)
    cb[0, 0] = 255.0
    cb[1, 1] = 255.0
    out = resize_bilinear(cb, 3, 3)
    assert out[1, 1, 0] == pytest.approx(127.5)


def test_resize_golden_fixture_matches():
    src = load_tensor(GOLDEN / "resize_8x8_input.bin")
    expected = load_tensor(GOLDEN / "resize_224x224_expected.bin")
    np.testing.assert_array_equal(resize_bilinear(src, 224, 224), expected)


def test_resize_agrees_with_independent_reference():
    PIL = pytest.importorskip("PIL.Image")
    src = load_tensor(GOLDEN / "resize_8x8_input.bin")
    mine = resize_bilinear(src.astype(np.float64), 224, 224)
    for c in range(3):
        ref = PIL.fromarray(src[:, :, c].astype(np.float32), mode="F")
        ref = np.asarray(ref.resize((224, 224), PIL.BILINEAR), dtype=np.float64)
        assert np.abs(ref - mine[:, :, c]).max() < 1e-3


# ---------------------------------------------------------------------------
# step 6: normalize
# ---------------------------------------------------------------------------


def test_normalize_mean_maps_to_zero():
    img = np.zeros((2, 2, 3), dtype=np.float64)
    img[:, :, 0] = 0.485 * 255
    img[:, :, 1] = 0.456 * 255
    img[:, :, 2] = 0.406 * 255
    out = normalize(img)
    assert np.abs(out).max() < 1e-12


def test_normalize_white_channel0():
    img = np.full((1, 1, 3), 255, dtype=np.uint8)
    out = normalize(img)
    assert out[0, 0, 0] == pytest.approx((1.0 - 0.485) / 0.229)
    assert out[0, 0, 1] == pytest.approx((1.0 - 0.456) / 0.224)
    assert out[0, 0, 2] == pytest.approx((1.0 - 0.406) / 0.225)


def test_normalize_denormalize_round_trip():
    img = random_image(8, 8, seed=12).astype(np.float64)
    back = denormalize(normalize(img))
    assert np.abs(back - img).max() < 1e-6


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


def test_apply_plan_eval_path_is_deterministic():
    img = random_image()
    plan = AugmentPlan()
    a = apply_plan(img, plan, None, training=False)
    b = apply_plan(img, plan, None, training=False)
    np.testing.assert_array_equal(a, b)
    expected = normalize(resize_bilinear(center_crop(img, 100, 100), 224, 224))
    np.testing.assert_array_equal(a, expected)


def test_apply_plan_training_is_seed_reproducible():
    img = random_image(seed=13)
    plan = AugmentPlan()
    a = apply_plan(img, plan, np.random.default_rng(42), training=True)
    b = apply_plan(img, plan, np.random.default_rng(42), training=True)
    np.testing.assert_array_equal(a, b)


def test_apply_plan_output_shape_contract():
    img = random_image(seed=14)
    plan = AugmentPlan()
    for seed in range(12):
        out = apply_plan(img, plan, np.random.default_rng(seed), training=True)
        assert out.shape == (224, 224, 3)
        assert np.all(np.isfinite(out))


def test_stochastic_firing_rates_match_probabilities():
    # binomial 3-sigma bounds over 10^4 trials for p = 0.5 / 0.5 / 0.3
    img = random_image(16, 16, seed=15)
    plan = AugmentPlan(crop_size=(16, 16), resize_to=(16, 16))
    rng = np.random.default_rng(123)
    n = 10_000
    fired = {"spatial": 0, "photometric": 0, "distortion": 0}
    for _ in range(n):
        trace: dict = {}
        apply_plan(img, plan, rng, training=True, trace=trace)
        for key in fired:
            fired[key] += trace[key]
    for key, p in (("spatial", 0.5), ("photometric", 0.5), ("distortion", 0.3)):
        sigma = (p * (1 - p) / n) ** 0.5
        assert abs(fired[key] / n - p) < 3 * sigma, (key, fired[key] / n)


def test_apply_plan_requires_rng_when_training():
    with pytest.raises(ValueError, match="requires an rng"):
        apply_plan(random_image(), AugmentPlan(), None, training=True)


def test_plan_rejects_bad_probability():
    with pytest.raises(ValueError, match="p_spatial"):
        AugmentPlan(p_spatial=1.5)


# ---------------------------------------------------------------------------
# embedding and fixture I/O
# ---------------------------------------------------------------------------


def test_embed_raster_pools_blocks():
    img = np.zeros((8, 8, 3), dtype=np.float64)
    img[:4, :4, 0] = 1.0  # top-left block, channel 0
    vec = embed_raster(img, grid=2)
    assert vec.shape == (12,)
    assert vec[0] == pytest.approx(1.0)
    assert vec[1:].max() == 0.0


def test_embed_raster_rejects_indivisible_grid():
    with pytest.raises(ValueError, match="not divisible"):
        embed_raster(np.zeros((10, 10, 3)), grid=3)


def test_ppm_round_trip(tmp_path):
    img = random_image(11, 17, seed=16)
    path = tmp_path / "img.ppm"
    write_ppm(path, img)
    np.testing.assert_array_equal(read_ppm(path), img)


def test_ppm_with_comment_header(tmp_path):
    img = random_image(3, 3, seed=17)
    path = tmp_path / "c.ppm"
    raw = b"P6\n# a comment\n3 3\n255\n" + img.tobytes()
    path.write_bytes(raw)
    np.testing.assert_array_equal(read_ppm(path), img)


def test_tensor_round_trip(tmp_path):
    for arr in (random_image(5, 4, seed=18),
                np.random.default_rng(19).normal(size=(3, 2, 3))):
        path = tmp_path / "t.bin"
        save_tensor(path, arr)
        back = load_tensor(path)
        assert back.dtype == arr.dtype
        np.testing.assert_array_equal(back, arr)
