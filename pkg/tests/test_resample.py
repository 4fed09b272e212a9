import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from zssr.resample import (DELTA, GaussianKernelSpec, Kernel, KernelFormatError, cubic_weight,
                           downscale_with_kernel, gaussian_kernel, load_kernel, parse_kernel, resize_bicubic,
                           resize_by, sample_random_kernel, save_kernel, scaled_size)


class TestCubic:
    def test_center(self):
        assert cubic_weight(0.0) == 1.0

    @pytest.mark.parametrize("x", [1.0, 2.0, -1.0, -2.0, 2.5])
    def test_zeros(self, x):
        assert cubic_weight(x) == 0.0

    def test_half(self):
        assert cubic_weight(0.5) == pytest.approx(0.5625, abs=1e-15)

    def test_partition_of_unity(self):
        t = np.linspace(0, 1, 11)
        total = sum(cubic_weight(t - k) for k in range(-2, 3))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)


class TestResize:
    def test_identity_is_exact(self):
        img = np.random.default_rng(0).random((5, 7, 3))
        out = resize_bicubic(img, 5, 7)
        assert out is not img
        np.testing.assert_array_equal(out, img)

    @pytest.mark.parametrize("antialias", [True, False])
    @pytest.mark.parametrize("size", [(1, 1), (3, 9), (13, 4), (40, 40)])
    def test_constant(self, antialias, size):
        img = np.full((10, 10, 3), 0.37)
        np.testing.assert_allclose(resize_bicubic(img, *size, antialias=antialias), 0.37, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.25, 4.0), st.booleans(), st.integers(4, 12))
    def test_partition_of_unity_property(self, factor, antialias, n):
        img = np.full((n, n + 1, 1), 0.61)
        out = resize_by(img, factor, antialias=antialias)
        np.testing.assert_allclose(out, 0.61, atol=1e-9)

    def test_ramp_matches_oracle(self):
        img = np.arange(16.0).reshape(4, 4, 1) / 15.0
        np.testing.assert_allclose(resize_bicubic(img, 2, 2, antialias=True),
                                   oracles.resize(img, 2, 2, antialias=True), atol=1e-6)

    @pytest.mark.parametrize("shape,out,aa", [((6, 5, 3), (3, 10), True), ((9, 9, 1), (4, 4), False),
                                               ((7, 11, 1), (14, 5), True), ((16, 16, 3), (8, 8), True)])
    def test_random_matches_oracle(self, shape, out, aa):
        img = np.random.default_rng(4).random(shape)
        np.testing.assert_allclose(resize_bicubic(img, *out, antialias=aa), oracles.resize(img, *out, aa),
                                   atol=1e-9)

    def test_explicit_scale_matches_oracle(self):
        img = np.random.default_rng(5).random((9, 9, 1))
        np.testing.assert_allclose(resize_by(img, 0.5, size=(5, 5)),
                                   oracles.resize(img, 5, 5, True, scale=0.5), atol=1e-9)

    def test_clamped_unless_asked(self):
        img = np.zeros((8, 8, 1))
        img[4, 4] = 1.0
        assert resize_bicubic(img, 16, 16).min() >= 0.0
        assert resize_bicubic(img, 16, 16, clamp=False).min() < 0.0

    def test_up_then_down_is_close_on_smooth_images(self):
        from scipy.ndimage import gaussian_filter
        rng = np.random.default_rng(3)
        img = gaussian_filter(rng.random((40, 40)), 3)[:, :, None]
        img = (img - img.min()) / (img.max() - img.min())
        for s in (2, 3):
            back = resize_by(resize_by(img, s), 1 / s, size=img.shape[:2])
            assert np.abs(back - img).mean() < 0.02

    def test_rounding_half_away(self):
        assert scaled_size(5, 0.5) == 3
        assert scaled_size(3, 0.5) == 2
        assert scaled_size(7, 1 / 3) == 2


class TestDownscaleWithKernel:
    def test_delta_is_subsampling(self):
        img = np.arange(16.0).reshape(4, 4, 1)
        out = downscale_with_kernel(img, DELTA, 2)
        np.testing.assert_array_equal(out[:, :, 0], img[1::2, 1::2, 0])

    def test_constant(self):
        taps = np.random.default_rng(0).random((5, 3))
        out = downscale_with_kernel(np.full((12, 12, 3), 0.8), Kernel(taps), 2)
        np.testing.assert_allclose(out, 0.8, atol=1e-12)

    def test_box_on_impulse(self):
        img = np.zeros((8, 8, 1))
        img[3, 4] = 1.0
        box = np.full((3, 3), 1 / 9)
        np.testing.assert_allclose(downscale_with_kernel(img, Kernel(box), 2), oracles.downscale(img, box, 2),
                                   atol=1e-9)

    def test_output_size(self):
        assert downscale_with_kernel(np.zeros((9, 10, 1)), DELTA, 2).shape == (5, 5, 1)
        assert downscale_with_kernel(np.zeros((9, 10, 1)), DELTA, 3).shape == (3, 3, 1)

    def test_rejects_factor_one(self):
        with pytest.raises(ValueError):
            downscale_with_kernel(np.zeros((4, 4, 1)), DELTA, 1.0)

    def test_rejects_huge_kernel(self):
        with pytest.raises(ValueError):
            downscale_with_kernel(np.zeros((2, 2, 1)), Kernel(np.ones((7, 7))), 2)

    def test_off_center_anchor(self):
        img = np.random.default_rng(1).random((10, 10, 1))
        k = Kernel(np.random.default_rng(2).random((4, 3)), center=(1.5, 0.0))
        np.testing.assert_allclose(downscale_with_kernel(img, k, 2),
                                   oracles.downscale(img, np.asarray(k.taps), 2, k.center), atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(3, 16), st.integers(3, 16), st.integers(1, 7), st.integers(1, 7),
           st.sampled_from([1.5, 2.0, 3.0]), st.integers(0, 2 ** 31))
    def test_matches_oracle_property(self, h, w, kh, kw, s, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((h, w, 1))
        taps = rng.random((kh, kw)) + 0.01
        if kh > 2 * h + 1 or kw > 2 * w + 1 or round(h / s) < 1 or round(w / s) < 1:
            return
        np.testing.assert_allclose(downscale_with_kernel(img, Kernel(taps), s), oracles.downscale(img, taps, s),
                                   atol=1e-9)


class TestGaussianKernel:
    def test_isotropic_rotation_invariant(self):
        a = gaussian_kernel(GaussianKernelSpec(1.0, 1.0, 0.0, 2.0))
        b = gaussian_kernel(GaussianKernelSpec(1.0, 1.0, math.pi / 4, 2.0))
        np.testing.assert_allclose(a.taps, b.taps, atol=1e-12)

    def test_axis_aligned_separates(self):
        k = gaussian_kernel(GaussianKernelSpec(4.0, 1.0, 0.0, 2.0))
        r = (k.shape[0] - 1) // 2
        x = np.arange(-r, r + 1)
        rows = np.exp(-x ** 2 / (2 * 4.0))
        cols = np.exp(-x ** 2 / (2 * 1.0))
        expected = np.outer(rows / rows.sum(), cols / cols.sum())
        np.testing.assert_allclose(k.taps, expected, atol=1e-12)
        np.testing.assert_allclose(k.taps, np.outer(k.taps.sum(1), k.taps.sum(0)), atol=1e-12)

    def test_matches_scalar_density(self):
        k = gaussian_kernel(GaussianKernelSpec(2.5, 0.7, 1.1, 2.0))
        ref = oracles.gaussian_density_kernel(2.5, 0.7, 1.1)
        assert k.shape == ref.shape
        r = (k.shape[0] - 1) // 2
        assert k.taps[r, r] == pytest.approx(ref[r, r], abs=1e-12)
        np.testing.assert_allclose(k.taps, ref, atol=1e-12)

    def test_degenerate_floor(self):
        k = gaussian_kernel(GaussianKernelSpec(0.0, 0.0, 0.3, 2.0))
        assert np.all(np.isfinite(k.taps))
        assert k.taps.sum() == pytest.approx(1.0, abs=1e-12)
        assert k.taps[k.shape[0] // 2, k.shape[1] // 2] > 0.99

    def test_truncation_radius(self):
        k = gaussian_kernel(GaussianKernelSpec(4.0, 0.5, 0.0, 2.0))
        assert k.shape == (13, 13)

    @pytest.mark.parametrize("kw", [dict(lambda1=5.0), dict(theta=math.pi), dict(lambda2=-0.1)])
    def test_spec_ranges(self, kw):
        base = dict(lambda1=1.0, lambda2=1.0, theta=0.0, scale=2.0)
        base.update(kw)
        with pytest.raises(ValueError):
            GaussianKernelSpec(**base)


class TestRandomKernel:
    def test_deterministic(self):
        k1, s1 = sample_random_kernel(2.0, 7)
        k2, s2 = sample_random_kernel(2.0, 7)
        assert s1 == s2 and k1 == k2

    def test_uniform_means_and_ranges(self):
        specs = [sample_random_kernel(2.0, seed)[1] for seed in range(10_000)]
        l1 = np.array([s.lambda1 for s in specs])
        theta = np.array([s.theta for s in specs])
        assert abs(l1.mean() - 2.0) < 0.1 * 2.0
        assert np.all((theta >= 0) & (theta < math.pi))
        assert np.all((l1 >= 0) & (l1 <= 4.0))


class TestKernelFile:
    def test_identity(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 1\n1.0\n")
        k = load_kernel(p)
        assert k == DELTA

    def test_normalizes_with_warning(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 2\n1.0 1.0\n")
        with pytest.warns(UserWarning, match="summed to 2"):
            k = load_kernel(p)
        assert k.taps.sum() == pytest.approx(1.0)

    def test_no_warning_when_normalized(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("# box\r\n2 2\r\n0.25 0.25\r\n0.25 0.25\r\n")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            k = load_kernel(p)
        assert k.center == (0.5, 0.5)

    def test_roundtrip(self, tmp_path):
        k, _ = sample_random_kernel(3.0, 11)
        save_kernel(k, tmp_path / "k.txt")
        back = load_kernel(tmp_path / "k.txt")
        np.testing.assert_allclose(back.taps, k.taps, atol=1e-9)
        assert back.center == k.center

    def test_center_line(self, tmp_path):
        k = Kernel(np.ones((2, 3)), center=(0.0, 1.5))
        save_kernel(k, tmp_path / "k.txt")
        assert "CENTER 0.0 1.5" in (tmp_path / "k.txt").read_text()
        assert load_kernel(tmp_path / "k.txt").center == (0.0, 1.5)

    @pytest.mark.parametrize("text,match", [
        ("2\n1 1\n", r":1: expected 'KH KW'"),
        ("a b\n1\n", r":1: kernel size must be integers"),
        ("0 1\n", r"must be positive"),
        ("2 2\n1 1\n", r"expected 2 tap rows"),
        ("2 2\n1 1\n1 x\n", r":3: non-numeric tap"),
        ("1 2\n1 1 1\n", r":2: expected 2 taps"),
        ("1 1\n1\nCENTER a 0\n", r":3: non-numeric center"),
        ("1 1\n1\nfoo\n", r":3: unexpected content"),
        ("", r"empty kernel file"),
    ])
    def test_malformed(self, text, match):
        with pytest.raises(KernelFormatError, match=match):
            parse_kernel(text, source="k.txt")
