import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from tucker_denoise.errors import DomainError
from tucker_denoise.metrics import default_peak, psnr, quality, ssim, weight_change
from tucker_denoise.nn import UNetStructure, xavier_init
from tucker_denoise.phantoms import textured


def test_psnr_cases():
    x = np.random.default_rng(0).uniform(0, 255, (16, 16))
    assert psnr(x, x) == math.inf
    assert psnr(x, x + 10) == pytest.approx(20 * math.log10(255 / 10), abs=1e-10)
    assert psnr(x, x + 10) == pytest.approx(28.1308, abs=1e-4)
    with pytest.raises(DomainError):
        psnr(x, x[:8])
    with pytest.raises(DomainError):
        psnr(x, x, peak=0)


def test_psnr_matches_skimage_and_is_symmetric():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0, 255, (32, 32)), rng.uniform(0, 255, (32, 32))
    assert psnr(x, y) == pytest.approx(peak_signal_noise_ratio(x, y, data_range=255), rel=1e-12)
    assert psnr(x, y) == psnr(y, x)


def test_psnr_decreasing_in_noise():
    x = textured(64)
    e = np.random.default_rng(2).normal(size=x.shape)
    values = [psnr(x, x + s * e) for s in (1, 2, 5, 10, 20, 40)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_ssim_identity_and_symmetry():
    x = textured(64)
    assert ssim(x, x) == 1.0
    y = x + np.random.default_rng(3).normal(scale=20, size=x.shape)
    assert ssim(x, y) == pytest.approx(ssim(y, x), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.0, 60.0))
def test_ssim_matches_skimage(seed, sigma):
    x = textured(48)
    y = x + np.random.default_rng(seed).normal(scale=sigma, size=x.shape)
    ref = structural_similarity(x, y, data_range=255.0)
    assert ssim(x, y) == pytest.approx(ref, abs=1e-12)


def test_ssim_heavy_noise_bound():
    x = textured(128)
    y = x + np.random.default_rng(4).normal(scale=255, size=x.shape)
    assert ssim(x, y) <= 0.2


def test_ssim_affine_on_constant_windows():
    # on a constant image the structure terms vanish and SSIM reduces to the
    # luminance term (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
    a, b, c = 1.3, 7.0, 90.0
    x = np.full((20, 20), c)
    y = a * x + b
    c1 = (0.01 * 255) ** 2
    mx, my = c, a * c + b
    assert ssim(x, y) == pytest.approx((2 * mx * my + c1) / (mx**2 + my**2 + c1), rel=1e-12)
    t = textured(64)
    assert ssim(t, a * t + b) < 1


def test_ssim_errors():
    with pytest.raises(DomainError):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))
    with pytest.raises(DomainError):
        ssim(np.zeros((8, 8)), np.zeros((8, 9)))


def test_quality_report_peak():
    x = textured(32)
    assert quality(x, x + 1).peak == 255.0
    assert default_peak(np.array([2.0, 5.0]), bit_depth=None) == 3.0
    assert quality(x, x + 1, bit_depth=16).peak == pytest.approx(np.ptp(x))


def test_weight_change():
    a = xavier_init(UNetStructure(width=4, levels=2), 0)
    per, mean = weight_change(a, a.copy())
    assert mean == 0 and not per.any()
    b = a.copy()
    eps = 1e-3
    b.layers[1].kernel += eps
    per, _ = weight_change(b, a)
    n = a.layers[1].kernel.size
    # Frobenius norm of the all-eps tensor is eps*sqrt(n); divided by the element count
    assert per[1] == pytest.approx(eps / math.sqrt(n), rel=1e-12)
    assert per[0] == 0

    rng = np.random.default_rng(5)
    c = a.copy()
    for layer in c.layers:
        layer.kernel += rng.normal(size=layer.kernel.shape)
    per, mean = weight_change(c, a)
    naive = []
    for p, q in zip(c.layers, a.layers):
        acc = 0.0
        for u, v in zip(p.kernel.ravel(), q.kernel.ravel()):
            acc += (u - v) ** 2
        naive.append(math.sqrt(acc) / p.kernel.size)
    np.testing.assert_allclose(per, naive, rtol=1e-12)
    assert mean == pytest.approx(np.mean(naive), rel=1e-12)
    with pytest.raises(DomainError):
        weight_change(a, xavier_init(UNetStructure(width=8, levels=2), 0))
