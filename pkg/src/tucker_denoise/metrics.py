"""Image quality metrics and training diagnostics."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import DomainError

__all__ = ["QualityReport", "psnr", "ssim", "quality", "weight_change", "default_peak"]

# identical images have infinite PSNR; this is returned as-is
PSNR_IDENTICAL = float("inf")


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DomainError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def psnr(x, y, peak=255.0):
    if not peak > 0:
        raise DomainError(f"peak must be positive, got {peak}")
    x, y = _pair(x, y)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return PSNR_IDENTICAL
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(x, y, peak=255.0, win=7, k1=0.01, k2=0.03):
    """Mean structural similarity over all ``win x win`` windows.

    Uniform window, sample (``n-1``) covariances, reflective filtering, and
    the ``(win-1)//2`` border excluded from the mean. These match the
    defaults of ``skimage.metrics.structural_similarity`` for grayscale input.
    """
    x, y = _pair(x, y)
    if x.ndim == 3 and x.shape[2] == 1:
        x, y = x[..., 0], y[..., 0]
    if x.ndim != 2 or min(x.shape) < win:
        raise DomainError(f"ssim needs a 2D image at least {win}x{win}, got {x.shape}")
    n = win * win
    cov_norm = n / (n - 1)
    ux = uniform_filter(x, size=win)
    uy = uniform_filter(y, size=win)
    uxx = uniform_filter(x * x, size=win)
    uyy = uniform_filter(y * y, size=win)
    uxy = uniform_filter(x * y, size=win)
    vx = cov_norm * (uxx - ux * ux)
    vy = cov_norm * (uyy - uy * uy)
    vxy = cov_norm * (uxy - ux * uy)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    num = (2 * ux * uy + c1) * (2 * vxy + c2)
    den = (ux**2 + uy**2 + c1) * (vx + vy + c2)
    pad = (win - 1) // 2
    return float(np.mean((num / den)[pad:-pad, pad:-pad]))


@dataclass(frozen=True)
class QualityReport:
    psnr_db: float
    ssim: float
    peak: float


def default_peak(reference, bit_depth=None):
    """255 for 8-bit sources, else the dynamic range of the clean reference."""
    if bit_depth == 8:
        return 255.0
    return float(np.ptp(np.asarray(reference, dtype=np.float64)))


def quality(clean, estimate, peak=None, bit_depth=8):
    peak = default_peak(clean, bit_depth) if peak is None else float(peak)
    return QualityReport(psnr(clean, estimate, peak), ssim(clean, estimate, peak), peak)


def weight_change(params_new, params_old):
    """Per-layer ``||W_new - W_old||_F / (d^2 s s_hat)`` and their mean.

    Returns ``(per_layer, mean)``.
    """
    a, b = params_new.layers, params_old.layers
    if len(a) != len(b) or any(p.kernel.shape != q.kernel.shape for p, q in zip(a, b)):
        raise DomainError("parameter structures differ")
    per = np.array([np.linalg.norm((p.kernel - q.kernel).ravel()) / p.kernel.size
                    for p, q in zip(a, b)])
    return per, float(per.mean())
