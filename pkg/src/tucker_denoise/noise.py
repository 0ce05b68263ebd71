"""Synthetic noise, the generalized Anscombe transform, and blind noise-level estimation."""

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import gamma

from .errors import DomainError
from .rng import stream

__all__ = [
    "NoiseModel",
    "add_gaussian",
    "add_poisson_gaussian",
    "vst_forward",
    "vst_inverse",
    "estimate_sigma",
    "SigmaEstimate",
]


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "gaussian"
    sigma: float = 25.0
    gain: float = 1.0        # a
    variance: float = 0.0    # b
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson_gaussian"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.gain <= 0 or self.variance < 0:
            raise DomainError("noise needs sigma >= 0, gain > 0, variance >= 0")

    def apply(self, x):
        if self.kind == "gaussian":
            return add_gaussian(x, self.sigma, self.seed)
        return add_poisson_gaussian(x, self.gain, self.variance, self.seed)


def add_gaussian(x, sigma, seed):
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + sigma * stream(seed, "noise").standard_normal(x.shape)


def add_poisson_gaussian(x, a, b, seed):
    """``a * Poisson(x / a) + N(0, b)``; per-pixel variance ``a*x + b``."""
    x = np.asarray(x, dtype=np.float64)
    if a <= 0 or b < 0:
        raise DomainError("gain a must be > 0 and variance b >= 0")
    if np.any(x < 0):
        raise DomainError("Poisson-Gaussian noise needs a non-negative image")
    rng = stream(seed, "noise")
    y = a * rng.poisson(x / a).astype(np.float64)
    if b > 0:
        y += np.sqrt(b) * rng.standard_normal(x.shape)
    return y


def _gat_argument(y, a, b):
    return a * np.asarray(y, dtype=np.float64) + 0.375 * a * a + b


def vst_forward(y, a, b, return_clamped=False):
    """Generalized Anscombe transform ``(2/a) * sqrt(a*y + 3a^2/8 + b)``.

    Arguments below zero are clamped to zero; with ``return_clamped`` the
    number of clamped pixels is returned as well.
    """
    arg = _gat_argument(y, a, b)
    low = arg < 0
    z = (2.0 / a) * np.sqrt(np.where(low, 0.0, arg))
    if return_clamped:
        return z, int(low.sum())
    return z


def vst_inverse(z, a, b, method="exact"):
    """Inverse of :func:`vst_forward`.

    ``method="exact"`` is the algebraic inverse. ``method="unbiased"`` is the
    closed-form approximation of the exact unbiased inverse for
    Poisson-Gaussian data (Makitalo and Foi), which removes the bias the
    nonlinear transform introduces in the mean of a denoised estimate.
    """
    z = np.asarray(z, dtype=np.float64)
    if method == "exact":
        return ((a * z / 2.0) ** 2 - 0.375 * a * a - b) / a
    if method != "unbiased":
        raise DomainError(f"unknown inverse method {method!r}")
    s2 = b / (a * a)
    zc = np.maximum(z, 1.0)
    r = np.sqrt(1.5)
    x = (0.25 * zc**2 + 0.25 * r / zc - 1.375 / zc**2 + 0.625 * r / zc**3 - 0.125 - s2)
    return a * np.maximum(x, 0.0)


def _chen_sigma2(eigs):
    """Noise variance from ascending patch-covariance eigenvalues.

    Chooses the largest leading set whose mean equals its median (as many
    eigenvalues above as below the mean), which isolates the noise-only
    subspace.
    """
    for i in range(eigs.size, 0, -1):
        head = eigs[:i]
        tau = head.mean()
        if np.sum(head > tau) == np.sum(head < tau):
            return max(tau, 0.0)
    return max(eigs[0], 0.0)


def _patch_matrix(img, size, step):
    win = sliding_window_view(img, (size, size))[::step, ::step]
    return win.reshape(-1, size * size)


def _sigma2_from_patches(p):
    cov = np.cov(p, rowvar=False)
    return _chen_sigma2(np.linalg.eigvalsh(cov))


@dataclass(frozen=True)
class SigmaEstimate:
    sigma: float
    floored: bool
    patches_used: int


def estimate_sigma(y, patch=7, step=1, iters=3, confidence=0.99, floor=1e-3,
                   return_info=False):
    """Blind estimate of the additive Gaussian noise standard deviation.

    Starts from the eigenvalue estimate over all ``patch x patch`` patches,
    then repeatedly keeps only weak-texture patches (gradient energy below
    the ``confidence`` quantile expected under pure noise of the current
    estimate) and re-estimates. Returns at least ``floor``; constant images
    return ``floor`` with a warning.
    """
    img = np.asarray(y, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim != 2 or min(img.shape) < 64:
        raise DomainError(f"noise estimation needs a 2D image of at least 64x64, got {img.shape}")

    def done(s2, n, flagged=False):
        sigma = float(np.sqrt(s2))
        if sigma < floor or flagged:
            warnings.warn("noise estimate hit the configured floor", RuntimeWarning, stacklevel=3)
            sigma, flagged = floor, True
        return SigmaEstimate(sigma, flagged, n) if return_info else sigma

    if np.ptp(img) == 0:
        return done(0.0, 0, flagged=True)

    p = _patch_matrix(img, patch, step)
    s2 = _sigma2_from_patches(p)
    # patch gradient energy: horizontal and vertical first differences
    gh = _patch_matrix(np.diff(img, axis=1)[:-1, :], patch - 1, step)
    gv = _patch_matrix(np.diff(img, axis=0)[:, :-1], patch - 1, step)
    energy = np.sum(gh * gh, axis=1) + np.sum(gv * gv, axis=1)
    # E[energy] under white noise of unit variance: each difference has variance 2
    n = (patch - 1) ** 2
    mean_unit = 2.0 * 2 * n
    shape = n  # 2n differences, each chi-square(1) scaled by 2 -> gamma(n, 2*2)
    used = p.shape[0]
    for _ in range(iters):
        if s2 <= 0:
            break
        tau = s2 * gamma.ppf(confidence, shape, scale=mean_unit / shape)
        keep = energy < tau
        if keep.sum() < p.shape[1] + 1:
            break
        new = _sigma2_from_patches(p[keep])
        used = int(keep.sum())
        if abs(new - s2) <= 1e-6 * max(s2, 1e-300):
            s2 = new
            break
        s2 = new
    return done(s2, used)
