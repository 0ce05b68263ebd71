"""Rank selection by empirical variational Bayesian matrix factorization.

For an ``L x M`` matrix ``V = B A^T + E`` (``L <= M``, noise variance
``sigma2``) with independent Gaussian priors on the columns of ``A`` and ``B``,
the empirical-VB posterior has a closed form per singular component
(Nakajima et al., JMLR 2013). A component survives when its singular value
exceeds the EVB threshold; for surviving components the posterior masses
``alpha* = ||mu_a||^2 + tr(Sigma_a)`` and ``beta* = ||mu_b||^2 + tr(Sigma_b)``
give the prior scales ``c_a^2 = alpha*/M`` and ``c_b^2 = beta*/L``, from which
the per-component VB cutoff is evaluated. Pruned components have vanishing
prior scales and an infinite cutoff.

When no noise variance is supplied it is estimated per matrix by minimizing
the EVB free energy over ``sigma2`` inside the bracket of the same reference.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError
from .tensor import matricize, top_left_singular_vectors
from .tucker import check_kernel

__all__ = [
    "VbmfInternals",
    "RankPair",
    "evb_tau_bar",
    "vb_cutoff",
    "evb_noise_variance",
    "vbmf_select_rank",
    "select_kernel_ranks",
]


@dataclass(frozen=True)
class VbmfInternals:
    singular_values: np.ndarray
    cutoffs: np.ndarray
    prior_scales: np.ndarray      # (h, 2): c_a^2, c_b^2
    posterior_masses: np.ndarray  # (h, 2): alpha*, beta*
    noise_variance: float
    dims: tuple
    evb_threshold: float
    raw_rank: int
    noise_estimated: bool = False

    def to_dict(self):
        def _list(a):
            return [None if not math.isfinite(v) else float(v) for v in np.ravel(a)]
        return {
            "dims": list(self.dims),
            "noise_variance": self.noise_variance,
            "noise_estimated": self.noise_estimated,
            "evb_threshold": self.evb_threshold,
            "raw_rank": self.raw_rank,
            "singular_values": _list(self.singular_values),
            "cutoffs": _list(self.cutoffs),
            "prior_scales": _list(self.prior_scales),
            "posterior_masses": _list(self.posterior_masses),
        }


class RankPair(NamedTuple):
    r3: int
    r4: int


def evb_tau_bar(alpha):
    """Zero of ``Phi(t) + Phi(t/alpha)`` with ``Phi(z) = log(1+z)/z - 1/2``."""
    def phi(z):
        return math.log1p(z) / z - 0.5
    return brentq(lambda t: phi(t) + phi(t / alpha), 1e-12, 1e3, xtol=1e-14, rtol=1e-14)


def vb_cutoff(L, M, sigma2, ca2cb2):
    """VB truncation threshold for one component with prior product ``c_a^2 c_b^2``."""
    if ca2cb2 <= 0:
        return math.inf
    q = (L + M) * sigma2 / 2 + sigma2**2 / (2 * ca2cb2)
    return math.sqrt(q + math.sqrt(max(q * q - L * M * sigma2**2, 0.0)))


def _evb_free_energy(sigma2, gamma, M, alpha, x_bar):
    x = gamma**2 / (M * sigma2)
    small, big = x[x <= x_bar], x[x > x_bar]
    b = big - (1 + alpha)
    tau = 0.5 * (b + np.sqrt(np.maximum(b * b - 4 * alpha, 0.0)))
    return float(np.sum(small - np.log(small)) + np.sum(big - tau)
                 + np.sum(np.log((tau + 1) / big)) + alpha * np.sum(np.log(tau / alpha + 1)))


def evb_noise_variance(gamma, L, M):
    """EVB estimate of the noise variance from the full spectrum of an ``L x M`` matrix.

    Minimizes the free energy over ``sigma2`` between the lower bound set by
    the largest admissible rank and the upper bound ``sum(gamma^2) / (L M)``.
    Returns 0 for a zero matrix.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    upper = float(np.sum(gamma**2)) / (L * M)
    if not upper > 0:
        return 0.0
    alpha = L / M
    tau_bar = evb_tau_bar(alpha)
    x_bar = (1 + tau_bar) * (1 + alpha / tau_bar)
    h_ub = min(math.ceil(L / (1 + alpha)) - 1, gamma.size) - 1
    tail = gamma[h_ub + 1:]
    lower = max(tail[0] ** 2 / (M * x_bar), float(np.mean(tail**2)) / M) if tail.size else 0.0
    lower = min(max(lower, upper * 1e-12), upper)
    if lower >= upper:
        return upper
    res = minimize_scalar(_evb_free_energy, bounds=(lower, upper), method="bounded",
                          args=(gamma, M, alpha, x_bar), options={"xatol": 1e-12 * upper})
    return float(res.x)


def vbmf_select_rank(m, sigma2=None):
    """Number of components the EVB solution keeps, clamped to at least 1.

    ``sigma2=None`` estimates the noise variance from ``m`` itself.
    Returns ``(rank, internals)``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < 1:
        raise DomainError(f"expected a non-empty matrix, got shape {m.shape}")
    L, M = sorted(m.shape)
    alpha = L / M
    _, gamma = top_left_singular_vectors(m, 1)
    h = gamma.size
    estimated = sigma2 is None
    if estimated:
        sigma2 = evb_noise_variance(gamma, L, M)
        if sigma2 == 0.0:
            return 1, VbmfInternals(gamma, np.full(h, math.inf), np.zeros((h, 2)),
                                    np.zeros((h, 2)), 0.0, tuple(m.shape), math.inf, 0, True)
    if not sigma2 > 0:
        raise DomainError(f"noise variance must be positive, got {sigma2}")
    sigma2 = float(sigma2)

    tau_bar = evb_tau_bar(alpha)
    threshold = math.sqrt(M * sigma2 * (1 + tau_bar) * (1 + alpha / tau_bar))
    masses = np.zeros((h, 2))
    scales = np.zeros((h, 2))
    cutoffs = np.full(h, math.inf)
    for i, g in enumerate(gamma):
        if not g > threshold:
            continue
        x = 1 - (L + M) * sigma2 / g**2
        g_hat = g / 2 * (x + math.sqrt(max(x * x - 4 * L * M * sigma2**2 / g**4, 0.0)))
        tau = g_hat * g / (M * sigma2)
        delta = math.sqrt(M * g_hat / (L * g)) * (1 + alpha / tau)
        ma2, mb2 = g_hat * delta, g_hat / delta
        sa2, sb2 = sigma2 * delta / g, sigma2 / (delta * g)
        masses[i] = (ma2 + M * sa2, mb2 + L * sb2)
        scales[i] = (masses[i, 0] / M, masses[i, 1] / L)
        cutoffs[i] = vb_cutoff(L, M, sigma2, scales[i, 0] * scales[i, 1])

    above = np.nonzero(gamma > cutoffs)[0]
    raw = int(above[-1]) + 1 if above.size else 0
    internals = VbmfInternals(
        singular_values=gamma,
        cutoffs=cutoffs,
        prior_scales=scales,
        posterior_masses=masses,
        noise_variance=sigma2,
        dims=tuple(m.shape),
        evb_threshold=threshold,
        raw_rank=raw,
        noise_estimated=estimated,
    )
    return max(raw, 1), internals


def select_kernel_ranks(w, sigma2=None, return_internals=False):
    """Mode-3 and mode-4 ranks of a ``d x d x s x s_hat`` kernel.

    ``sigma2=None`` estimates a separate noise variance for each matricization.
    """
    w = check_kernel(w)
    r3, int3 = vbmf_select_rank(matricize(w, 3), sigma2)
    r4, int4 = vbmf_select_rank(matricize(w, 4), sigma2)
    pair = RankPair(min(r3, w.shape[2]), min(r4, w.shape[3]))
    if return_internals:
        return pair, (int3, int4)
    return pair
