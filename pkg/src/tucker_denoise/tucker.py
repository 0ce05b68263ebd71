"""Partial Tucker decomposition of convolution kernels on the channel modes.

A kernel ``w`` of shape ``(d, d, s, s_hat)`` is approximated as
``core x_3 u3 x_4 u4`` with ``core`` of shape ``(d, d, r3, r4)`` and
orthonormal loading matrices ``u3`` (``s x r3``) and ``u4`` (``s_hat x r4``).
The spatial modes are kept full.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .nn.layers import conv2d
from .tensor import frobenius_norm, matricize, mode_product, top_left_singular_vectors

__all__ = [
    "TuckerFactors",
    "StopRule",
    "check_kernel",
    "phooi",
    "reconstruct",
    "factorized_conv",
    "compression_ratio",
]


@dataclass(frozen=True)
class StopRule:
    max_iters: int = 10
    rel_tol: float = 1e-6


@dataclass
class TuckerFactors:
    core: np.ndarray
    u3: np.ndarray
    u4: np.ndarray
    # reconstruction residual after initialisation and after each sweep
    residuals: tuple = field(default=(), compare=False)

    @property
    def ranks(self):
        return self.core.shape[2], self.core.shape[3]

    @property
    def kernel_shape(self):
        d = self.core.shape[0]
        return (d, d, self.u3.shape[0], self.u4.shape[0])


def check_kernel(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise DomainError(f"weight kernel must be d x d x s x s_hat, got {w.shape}")
    return w


def _core(w, u3, u4):
    return mode_product(mode_product(w, u3.T, 3), u4.T, 4)


def phooi(w, r3, r4, stop=StopRule(), callback=None):
    """Partial higher-order orthogonal iteration on modes 3 and 4.

    Loading matrices start from the truncated SVDs of the mode-3 and mode-4
    unfoldings of ``w``. Each sweep then refreshes ``u3`` from the unfolding
    of ``w x_4 u4^T`` and ``u4`` from that of ``w x_3 u3^T`` (using the new
    ``u3``), which keeps the residual non-increasing. Iteration stops after
    ``stop.max_iters`` sweeps or once the relative residual change drops
    below ``stop.rel_tol``. The returned core is recomputed from the final
    loading matrices.

    ``callback(sweep, factors)`` is invoked after initialisation (sweep 0)
    and after every sweep.
    """
    w = check_kernel(w)
    _, _, s, s_hat = w.shape
    if not (1 <= r3 <= s and 1 <= r4 <= s_hat):
        raise DomainError(f"ranks ({r3}, {r4}) outside [1, {s}] x [1, {s_hat}]")
    if stop.max_iters < 1:
        raise DomainError("stop.max_iters must be >= 1")

    # an unfolding can have fewer columns than the requested rank (e.g. a
    # single-output kernel); complete the basis so the factor keeps r columns
    def _basis(t, mode, r):
        m = matricize(t, mode)
        k = min(r, min(m.shape))
        u = top_left_singular_vectors(m, k)[0]
        if k < r:
            u = _complete_basis(u, r)
        return u

    u3 = _basis(w, 3, r3)
    u4 = _basis(w, 4, r4)
    def _residual(core, u3, u4):
        # the shortcut ||w||^2 - ||core||^2 loses half the digits near zero
        return frobenius_norm(w - mode_product(mode_product(core, u3, 3), u4, 4))

    core = _core(w, u3, u4)
    residuals = [_residual(core, u3, u4)]
    if callback is not None:
        callback(0, TuckerFactors(core, u3, u4, tuple(residuals)))
    for sweep in range(1, stop.max_iters + 1):
        u3 = _basis(mode_product(w, u4.T, 4), 3, r3)
        u4 = _basis(mode_product(w, u3.T, 3), 4, r4)
        core = _core(w, u3, u4)
        residuals.append(_residual(core, u3, u4))
        if callback is not None:
            callback(sweep, TuckerFactors(core, u3, u4, tuple(residuals)))
        prev, cur = residuals[-2], residuals[-1]
        if prev == 0.0 or abs(prev - cur) <= stop.rel_tol * prev:
            break
    return TuckerFactors(core, u3, u4, tuple(residuals))


def _complete_basis(u, r):
    """Extend orthonormal columns ``u`` to ``r`` columns deterministically."""
    n = u.shape[0]
    proj = np.eye(n) - u @ u.T
    extra = top_left_singular_vectors(proj, r - u.shape[1])[0]
    return np.concatenate([u, extra], axis=1)


def reconstruct(f):
    """Kernel ``core x_3 u3 x_4 u4``."""
    return mode_product(mode_product(f.core, f.u3, 3), f.u4, 4)


def factorized_conv(x, f, stride=1, pad=0):
    """Convolution with a Tucker-factored kernel as three consecutive convolutions.

    A 1x1 projection onto the ``r3`` mode-3 components, the ``d x d`` core
    convolution (with ``stride`` and ``pad``), and a 1x1 expansion to the
    ``s_hat`` output channels. Equal to ``conv2d(x, reconstruct(f))``.
    """
    x = np.asarray(x, dtype=np.float64)
    s = f.u3.shape[0]
    if x.shape[-1] != s:
        raise DomainError(f"input has {x.shape[-1]} channels, factors expect {s}")
    y1 = x @ f.u3
    y2 = conv2d(y1, f.core, stride=stride, pad=pad)
    return y2 @ f.u4.T


def compression_ratio(d, s, s_hat, r3, r4):
    """Cost of direct convolution over the cost of the three-stage version."""
    for v in (d, s, s_hat, r3, r4):
        if int(v) != v or v < 1:
            raise DomainError(f"arguments must be positive integers, got {v}")
    if r3 > s or r4 > s_hat:
        raise DomainError(f"ranks ({r3}, {r4}) exceed channels ({s}, {s_hat})")
    return d * d * s * s_hat / (d * d * r3 * r4 + s * r3 + s_hat * r4)
