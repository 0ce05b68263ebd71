"""Dense multilinear algebra on numpy arrays.

Tensors are plain ``float64`` numpy arrays in C (row-major) order. Modes are
numbered from 1, as in the usual ``mode-k`` notation, so the input-channel
mode of a ``d x d x s x s_hat`` kernel is mode 3.

Matricization convention: ``matricize(t, k)`` has ``t.shape[k-1]`` rows and
one column per multi-index over the remaining modes, taken in increasing mode
order with the last index varying fastest. :func:`tensorize` is its exact
inverse.
"""

import numpy as np

from .errors import DomainError, NumericError

__all__ = [
    "as_tensor",
    "matricize",
    "tensorize",
    "mode_product",
    "frobenius_norm",
    "top_left_singular_vectors",
]


def as_tensor(t):
    """Return ``t`` as a float64 array with at least one axis and no empty extent."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        raise DomainError("tensor must have order >= 1")
    if any(n < 1 for n in arr.shape):
        raise DomainError(f"tensor extents must be >= 1, got {arr.shape}")
    return arr


def _check_mode(ndim, k):
    if not 1 <= k <= ndim:
        raise DomainError(f"mode {k} out of range for order-{ndim} tensor")


def matricize(t, k):
    """Mode-``k`` unfolding of ``t`` into a ``p_k x prod(p_j, j != k)`` matrix."""
    t = as_tensor(t)
    _check_mode(t.ndim, k)
    return np.moveaxis(t, k - 1, 0).reshape(t.shape[k - 1], -1)


def tensorize(m, shape, k):
    """Fold a mode-``k`` unfolding back into a tensor of ``shape``."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(n) for n in shape)
    _check_mode(len(shape), k)
    rest = shape[: k - 1] + shape[k:]
    if m.ndim != 2 or m.shape != (shape[k - 1], int(np.prod(rest, dtype=np.int64))):
        raise DomainError(
            f"matrix of shape {m.shape} is not a mode-{k} unfolding of {shape}")
    return np.moveaxis(m.reshape((shape[k - 1],) + rest), 0, k - 1).copy()


def mode_product(t, u, k):
    """Mode-``k`` tensor-matrix product ``t x_k u``.

    ``u`` has shape ``(r, p_k)``; the result replaces extent ``p_k`` by ``r``::

        (t x_k u)[..., i_k, ...] = sum_j t[..., j, ...] * u[i_k, j]
    """
    t = as_tensor(t)
    u = np.asarray(u, dtype=np.float64)
    _check_mode(t.ndim, k)
    if u.ndim != 2 or u.shape[1] != t.shape[k - 1]:
        raise DomainError(
            f"mode-{k} product needs a matrix with {t.shape[k - 1]} columns, "
            f"got shape {u.shape}")
    out = np.tensordot(u, t, axes=([1], [k - 1]))
    return np.moveaxis(out, 0, k - 1)


def frobenius_norm(t):
    """Square root of the sum of squared entries."""
    t = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(t * t)))


def top_left_singular_vectors(a, r):
    """Leading ``r`` left singular vectors of ``a`` and its full singular values.

    Returns ``(u, s)`` where ``u`` is ``rows x r`` with orthonormal columns and
    ``s`` holds all ``min(rows, cols)`` singular values in non-increasing order.
    Column signs are fixed so that the largest-magnitude entry of each column
    is positive, which makes the output deterministic.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DomainError(f"expected a matrix, got shape {a.shape}")
    if not 1 <= r <= min(a.shape):
        raise DomainError(f"rank {r} outside [1, {min(a.shape)}] for shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("SVD input contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc

    scale = np.linalg.norm(a)
    if scale > 0:
        resid = np.linalg.norm(a - (u * s) @ vt) / scale
        if not resid <= 1e-8:
            raise NumericError("SVD reconstruction check failed", residual=resid)

    u = u[:, :r]
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(r)])
    signs[signs == 0] = 1.0
    return u * signs, s
