"""Applying a trained network to whole images of any size."""

import numpy as np

from .errors import DomainError
from .nn import forward

__all__ = ["network_fn", "apply_padded", "patchwise_infer"]


def network_fn(params):
    """``(h, w, c) -> (h, w, c)`` callable for ``params``."""
    return lambda x: forward(params, x)


def _ceil_to(n, k):
    return -(-n // k) * k


def apply_padded(net, image, divisor):
    """Reflect-pad bottom/right up to a multiple of ``divisor``, apply ``net``, crop."""
    x = np.asarray(image, dtype=np.float64)
    h, w = x.shape[:2]
    ph, pw = _ceil_to(h, divisor) - h, _ceil_to(w, divisor) - w
    if ph or pw:
        x = np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="symmetric")
    return net(x)[:h, :w]


def patchwise_infer(image, net, divisor=16, tile=800, pad=500):
    """Tiled inference with context padding.

    The image is reflect-padded once by ``pad`` (rounded up to a multiple of
    ``divisor``) so every tile sees real neighbouring pixels and reflected
    ones only at true borders. Tiles of ``tile x tile`` cores start on a grid
    aligned to ``divisor``, so pooling windows line up identically in every
    tile and the stitched result does not depend on the tiling as long as
    ``pad`` covers the network's receptive field. Images no larger than one
    tile go through :func:`apply_padded` directly.
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    if tile < 1 or pad < 0 or tile % divisor:
        raise DomainError(f"tile {tile} must be a positive multiple of {divisor}; pad must be >= 0")
    h, w = x.shape[:2]
    if h <= tile and w <= tile:
        return apply_padded(net, x, divisor)

    p = _ceil_to(pad, divisor)
    H, W = _ceil_to(h, tile), _ceil_to(w, tile)
    xp = np.pad(x, ((p, p + H - h), (p, p + W - w), (0, 0)), mode="symmetric")
    out = np.empty((H, W, x.shape[2]))
    for r in range(0, H, tile):
        for c in range(0, W, tile):
            region = xp[r:r + tile + 2 * p, c:c + tile + 2 * p]
            out[r:r + tile, c:c + tile] = net(region)[p:p + tile, p:p + tile]
    return out[:h, :w]
