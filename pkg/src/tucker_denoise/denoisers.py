"""Classical denoisers usable as the proximal step of the ADMM loop.

All functions take a 2D image or an ``(h, w, 1)`` array and return the same
shape. Borders are handled by half-sample symmetric reflection.

``bm3d_lite`` is the hard-thresholding stage of BM3D only (no Wiener
refinement); it is not the reference BM3D and its numbers should not be
reported as such.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dctn, idctn
from scipy.ndimage import correlate1d, uniform_filter

from .errors import DomainError

__all__ = ["DenoiserSpec", "lowpass", "nlm", "bm3d_lite", "make_denoiser", "KINDS"]

KINDS = ("identity", "lowpass", "nlm", "bm3d_lite")


def _plane(image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        return arr[..., 0], lambda out: out[..., None]
    if arr.ndim != 2:
        raise DomainError(f"expected a grayscale image, got shape {arr.shape}")
    return arr, lambda out: out


def gaussian_kernel(sigma):
    radius = max(1, int(np.ceil(4 * sigma)))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def lowpass(image, sigma_f):
    """Separable Gaussian smoothing with a normalised kernel."""
    if not sigma_f > 0:
        raise DomainError(f"filter width must be positive, got {sigma_f}")
    img, wrap = _plane(image)
    k = gaussian_kernel(sigma_f)
    out = correlate1d(img, k, axis=0, mode="reflect")
    return wrap(correlate1d(out, k, axis=1, mode="reflect"))


def nlm(image, h, patch_radius=3, search_radius=7):
    """Non-local means.

    Each pixel becomes the weighted mean of the pixels in its
    ``(2*search_radius+1)^2`` neighbourhood, with weight
    ``exp(-d2 / h^2)`` where ``d2`` is the mean squared difference of the
    ``(2*patch_radius+1)^2`` patches around the two pixels.
    """
    if not h > 0 or patch_radius < 1 or search_radius < 1:
        raise DomainError("nlm needs h > 0 and radii >= 1")
    img, wrap = _plane(image)
    ph, pw = img.shape
    pad = search_radius + patch_radius
    padded = np.pad(img, pad, mode="symmetric")
    size = 2 * patch_radius + 1
    inner = (slice(search_radius, search_radius + ph + 2 * patch_radius),
             slice(search_radius, search_radius + pw + 2 * patch_radius))
    ref = padded[inner]
    num = np.zeros((ph, pw))
    den = np.zeros((ph, pw))
    core = (slice(patch_radius, patch_radius + ph), slice(patch_radius, patch_radius + pw))
    inv_h2 = 1.0 / (h * h)
    for dy in range(-search_radius, search_radius + 1):
        for dx in range(-search_radius, search_radius + 1):
            shifted = padded[search_radius + dy:search_radius + dy + ph + 2 * patch_radius,
                             search_radius + dx:search_radius + dx + pw + 2 * patch_radius]
            d2 = uniform_filter((ref - shifted) ** 2, size=size, mode="constant")[core]
            wgt = np.exp(-d2 * inv_h2)
            num += wgt * shifted[core]
            den += wgt
    return wrap(num / den)


def _grid(n, block, step):
    pos = list(range(0, n - block + 1, step))
    if pos[-1] != n - block:
        pos.append(n - block)
    return np.array(pos)


def bm3d_lite(image, sigma, block=8, step=3, search_radius=8, max_group=16,
              thr_multiple=2.7, match_factor=4.0):
    """Block matching with 3D DCT hard-thresholding (first BM3D stage only).

    For reference blocks on a grid of stride ``step``, the most similar
    ``block x block`` blocks within ``search_radius`` (mean squared distance at
    most ``match_factor * sigma^2``) are stacked into a group whose size is the
    largest power of two available, up to ``max_group``. Groups are
    transformed by a separable orthonormal 3D DCT, AC coefficients below
    ``thr_multiple * sigma`` are zeroed, and the inverse-transformed blocks
    are aggregated with weights ``1 / (number of retained coefficients)``
    times a Kaiser window.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    img, wrap = _plane(image)
    h, w = img.shape
    if h < block or w < block:
        raise DomainError(f"image {h}x{w} smaller than the {block}x{block} block")

    nb_r, nb_c = h - block + 1, w - block + 1
    blocks = sliding_window_view(img, (block, block))
    rows, cols = np.meshgrid(_grid(h, block, step), _grid(w, block, step), indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()

    # zero offset first so a reference block always leads its own group
    offsets = [(0, 0)] + [(dy, dx)
                          for dy in range(-search_radius, search_radius + 1)
                          for dx in range(-search_radius, search_radius + 1)
                          if (dy, dx) != (0, 0)]
    dist = np.empty((rows.size, len(offsets)))
    for k, (dy, dx) in enumerate(offsets):
        r2, c2 = rows + dy, cols + dx
        ok = (r2 >= 0) & (r2 < nb_r) & (c2 >= 0) & (c2 < nb_c)
        d = np.full(rows.size, np.inf)
        diff = blocks[rows[ok], cols[ok]] - blocks[r2[ok], c2[ok]]
        d[ok] = np.mean(diff * diff, axis=(1, 2))
        dist[:, k] = d

    order = np.argsort(dist, axis=1, kind="stable")[:, :max_group]
    sorted_d = np.take_along_axis(dist, order, axis=1)
    n_match = np.sum(sorted_d <= match_factor * sigma**2, axis=1)
    n_match[n_match < 1] = 1
    group_size = 2 ** np.floor(np.log2(n_match)).astype(int)

    off = np.array(offsets)
    window = np.outer(np.kaiser(block, 2.0), np.kaiser(block, 2.0))
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    thr = thr_multiple * sigma
    for g in np.unique(group_size):
        sel = np.nonzero(group_size == g)[0]
        idx = order[sel, :g]
        gr = rows[sel, None] + off[idx, 0]
        gc = cols[sel, None] + off[idx, 1]
        stack = blocks[gr, gc]                       # (n, g, block, block)
        coef = dctn(stack, axes=(1, 2, 3), norm="ortho")
        keep = np.abs(coef) >= thr
        keep[:, 0, 0, 0] = True
        coef *= keep
        n_kept = keep.sum(axis=(1, 2, 3))
        est = idctn(coef, axes=(1, 2, 3), norm="ortho")
        wgt = (1.0 / n_kept)[:, None, None, None] * window
        for i in range(block):
            for j in range(block):
                np.add.at(num, (gr + i, gc + j), (wgt * est)[:, :, i, j])
                np.add.at(den, (gr + i, gc + j), np.broadcast_to(wgt[:, :, i, j], gr.shape))
    return wrap(num / den)


@dataclass(frozen=True)
class DenoiserSpec:
    kind: str = "bm3d_lite"
    lowpass_sigma: float = 1.0
    nlm_h_factor: float = 1.0      # h = nlm_h_factor * noise sigma
    nlm_patch_radius: int = 3
    nlm_search_radius: int = 7
    bm3d_block: int = 8
    bm3d_step: int = 3
    bm3d_search_radius: int = 8
    bm3d_max_group: int = 16
    bm3d_thr_multiple: float = 2.7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown denoiser kind {self.kind!r}; expected one of {KINDS}")
        if min(self.nlm_patch_radius, self.nlm_search_radius, self.bm3d_search_radius) < 1:
            raise DomainError("denoiser radii must be >= 1")
        if not (self.lowpass_sigma > 0 and self.nlm_h_factor > 0 and self.bm3d_thr_multiple > 0):
            raise DomainError("denoiser bandwidths must be positive")


def make_denoiser(spec, sigma):
    """Callable ``image -> image`` for ``spec`` at noise level ``sigma``."""
    if spec.kind == "identity":
        return lambda x: np.array(x, dtype=np.float64)
    if spec.kind == "lowpass":
        return lambda x: lowpass(x, spec.lowpass_sigma)
    if spec.kind == "nlm":
        return lambda x: nlm(x, spec.nlm_h_factor * sigma, spec.nlm_patch_radius,
                             spec.nlm_search_radius)
    return lambda x: bm3d_lite(x, sigma, spec.bm3d_block, spec.bm3d_step,
                               spec.bm3d_search_radius, spec.bm3d_max_group,
                               spec.bm3d_thr_multiple)
