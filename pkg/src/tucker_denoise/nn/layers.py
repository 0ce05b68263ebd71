"""Forward and adjoint kernels for the layer types of the encoder-decoder.

Activations are channel-last arrays of shape ``(batch, height, width, channels)``.
Convolution kernels are ``(d, d, s, s_hat)``: spatial rows, spatial columns,
input channels, output channels.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DomainError

# batch chunk size for im2col buffers; small chunks stay cache friendly
_CHUNK_BYTES = 2**20


def conv_output_size(n, d, stride, pad):
    return (n + 2 * pad - d) // stride + 1


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise DomainError(f"expected (h, w, c) or (b, h, w, c) input, got {x.shape}")
    return x, False


def _windows(xp, d, stride):
    """View ``(b, oh, ow, d, d, s)`` of every receptive field of padded input.

    Channels stay innermost so the im2col copy reads contiguous runs.
    """
    win = sliding_window_view(xp, (d, d), axis=(1, 2))
    return win[:, ::stride, ::stride].transpose(0, 1, 2, 4, 5, 3)


def _chunks(b, per_item):
    step = max(1, _CHUNK_BYTES // max(per_item, 1))
    for i in range(0, b, step):
        yield slice(i, min(i + step, b))


def conv2d(x, w, bias=None, stride=1, pad=0):
    """Direct 2D convolution with zero padding.

    ``out[b, oh, ow, t] = bias[t] + sum_{i,j,c} w[i, j, c, t] *
    x[b, oh*stride + i - pad, ow*stride + j - pad, c]`` with out-of-range taps
    reading zero. Accepts a single ``(h, w, s)`` image or a batch.
    """
    x, single = _as_batch(x)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise DomainError(f"kernel must be d x d x s x s_hat, got {w.shape}")
    d, _, s, t = w.shape
    if x.shape[3] != s:
        raise DomainError(f"input has {x.shape[3]} channels, kernel expects {s}")
    if stride < 1 or pad < 0:
        raise DomainError(f"invalid stride {stride} / pad {pad}")
    b, h, wd, _ = x.shape
    oh, ow = conv_output_size(h, d, stride, pad), conv_output_size(wd, d, stride, pad)
    if oh < 1 or ow < 1:
        raise DomainError(f"{d}x{d} kernel does not fit a {h}x{wd} input with pad {pad}")

    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    win = _windows(xp, d, stride)
    wm = w.reshape(d * d * s, t)
    out = np.empty((b, oh, ow, t))
    for sl in _chunks(b, oh * ow * s * d * d * 8):
        cols = win[sl].reshape(-1, s * d * d)
        out[sl] = (cols @ wm).reshape(-1, oh, ow, t)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)
    return out[0] if single else out


def conv2d_backward(x, w, grad_out, stride=1, pad=0, need_input_grad=True):
    """Adjoint of :func:`conv2d` for batched input.

    Returns ``(grad_x, grad_w, grad_bias)``; ``grad_x`` is ``None`` when
    ``need_input_grad`` is false.
    """
    d, _, s, t = w.shape
    b, h, wd, _ = x.shape
    _, oh, ow, _ = grad_out.shape
    grad_b = grad_out.reshape(-1, t).sum(axis=0)

    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    win = _windows(xp, d, stride)
    gwm = np.zeros((s * d * d, t))
    for sl in _chunks(b, oh * ow * s * d * d * 8):
        gwm += win[sl].reshape(-1, s * d * d).T @ grad_out[sl].reshape(-1, t)
    grad_w = gwm.reshape(d, d, s, t)
    if not need_input_grad:
        return None, grad_w, grad_b

    if stride == 1 and pad <= d - 1:
        # adjoint of a stride-1 convolution is the full convolution with the
        # spatially flipped, channel-transposed kernel
        flipped = w[::-1, ::-1].transpose(0, 1, 3, 2)
        return conv2d(grad_out, flipped, pad=d - 1 - pad), grad_w, grad_b

    wm = w.reshape(d * d * s, t)
    gxp = np.zeros(xp.shape)
    hi, wi = stride * (oh - 1) + 1, stride * (ow - 1) + 1
    for sl in _chunks(b, oh * ow * s * d * d * 8):
        gcols = (grad_out[sl].reshape(-1, t) @ wm.T).reshape(-1, oh, ow, d, d, s)
        for i in range(d):
            for j in range(d):
                gxp[sl, i:i + hi:stride, j:j + wi:stride, :] += gcols[:, :, :, i, j]
    grad_x = gxp[:, pad:pad + h, pad:pad + wd, :] if pad else gxp
    return grad_x, grad_w, grad_b


def maxpool2(x):
    """2x2 max-pool with stride 2.

    Returns ``(out, argmax)`` where ``argmax`` indexes the winning position in
    each row-major flattened 2x2 window; ties go to the smallest index.
    """
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise DomainError(f"max-pool needs even extents, got {h}x{w}")
    win = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(b, h // 2, w // 2, c, 4)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(grad_out, argmax):
    b, hh, wh, c = grad_out.shape
    win = np.zeros((b, hh, wh, c, 4))
    np.put_along_axis(win, argmax[..., None], grad_out[..., None], axis=-1)
    win = win.reshape(b, hh, wh, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return win.reshape(b, 2 * hh, 2 * wh, c)


def upsample2(x):
    """Nearest-neighbour upsampling by 2 along both spatial axes."""
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(grad_out):
    b, h, w, c = grad_out.shape
    return grad_out.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))
