"""U-net style encoder-decoder with hand-written reverse-mode gradients.

Layout for ``levels = L`` (all convolutions 'same' padded, stride 1)::

    enc0   first_kernel x first_kernel conv, in -> width, ReLU
    enc1.. enc{L-1}   2x2 max-pool then kernel x kernel conv, width -> width, ReLU
    dec{L-2} .. dec0  2x nearest upsample, concat skip enc{l}, conv 2*width -> width, ReLU
    out    kernel x kernel conv, width -> in, linear

Input extents must be divisible by ``2**(L-1)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DomainError, StateError
from ..rng import stream
from . import layers as L

__all__ = [
    "ConvSpec",
    "Layer",
    "UNetStructure",
    "NetworkParams",
    "ForwardCache",
    "xavier_init",
    "forward",
    "backward",
]


@dataclass(frozen=True)
class ConvSpec:
    d: int
    s: int
    s_hat: int
    stride: int = 1
    pad: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.d < 1 or self.d % 2 == 0:
            raise DomainError(f"kernel width must be odd and >= 1, got {self.d}")
        if self.stride < 1 or self.pad < 0:
            raise DomainError("stride must be >= 1 and pad >= 0")
        if self.activation not in ("relu", "linear"):
            raise DomainError(f"unknown activation {self.activation!r}")

    @property
    def kernel_shape(self):
        return (self.d, self.d, self.s, self.s_hat)


@dataclass
class Layer:
    name: str
    spec: ConvSpec
    kernel: np.ndarray
    bias: np.ndarray
    distortable: bool = True


@dataclass(frozen=True)
class UNetStructure:
    in_channels: int = 1
    width: int = 48
    levels: int = 5
    first_kernel: int = 11
    kernel: int = 3

    def __post_init__(self):
        if self.levels < 1:
            raise DomainError("levels must be >= 1")

    @property
    def divisor(self):
        return 2 ** (self.levels - 1)

    def conv_specs(self):
        """``(name, ConvSpec)`` pairs in execution order."""
        w, k = self.width, self.kernel

        def same(d, s, t, act="relu"):
            return ConvSpec(d, s, t, 1, (d - 1) // 2, act)

        specs = [("enc0", same(self.first_kernel, self.in_channels, w))]
        specs += [(f"enc{l}", same(k, w, w)) for l in range(1, self.levels)]
        specs += [(f"dec{l}", same(k, 2 * w, w)) for l in reversed(range(self.levels - 1))]
        specs.append(("out", same(k, w, self.in_channels, "linear")))
        return specs


@dataclass
class NetworkParams:
    structure: UNetStructure
    layers: list

    def arrays(self):
        """Flat list ``[kernel0, bias0, kernel1, bias1, ...]`` (views, not copies)."""
        out = []
        for layer in self.layers:
            out += [layer.kernel, layer.bias]
        return out

    def copy(self):
        return NetworkParams(self.structure, [
            replace(l, kernel=l.kernel.copy(), bias=l.bias.copy()) for l in self.layers])

    def num_parameters(self):
        return sum(a.size for a in self.arrays())


def xavier_init(structure, seed):
    """Glorot-normal kernels (variance ``2 / (fan_in + fan_out)``), zero biases."""
    rng = stream(seed, "init")
    out = []
    for i, (name, spec) in enumerate(structure.conv_specs()):
        fan_in, fan_out = spec.d**2 * spec.s, spec.d**2 * spec.s_hat
        std = np.sqrt(2.0 / (fan_in + fan_out))
        kernel = rng.normal(0.0, std, size=spec.kernel_shape)
        out.append(Layer(name, spec, kernel, np.zeros(spec.s_hat), distortable=i > 0))
    return NetworkParams(structure, out)


@dataclass
class ForwardCache:
    """Intermediate activations recorded by :func:`forward` for :func:`backward`."""
    conv_inputs: list = field(default_factory=list)
    conv_outputs: list = field(default_factory=list)
    pool_args: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.conv_inputs)


def _conv(layer, x, cache):
    s = layer.spec
    z = L.conv2d(x, layer.kernel, layer.bias, s.stride, s.pad)
    if s.activation == "relu":
        np.maximum(z, 0.0, out=z)
    if cache is not None:
        cache.conv_inputs.append(x)
        cache.conv_outputs.append(z)
    return z


def forward(params, x, cache=None):
    """Apply the network to ``(h, w, c)`` or ``(b, h, w, c)`` input.

    Pass an empty :class:`ForwardCache` to record what :func:`backward` needs.
    """
    st = params.structure
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[3] != st.in_channels:
        raise DomainError(f"expected input with {st.in_channels} channel(s), got {x.shape}")
    if x.shape[1] % st.divisor or x.shape[2] % st.divisor:
        raise DomainError(
            f"spatial extents {x.shape[1]}x{x.shape[2]} must be multiples of {st.divisor}")
    if cache is not None and cache:
        raise StateError("forward cache already holds activations")

    layers = iter(params.layers)
    skips = []
    a = x
    for level in range(st.levels):
        if level:
            a, arg = L.maxpool2(a)
            if cache is not None:
                cache.pool_args.append(arg)
        a = _conv(next(layers), a, cache)
        skips.append(a)
    for level in reversed(range(st.levels - 1)):
        a = np.concatenate([L.upsample2(a), skips[level]], axis=3)
        a = _conv(next(layers), a, cache)
    out = _conv(next(layers), a, cache)
    return out[0] if single else out


def backward(params, cache, grad_out):
    """Gradients of a scalar loss w.r.t. every kernel and bias.

    ``grad_out`` is the loss gradient w.r.t. the output of the forward pass
    that filled ``cache``. Returns a list of ``(grad_kernel, grad_bias)``
    pairs aligned with ``params.layers``.
    """
    if cache is None or not cache:
        raise StateError("backward needs the activations of a forward pass")
    st = params.structure
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 3:
        g = g[None]
    n = len(params.layers)
    grads = [None] * n

    def _conv_back(idx, g, need_x=True):
        layer = params.layers[idx]
        if layer.spec.activation == "relu":
            g = g * (cache.conv_outputs[idx] > 0)
        gx, gw, gb = L.conv2d_backward(
            cache.conv_inputs[idx], layer.kernel, g,
            layer.spec.stride, layer.spec.pad, need_input_grad=need_x)
        grads[idx] = (gw, gb)
        return gx

    w = st.width
    g = _conv_back(n - 1, g)
    skip_grads = [None] * st.levels
    idx = n - 2
    for level in range(st.levels - 1):
        gc = _conv_back(idx, g)
        skip_grads[level] = gc[..., w:]
        g = L.upsample2_backward(gc[..., :w])
        idx -= 1
    for level in reversed(range(st.levels)):
        if skip_grads[level] is not None:
            g = g + skip_grads[level]
        g = _conv_back(level, g, need_x=level > 0)
        if level:
            g = L.maxpool2_backward(g, cache.pool_args[level - 1])
    return grads
