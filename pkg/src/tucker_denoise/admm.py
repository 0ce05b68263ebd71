"""Single-image denoising by plug-and-play ADMM with periodic Tucker weight distortion.

The network ``f`` is trained on the noisy image ``y`` alone. Each epoch runs
``m`` ADAM steps on

    fidelity_scale / (2 sigma^2) * ||y - f(y)||^2 + rho / 2 * ||f(y) + A - M||^2

over random patches (``M`` and ``A`` cropped at the same positions), then
sets ``X = f(y)``, ``M = denoiser(X + A)`` and ``A += eta * (X - M)``.
Every ``twist`` global iterations, each kernel except the first is replaced
by its partial Tucker reconstruction at VBMF-selected ranks. VBMF estimates
the noise variance of each matricization by default; ``vbmf_noise="image"``
hands it the image noise variance instead, which on a normalized image lies
far above the spread of typical kernel weights and prunes every layer to
rank one.

Everything runs on the normalized image (zero mean, unit std); ``sigma2``
is the noise variance in those units. The M-step is the proximal map of
``R / rho`` (lambda folded into rho). Matching that map to a Gaussian
denoiser while keeping the MAP balance between the two terms gives the
noise level ``sqrt(fidelity_scale / rho)``, used unless ``prox_sigma``
overrides it.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .denoisers import DenoiserSpec, make_denoiser
from .errors import DenoiseError, DomainError
from .imageio import denormalize, normalize
from .inference import apply_padded, network_fn, patchwise_infer
from .metrics import weight_change
from .nn import AdamState, ForwardCache, adam_step, backward, forward, sample_patches, xavier_init
from .nn.adam import DEFAULT_SCHEDULE
from .nn.unet import UNetStructure
from .noise import estimate_sigma
from .rng import stream
from .tucker import StopRule, compression_ratio, phooi, reconstruct
from .vbmf import select_kernel_ranks

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "DistortionEvent",
    "RunResult",
    "theta_objective",
    "batch_objective",
    "update_theta",
    "weight_distortion",
    "update_M",
    "update_A",
    "iterations_per_epoch",
    "prox_level",
    "denoise_single_image",
]


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 100.0
    eta: float = 0.5
    twist: int = 200
    epochs: int = 100
    sigma2: float = None
    lam: float = 1.0             # recorded only; absorbed into rho
    fidelity_scale: float = 1.0  # 4.0 turns 1/(2 sigma^2) into 2/sigma^2
    batch: int = 128
    patch: int = 32
    iters_per_epoch: int = 0     # 0: derived from the image size
    oversampling: float = 120.0
    schedule: tuple = DEFAULT_SCHEDULE
    distort: bool = True
    vbmf_noise: str = "estimate"  # per-matrix EVB estimate, or "image": pass sigma2
    prox_sigma: float = None     # denoiser noise level; None: sqrt(fidelity_scale / rho)
    phooi_stop: StopRule = StopRule()
    heldout: int = 32
    tile: int = 800
    tile_pad: int = 500

    def __post_init__(self):
        if not self.rho >= 0:
            raise DomainError(f"rho must be >= 0, got {self.rho}")
        if not 0 <= self.eta < 2:
            raise DomainError(f"eta must lie in [0, 2), got {self.eta}")
        if self.twist < 1 or self.epochs < 1 or self.batch < 1 or self.patch < 1:
            raise DomainError("twist, epochs, batch and patch must be >= 1")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if self.fidelity_scale <= 0:
            raise DomainError("fidelity_scale must be positive")
        if self.prox_sigma is not None and not self.prox_sigma > 0:
            raise DomainError(f"prox_sigma must be positive, got {self.prox_sigma}")
        if self.vbmf_noise not in ("image", "estimate"):
            raise DomainError(f"vbmf_noise must be 'image' or 'estimate', got {self.vbmf_noise!r}")


@dataclass
class AdmmState:
    X: np.ndarray
    M: np.ndarray
    A: np.ndarray
    epoch: int = 0
    iteration: int = 0


@dataclass(frozen=True)
class DistortionEvent:
    iteration: int
    epoch: int
    layer: str
    r3: int
    r4: int
    compression_ratio: float
    residual: float
    rel_residual: float
    vbmf3: dict = None   # VBMF internals of the mode-3 and mode-4 unfoldings
    vbmf4: dict = None


def theta_objective(y, f_out, M, A, sigma2, rho, fidelity_scale=1.0):
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    r1 = np.asarray(y, dtype=np.float64) - f_out
    r2 = f_out + A - M
    return float(fidelity_scale / (2 * sigma2) * np.sum(r1 * r1) + rho / 2 * np.sum(r2 * r2))


def batch_objective(y, f_out, M, A, sigma2, rho, fidelity_scale=1.0):
    """Per-pixel mean objective over a batch and its gradient w.r.t. ``f_out``."""
    n = f_out.size
    r1 = f_out - y
    r2 = f_out + A - M
    c = fidelity_scale / sigma2
    loss = (0.5 * c * np.sum(r1 * r1) + 0.5 * rho * np.sum(r2 * r2)) / n
    return float(loss), (c * r1 + rho * r2) / n


def update_M(X, A, denoiser):
    return denoiser(X + A)


def update_A(A, f_out, M, eta):
    return A + eta * (f_out - M)


def prox_level(config, sigma2):
    """Noise level handed to the plug-in denoiser, in normalized units."""
    if config.prox_sigma is not None:
        return config.prox_sigma
    if config.rho > 0:
        return math.sqrt(config.fidelity_scale / config.rho)
    return math.sqrt(sigma2)


def iterations_per_epoch(shape, config):
    if config.iters_per_epoch:
        return config.iters_per_epoch
    h, w = shape[:2]
    return max(1, math.ceil(config.oversampling * h * w / (config.patch**2 * config.batch)))


def weight_distortion(params, sigma2, stop=StopRule(), iteration=0, epoch=0):
    """Replace every distortable kernel by its partial Tucker reconstruction.

    ``sigma2=None`` lets VBMF estimate a noise variance per matricization.
    Returns the list of :class:`DistortionEvent` records. ``params`` is
    modified in place; biases and the first layer are left alone.
    """
    events = []
    for layer in params.layers:
        if not layer.distortable:
            continue
        w = layer.kernel
        (r3, r4), (int3, int4) = select_kernel_ranks(w, sigma2, return_internals=True)
        factors = phooi(w, r3, r4, stop)
        new = reconstruct(factors)
        res = float(np.linalg.norm((w - new).ravel()))
        norm = float(np.linalg.norm(w.ravel()))
        d, _, s, t = w.shape
        events.append(DistortionEvent(iteration, epoch, layer.name, r3, r4,
                                      compression_ratio(d, s, t, r3, r4), res,
                                      res / norm if norm else 0.0, int3.to_dict(),
                                      int4.to_dict()))
        layer.kernel = new
    return events


@dataclass
class RunResult:
    output: np.ndarray
    params: object
    sigma: float
    sigma2_normalized: float
    iterations: list = field(default_factory=list)   # dicts per iteration
    epochs: list = field(default_factory=list)       # dicts per epoch
    distortions: list = field(default_factory=list)  # DistortionEvent
    wall_clock: float = 0.0


def _heldout_objective(params, batch, y, state, sigma2, cfg):
    f = forward(params, batch.patches)
    loss, _ = batch_objective(batch.patches, f, batch.crop(state.M), batch.crop(state.A),
                              sigma2, cfg.rho, cfg.fidelity_scale)
    return loss


def update_theta(state, y, params, adam, config, sigma2, rng, result=None, heldout=None):
    """One epoch of mini-batch ADAM steps on the theta objective.

    Distortion is applied after any step whose 1-based global index is a
    multiple of ``config.twist``. Returns ``params`` (updated in place).
    """
    m = iterations_per_epoch(y.shape, config)
    for i in range(m):
        state.iteration += 1
        t = state.iteration
        batch = sample_patches(y, config.batch, config.patch, rng)
        cache = ForwardCache()
        f = forward(params, batch.patches, cache)
        loss, grad = batch_objective(batch.patches, f, batch.crop(state.M), batch.crop(state.A),
                                     sigma2, config.rho, config.fidelity_scale)
        adam_step(adam, params, backward(params, cache, grad), epoch=state.epoch)
        row = {"iteration": t, "epoch": state.epoch, "loss": loss, "distorted": 0,
               "heldout_before": "", "heldout_after": ""}
        if config.distort and t % config.twist == 0:
            if heldout is not None:
                row["heldout_before"] = _heldout_objective(params, heldout, y, state, sigma2, config)
            vb_sigma2 = sigma2 if config.vbmf_noise == "image" else None
            events = weight_distortion(params, vb_sigma2, config.phooi_stop, t, state.epoch)
            if heldout is not None:
                row["heldout_after"] = _heldout_objective(params, heldout, y, state, sigma2, config)
            row["distorted"] = 1
            if result is not None:
                result.distortions.extend(events)
        if result is not None:
            result.iterations.append(row)
    return params


def _full_forward(params, image, config):
    net = network_fn(params)
    div = params.structure.divisor
    if max(image.shape[:2]) > config.tile:
        return patchwise_infer(image, net, div, config.tile, config.tile_pad)
    return apply_padded(net, image, div)


def denoise_single_image(y, config=AdmmConfig(), structure=UNetStructure(),
                         denoiser=DenoiserSpec(), seed=0, sigma=None, progress=None):
    """Run the full scheme on one noisy image ``y`` (``(h, w)`` or ``(h, w, 1)``).

    ``sigma`` is the noise standard deviation in image units; when omitted
    (and ``config.sigma2`` is unset) it is estimated from ``y``. Returns a
    :class:`RunResult` whose ``output`` is in the units of ``y``.
    """
    y = np.asarray(y, dtype=np.float64)
    flat = y.ndim == 2
    if flat:
        y = y[..., None]
    if not np.all(np.isfinite(y)):
        raise DomainError("input image has non-finite values")
    start = time.perf_counter()
    yn, record = normalize(y)
    if config.sigma2 is not None:
        sigma2 = config.sigma2
        sigma = math.sqrt(sigma2) * record.std
    else:
        if sigma is None:
            sigma = estimate_sigma(y)
        sigma2 = (sigma / record.std) ** 2
    prox = make_denoiser(denoiser, prox_level(config, sigma2))

    params = xavier_init(structure, seed)
    adam = AdamState(schedule=config.schedule)
    rng = stream(seed, "patches")
    heldout = sample_patches(yn, config.heldout, config.patch, stream(seed, "heldout")) \
        if config.heldout else None
    state = AdmmState(X=yn.copy(), M=yn.copy(), A=np.zeros_like(yn))
    result = RunResult(None, params, float(sigma), float(sigma2))

    for k in range(config.epochs):
        state.epoch = k
        before = params.copy()
        try:
            update_theta(state, yn, params, adam, config, sigma2, rng, result, heldout)
            state.X = _full_forward(params, yn, config)
            state.M = update_M(state.X, state.A, prox)
            state.A = update_A(state.A, state.X, state.M, config.eta)
        except DenoiseError as exc:
            exc.args = (f"epoch {k}, iteration {state.iteration}: {exc}",)
            raise
        per_layer, mean_change = weight_change(params, before)
        result.epochs.append({
            "epoch": k,
            "weight_change": mean_change,
            "objective": theta_objective(yn, state.X, state.M, state.A, sigma2,
                                         config.rho, config.fidelity_scale) / yn.size,
            "primal_residual": float(np.sqrt(np.mean((state.X - state.M) ** 2))),
            "dual_rms": float(np.sqrt(np.mean(state.A**2))),
        })
        if progress is not None:
            progress(k, result)

    out = denormalize(state.X, record)
    result.output = out[..., 0] if flat else out
    result.wall_clock = time.perf_counter() - start
    return result
