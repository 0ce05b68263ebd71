"""Flat ``key = value`` run configuration.

Every key has a default; unknown or repeated keys are rejected. ``#`` starts
a comment. Booleans are ``true``/``false``. ``sigma = auto`` requests blind
noise estimation and ``prox_sigma = auto`` tunes the plug-in denoiser to
``sqrt(fidelity_scale / rho)``. Named profiles override a handful of
defaults for quick runs; the base defaults are the full-scale
hyperparameters.
"""

import dataclasses
from dataclasses import dataclass, fields

from .admm import AdmmConfig
from .denoisers import DenoiserSpec
from .errors import ConfigError, DomainError
from .noise import NoiseModel
from .nn.unet import UNetStructure
from .tucker import StopRule

__all__ = ["RunConfig", "PROFILES", "parse_config", "serialize_config", "load_config"]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # ADMM
    rho: float = 100.0
    eta: float = 0.5
    twist: int = 200
    epochs: int = 100
    lam: float = 1.0
    fidelity_scale: float = 1.0
    sigma: float = None
    distort: bool = True
    vbmf_noise: str = "estimate"
    prox_sigma: float = None
    heldout: int = 32
    # optimizer and sampling
    batch: int = 128
    patch: int = 32
    iters_per_epoch: int = 0
    oversampling: float = 120.0
    lr0: float = 0.01
    lr1: float = 0.002
    lr2: float = 0.0004
    lr_epoch1: int = 30
    lr_epoch2: int = 60
    phooi_max_iters: int = 10
    phooi_rel_tol: float = 1e-6
    # network
    width: int = 48
    levels: int = 5
    first_kernel: int = 11
    kernel: int = 3
    # proximal denoiser
    denoiser: str = "bm3d_lite"
    lowpass_sigma: float = 1.0
    nlm_h_factor: float = 1.0
    nlm_patch_radius: int = 3
    nlm_search_radius: int = 7
    bm3d_block: int = 8
    bm3d_step: int = 3
    bm3d_search_radius: int = 8
    bm3d_max_group: int = 16
    bm3d_thr_multiple: float = 2.7
    # noise
    noise: str = "gaussian"
    noise_sigma: float = 25.0
    noise_gain: float = 1.0
    noise_variance: float = 0.0
    vst: bool = False
    # data and inference
    crop: int = 0
    tile: int = 800
    tile_pad: int = 500

    def admm(self):
        return AdmmConfig(
            rho=self.rho, eta=self.eta, twist=self.twist, epochs=self.epochs, lam=self.lam,
            fidelity_scale=self.fidelity_scale, batch=self.batch, patch=self.patch,
            iters_per_epoch=self.iters_per_epoch, oversampling=self.oversampling,
            schedule=((0, self.lr0), (self.lr_epoch1, self.lr1), (self.lr_epoch2, self.lr2)),
            distort=self.distort, vbmf_noise=self.vbmf_noise, prox_sigma=self.prox_sigma,
            phooi_stop=StopRule(self.phooi_max_iters, self.phooi_rel_tol),
            heldout=self.heldout, tile=self.tile, tile_pad=self.tile_pad)

    def structure(self):
        return UNetStructure(1, self.width, self.levels, self.first_kernel, self.kernel)

    def denoiser_spec(self):
        return DenoiserSpec(
            self.denoiser, self.lowpass_sigma, self.nlm_h_factor, self.nlm_patch_radius,
            self.nlm_search_radius, self.bm3d_block, self.bm3d_step, self.bm3d_search_radius,
            self.bm3d_max_group, self.bm3d_thr_multiple)

    def noise_model(self, seed=None):
        return NoiseModel(self.noise, self.noise_sigma, self.noise_gain, self.noise_variance,
                          self.seed if seed is None else seed)

    def validate(self):
        """Build every component once so invalid values fail early."""
        try:
            self.admm()
            self.structure()
            self.denoiser_spec()
            self.noise_model()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"sigma must be positive or auto, got {self.sigma}")
        return self


PROFILES = {
    "full": {},
    # 128x128 crop, 20 epochs: about ten minutes on one laptop core
    "desk": {"crop": 128, "epochs": 20, "twist": 50, "width": 16, "iters_per_epoch": 60,
             "fidelity_scale": 4.0},
}

_TYPES = {f.name: f.type for f in fields(RunConfig)}
# keys whose value may be "auto" (stored as None)
_AUTO = ("sigma", "prox_sigma")


def _format(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _convert(key, text):
    kind = _TYPES[key]
    if key in _AUTO and text == "auto":
        return None
    try:
        if kind in ("bool", bool):
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"invalid value {text!r} for {key}") from None


def parse_config(text, base=None):
    """Parse config text; values override ``base`` (defaults if omitted)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value)
    return apply_overrides(base or RunConfig(), values)


def apply_overrides(config, values):
    unknown = set(values) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    return dataclasses.replace(config, **values).validate()


def profile(name):
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return apply_overrides(RunConfig(), PROFILES[name])


def serialize_config(config):
    return "".join(f"{f.name} = {_format(getattr(config, f.name))}\n" for f in fields(config))


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
