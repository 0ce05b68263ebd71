"""Single-image denoising by plug-and-play ADMM with Tucker low-rank weight distortion."""

from .admm import AdmmConfig, denoise_single_image, weight_distortion
from .denoisers import DenoiserSpec, bm3d_lite, lowpass, nlm
from .errors import ConfigError, DenoiseError, DomainError, NumericError, ParseError, StateError
from .metrics import psnr, ssim, weight_change
from .noise import add_gaussian, add_poisson_gaussian, estimate_sigma, vst_forward, vst_inverse
from .tensor import frobenius_norm, matricize, mode_product, tensorize, top_left_singular_vectors
from .tucker import compression_ratio, factorized_conv, phooi, reconstruct
from .vbmf import select_kernel_ranks, vbmf_select_rank

__version__ = "0.1.0"
