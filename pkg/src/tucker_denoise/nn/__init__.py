from .adam import AdamState, adam_step, learning_rate
from .layers import conv2d
from .patches import TrainBatch, augment, sample_patches
from .unet import (ConvSpec, ForwardCache, Layer, NetworkParams, UNetStructure,
                   backward, forward, xavier_init)

__all__ = [
    "AdamState", "adam_step", "learning_rate", "conv2d", "TrainBatch", "augment",
    "sample_patches", "ConvSpec", "ForwardCache", "Layer", "NetworkParams",
    "UNetStructure", "backward", "forward", "xavier_init",
]
