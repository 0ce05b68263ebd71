"""Random patch sampling with 90-degree rotation and mirror augmentation."""

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError


def augment(patch, rot, flip):
    """Rotate ``patch`` by ``rot`` quarter turns, then mirror left-right if ``flip``."""
    out = np.rot90(patch, rot, axes=(0, 1))
    return out[:, ::-1] if flip else out


@dataclass
class TrainBatch:
    """Patch positions and augmentations drawn for one mini-batch.

    ``crop`` applies the same positions and transforms to any image with the
    same spatial extents, so auxiliary buffers stay aligned with the patches.
    """
    rows: np.ndarray
    cols: np.ndarray
    rots: np.ndarray
    flips: np.ndarray
    size: int
    patches: np.ndarray = None

    def __len__(self):
        return len(self.rows)

    def crop(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = image[..., None]
        n, k = len(self), self.size
        out = np.empty((n, k, k, image.shape[2]))
        for i in range(n):
            r, c = self.rows[i], self.cols[i]
            out[i] = augment(image[r:r + k, c:c + k], self.rots[i], self.flips[i])
        return out


def sample_patches(image, count, size, rng):
    """Draw ``count`` uniformly placed ``size x size`` patches (overlap allowed).

    Each patch is rotated by a uniformly chosen multiple of 90 degrees and
    mirrored with probability 1/2. ``rng`` is a numpy ``Generator``.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    h, w = image.shape[:2]
    if h < size or w < size:
        raise DomainError(f"image {h}x{w} is smaller than the {size}x{size} patch")
    batch = TrainBatch(
        rows=rng.integers(0, h - size + 1, size=count),
        cols=rng.integers(0, w - size + 1, size=count),
        rots=rng.integers(0, 4, size=count),
        flips=rng.integers(0, 2, size=count).astype(bool),
        size=size,
    )
    batch.patches = batch.crop(image)
    return batch
