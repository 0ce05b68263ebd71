"""Deterministic synthetic test images on a 0-255 scale."""

import numpy as np


def piecewise_smooth(n=128):
    """Smooth background ramp with flat disks and rectangles."""
    yy, xx = np.mgrid[0:n, 0:n] / (n - 1)
    img = 60 + 80 * xx + 40 * yy**2
    disks = [(0.3, 0.3, 0.15, 200.0), (0.7, 0.65, 0.2, 30.0), (0.25, 0.75, 0.1, 170.0)]
    for cy, cx, r, v in disks:
        img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = v
    img[int(0.55 * n):int(0.85 * n), int(0.1 * n):int(0.35 * n)] = 110.0
    return img


def textured(n=128):
    """Piecewise-smooth phantom with oriented sinusoidal texture in some regions."""
    img = piecewise_smooth(n)
    yy, xx = np.mgrid[0:n, 0:n]
    stripes = 25 * np.sin(2 * np.pi * (xx + 0.5 * yy) / 9.0)
    mask = (xx > n // 2) & (yy < n // 2)
    img[mask] += stripes[mask]
    return np.clip(img, 0, 255)


def step_edge(n=64, low=50.0, high=150.0):
    """Two flat regions split by a vertical edge at column ``n // 2``."""
    img = np.full((n, n), low)
    img[:, n // 2:] = high
    return img
