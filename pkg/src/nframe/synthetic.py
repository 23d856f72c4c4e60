"""Deterministic synthetic test images.

``smooth_blob_image`` is infinitely smooth up to sampling (sums of broad
Gaussians), which the rotation rank test needs. ``natural_texture_image``
mimics natural second-order statistics (a power-law spectrum plus soft
illumination and blobs) and stands in for photographs where none ship with
the package.
"""

import numpy as np


def smooth_blob_image(size: int = 256, seed: int = 0, blobs: int = 6) -> np.ndarray:
    """Sum of random broad Gaussian blobs, channel-correlated, in [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    base = np.zeros((size, size))
    fields = [np.zeros((size, size)) for _ in range(3)]
    for _ in range(blobs):
        cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
        sigma = rng.uniform(size / 8.0, size / 4.0)
        amp = rng.uniform(0.3, 1.0)
        blob = amp * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma**2))
        base += blob
        for ch in range(3):
            fields[ch] += blob * rng.uniform(0.6, 1.4)
    img = np.stack([0.5 * base + 0.5 * f for f in fields], axis=-1)
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.full((size, size, 3), 0.5)
    return 0.05 + 0.9 * (img - lo) / (hi - lo)


def natural_texture_image(size: int = 224, seed: int = 0) -> np.ndarray:
    """Power-law (1/f^2) random field with illumination gradient and blobs."""
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fy**2 + fx**2)
    amplitude = 1.0 / (radius + 1.0 / size) ** 2

    shared = np.fft.ifft2(np.fft.fft2(rng.standard_normal((size, size))) * amplitude).real
    channels = []
    for _ in range(3):
        own = np.fft.ifft2(np.fft.fft2(rng.standard_normal((size, size))) * amplitude).real
        channels.append(0.75 * shared + 0.25 * own)
    img = np.stack(channels, axis=-1)

    ys, xs = np.mgrid[0:size, 0:size] / float(size)
    gdir = rng.uniform(-1.0, 1.0, size=2)
    img += 0.4 * (gdir[0] * ys + gdir[1] * xs)[..., None]
    for _ in range(3):
        cy, cx = rng.uniform(0.1, 0.9, size=2) * size
        sigma = rng.uniform(size / 10.0, size / 4.0)
        tint = rng.uniform(-0.5, 0.5, size=3)
        blob = np.exp(-((np.mgrid[0:size][:, None] - cy) ** 2 + (np.mgrid[0:size][None, :] - cx) ** 2) / (2 * sigma**2))
        img += blob[..., None] * tint

    lo, hi = img.min(), img.max()
    return 0.02 + 0.96 * (img - lo) / (hi - lo)
