"""Deterministic hand-crafted texture descriptor for terrain patches.

The 30-value layout:

* 0:3   per-channel pixel means (R, G, B)
* 3:6   per-channel pixel standard deviations
* 6:22  16-bin grayscale intensity histogram, normalized to sum 1
* 22:30 8-bin gradient-orientation histogram (magnitude weighted,
        central differences on the gray channel), normalized to sum 1

Grayscale inputs are treated as three identical channels so the length is
fixed regardless of the source format.
"""

from __future__ import annotations

import numpy as np

FEATURE_LENGTH = 30
INTENSITY_BINS = 16
ORIENTATION_BINS = 8


def texture_feature(patch: np.ndarray) -> np.ndarray:
    """Compute the 30-dim texture descriptor of an image patch.

    Requires at least a 3x3 patch (central differences need interior
    pixels). Uniform patches get a single-spike intensity histogram and,
    by convention, a uniform orientation histogram.
    """
    patch = np.asarray(patch, dtype=float)
    if patch.ndim == 2:
        patch = patch[:, :, None].repeat(3, axis=2)
    if patch.ndim != 3 or patch.shape[2] != 3:
        raise ValueError("patch must be (H, W) grayscale or (H, W, 3) color")
    h, w = patch.shape[:2]
    if h < 3 or w < 3:
        raise ValueError(f"patch too small for gradient features: {h}x{w}")

    means = patch.mean(axis=(0, 1))
    stds = patch.std(axis=(0, 1))

    gray = patch.mean(axis=2)
    clipped = np.clip(gray, 0.0, 255.0)
    intensity, _ = np.histogram(clipped, bins=INTENSITY_BINS, range=(0.0, 256.0))
    intensity = intensity / gray.size

    gx = (gray[1:-1, 2:] - gray[1:-1, :-2]) * 0.5
    gy = (gray[2:, 1:-1] - gray[:-2, 1:-1]) * 0.5
    mag = np.hypot(gx, gy)
    total = mag.sum()
    if total < 1e-12:
        orientation = np.full(ORIENTATION_BINS, 1.0 / ORIENTATION_BINS)
    else:
        theta = np.arctan2(gy, gx)
        orientation, _ = np.histogram(theta, bins=ORIENTATION_BINS,
                                      range=(-np.pi, np.pi), weights=mag)
        orientation = orientation / total

    return np.concatenate([means, stds, intensity, orientation])
