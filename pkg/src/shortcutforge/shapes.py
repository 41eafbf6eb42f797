"""Procedural 4-class shapes dataset used for desk-scale verification.

Grayscale 32x32 renders of a disk, square, triangle, or cross on a noisy
background, with jittered position, size and contrast. Regenerable anywhere
from a seed; hard enough that a clean CNN needs real training, easy enough
that it generalizes well.
"""

from __future__ import annotations

import numpy as np

CLASS_NAMES = ("disk", "square", "triangle", "cross")

N_CLASSES = 4


def _render(label: int, rng: np.random.Generator, size: int, noise: float) -> np.ndarray:
    cy = size / 2.0 + rng.uniform(-5.0, 5.0)
    cx = size / 2.0 + rng.uniform(-5.0, 5.0)
    r = rng.uniform(5.0, 9.0)
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]
    dy, dx = yy - cy, xx - cx

    if label == 0:  # disk
        mask = dy * dy + dx * dx <= r * r
    elif label == 1:  # square
        half = r * 0.82
        mask = (np.abs(dy) <= half) & (np.abs(dx) <= half)
    elif label == 2:  # triangle: apex (0,-r), base corners (+-r, +0.8r)
        mask = (dy <= 0.8 * r) & (dy >= -r + 1.8 * np.abs(dx))
    else:  # cross
        arm = max(1.5, r * 0.30)
        mask = ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= r)
        )

    bg = rng.uniform(0.25, 0.45)
    contrast = rng.uniform(0.28, 0.42)
    img = np.full((size, size), bg)
    img[mask] += contrast
    img += rng.normal(0.0, noise, size=(size, size))
    return np.clip(img, 0.0, 1.0)[:, :, None]


def make_shapes(
    n_per_class: int,
    seed: int = 7,
    size: int = 32,
    noise: float = 0.18,
):
    """Balanced dataset: class blocks in order (disk, square, triangle, cross)."""
    rng = np.random.default_rng(seed)
    X = np.empty((N_CLASSES * n_per_class, size, size, 1))
    y = np.repeat(np.arange(N_CLASSES), n_per_class)
    for i, label in enumerate(y):
        X[i] = _render(int(label), rng, size, noise)
    return X, y


def make_shapes_split(
    n_train_per_class: int = 500,
    n_test_per_class: int = 100,
    seed: int = 7,
    size: int = 32,
    noise: float = 0.18,
):
    """Disjoint train/test draws (different substreams of the seed)."""
    Xtr, ytr = make_shapes(n_train_per_class, seed=seed, size=size, noise=noise)
    Xte, yte = make_shapes(n_test_per_class, seed=seed + 777_000, size=size, noise=noise)
    return Xtr, ytr, Xte, yte
