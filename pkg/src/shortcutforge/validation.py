"""Input validation helpers for image arrays and labeled batches."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError, ShortcutForgeError


def check_image_u8(img) -> np.ndarray:
    """Validate a stored image: uint8, shape (H, W, C) with C in {1, 3}."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ShortcutForgeError(f"stored image must be uint8, got {img.dtype}")
    return _check_shape(img)


def check_image_f(img) -> np.ndarray:
    """Validate a working image: float in [0, 1], shape (H, W, C)."""
    img = np.asarray(img, dtype=np.float64)
    _check_shape(img)
    if img.size and (img.min() < -1e-9 or img.max() > 1 + 1e-9):
        raise ShortcutForgeError(
            f"working image out of [0, 1]: min={img.min():.4g} max={img.max():.4g}"
        )
    return img


def _check_shape(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShortcutForgeError(
            f"image must have shape (H, W, C) with C in {{1, 3}}, got {img.shape}"
        )
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShortcutForgeError(f"empty image: shape {img.shape}")
    return img


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def check_batch(X, y=None):
    """Validate a labeled image batch: X (N, H, W, C) float in [0,1], y (N,) ints.

    Returns (X, y) as float64 / int64 arrays. Accepts X of shape (N, H, W)
    and promotes it to a single channel.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4 or X.shape[3] not in (1, 3):
        raise ShortcutForgeError(
            f"batch must have shape (N, H, W, C) with C in {{1, 3}}, got {X.shape}"
        )
    if y is None:
        return X, None
    y = np.asarray(y, dtype=np.int64).ravel()
    if len(y) != len(X):
        raise ShortcutForgeError(f"X has {len(X)} samples but y has {len(y)}")
    if y.size and y.min() < 0:
        raise ShortcutForgeError("labels must be nonnegative integers")
    return X, y
