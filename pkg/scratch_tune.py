"""Scratch: find shapes-dataset regime where the sensor shortcut collapses the CNN."""
import itertools
import sys
import time

import numpy as np

import shortcutforge as sf
from shortcutforge.probe import TrainConfig, train_cnn, evaluate
from shortcutforge.shortcuts import protect_batch

CLASSES = 4


def render(label, rng, size, noise, jitter, rlo, rhi, clo, chi):
    cy = size / 2.0 + rng.uniform(-jitter, jitter)
    cx = size / 2.0 + rng.uniform(-jitter, jitter)
    r = rng.uniform(rlo, rhi)
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]
    dy, dx = yy - cy, xx - cx
    if label == 0:
        mask = dy * dy + dx * dx <= r * r
    elif label == 1:
        half = r * 0.82
        mask = (np.abs(dy) <= half) & (np.abs(dx) <= half)
    elif label == 2:
        mask = (dy <= 0.8 * r) & (dy >= -r + 1.8 * np.abs(dx))
    else:
        arm = max(1.5, r * 0.30)
        mask = ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | ((np.abs(dy) <= arm) & (np.abs(dx) <= r))
    bg = rng.uniform(0.25, 0.45)
    contrast = rng.uniform(clo, chi)
    img = np.full((size, size), bg)
    img[mask] += contrast
    img += rng.normal(0.0, noise, size=(size, size))
    return np.clip(img, 0.0, 1.0)[:, :, None]


def make(n_per, seed, **kw):
    rng = np.random.default_rng(seed)
    X = np.empty((CLASSES * n_per, 32, 32, 1))
    y = np.repeat(np.arange(CLASSES), n_per)
    for i, lab in enumerate(y):
        X[i] = render(int(lab), rng, 32, **kw)
    return X, y


def trial(name, n_per, epochs, augment, **kw):
    Xtr, ytr = make(n_per, 7, **kw)
    Xte, yte = make(max(50, n_per // 5), 7 + 777000, **kw)
    cb = sf.AttributeCodebook(("shape",), (4,), seed=42)
    spec = sf.ShortcutSpec("sensor", epsilon=4 / 255, seed=42)
    Xtr_p = protect_batch(Xtr, ytr, cb, spec)
    Xte_p = protect_batch(Xte, yte, cb, spec)
    cfg = TrainConfig(learning_rate=0.01, batch_size=64, max_epochs=epochs, patience=5, seed=0, augment=augment)
    t0 = time.time()
    clean = train_cnn(Xtr, ytr, cfg)
    a_clean = evaluate(clean, Xte, yte).accuracy
    sc = train_cnn(Xtr_p, ytr, cfg)
    a_sc_clean = evaluate(sc, Xte, yte).accuracy
    a_sc_sc = evaluate(sc, Xte_p, yte).accuracy
    print(
        f"{name}: clean {a_clean:.2f} (ep {len(clean.history['train_loss'])}) | "
        f"sc->clean {a_sc_clean:.2f} sc->sc {a_sc_sc:.2f} (ep {len(sc.history['train_loss'])}) "
        f"| {time.time()-t0:.0f}s",
        flush=True,
    )


if __name__ == "__main__":
    grid = [
        # name, noise, contrast lo/hi, jitter, r-range, augment
        ("A n.05 c.10-.20 j7", dict(noise=0.05, clo=0.10, chi=0.20, jitter=7, rlo=4, rhi=9), False),
        ("B n.05 c.10-.20 j7 aug", dict(noise=0.05, clo=0.10, chi=0.20, jitter=7, rlo=4, rhi=9), True),
        ("C n.08 c.12-.22 j7", dict(noise=0.08, clo=0.12, chi=0.22, jitter=7, rlo=4, rhi=9), False),
        ("D n.10 c.15-.30 j6", dict(noise=0.10, clo=0.15, chi=0.30, jitter=6, rlo=4, rhi=9), False),
        ("E n.05 c.08-.15 j8", dict(noise=0.05, clo=0.08, chi=0.15, jitter=8, rlo=4, rhi=9), False),
        ("F n.03 c.08-.15 j8", dict(noise=0.03, clo=0.08, chi=0.15, jitter=8, rlo=4, rhi=9), False),
    ]
    for name, kw, aug in grid:
        trial(name, n_per=300, epochs=15, augment=aug, **kw)
