import time
import numpy as np
import shortcutforge as sf
from shortcutforge.probe import TrainConfig, train_cnn, evaluate
from shortcutforge.shortcuts import protect_batch
from scratch_tune import make

def trial3(name, lr, epochs, augment, seed=0, n_per=500, **kw):
    Xtr, ytr = make(n_per, 7, **kw)
    Xte, yte = make(100, 7 + 777000, **kw)
    cb = sf.AttributeCodebook(("shape",), (4,), seed=42)
    spec = sf.ShortcutSpec("sensor", epsilon=4 / 255, seed=42)
    Xtr_p = protect_batch(Xtr, ytr, cb, spec)
    Xte_p = protect_batch(Xte, yte, cb, spec)
    cfg = TrainConfig(learning_rate=lr, batch_size=64, max_epochs=epochs, patience=5, seed=seed, augment=augment)
    t0 = time.time()
    clean = train_cnn(Xtr, ytr, cfg)
    a_clean = evaluate(clean, Xte, yte).accuracy
    sc = train_cnn(Xtr_p, ytr, cfg)
    a_sc_clean = evaluate(sc, Xte, yte).accuracy
    a_sc_sc = evaluate(sc, Xte_p, yte).accuracy
    print(f"{name} s{seed}: clean {a_clean:.2f} (ep {len(clean.history['train_loss'])}) | "
          f"sc->clean {a_sc_clean:.2f} sc->sc {a_sc_sc:.2f} (ep {len(sc.history['train_loss'])}) "
          f"| {time.time()-t0:.0f}s", flush=True)

G4 = dict(noise=0.08, clo=0.18, chi=0.32, jitter=7, rlo=4, rhi=9)
G5 = dict(noise=0.085, clo=0.17, chi=0.30, jitter=7, rlo=4, rhi=9)
trial3("G4 lr.02 e40 aug", 0.02, 40, True, **G4)
trial3("G5 lr.02 e30    ", 0.02, 30, False, **G5)
trial3("G5 lr.025 e30   ", 0.025, 30, False, **G5)
