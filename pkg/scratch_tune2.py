from scratch_tune import trial

grid = [
    ("G1 n.10 c.18-.32 j6", dict(noise=0.10, clo=0.18, chi=0.32, jitter=6, rlo=4, rhi=9)),
    ("G2 n.12 c.22-.36 j6", dict(noise=0.12, clo=0.22, chi=0.36, jitter=6, rlo=4, rhi=9)),
    ("G3 n.08 c.15-.28 j7", dict(noise=0.08, clo=0.15, chi=0.28, jitter=7, rlo=4, rhi=9)),
]
for name, kw in grid:
    trial(name, n_per=500, epochs=40, augment=False, **kw)
