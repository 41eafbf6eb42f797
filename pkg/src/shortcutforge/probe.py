"""Verification probes: linear separability probe and a small from-scratch CNN.

The CNN stands in for the full-scale network the protection is aimed at: it is
big enough to learn the desk-scale shapes dataset yet small enough to train in
seconds, and its training loop reproduces the protocol that matters here --
shortcut baked into the training files, augmentation applied afterwards, early
stopping on a validation split carved from the (shortcut-bearing) train set.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ShapeMismatchError, ShortcutForgeError
from .nn import Conv2d, Dense, Flatten, MaxPool2, Network, ReLU, SGDMomentum
from .validation import check_batch

ARCH_LINEAR = "linear_probe_v1"
ARCH_CNN = "tiny_cnn_v1"


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 40
    patience: int = 5
    seed: int = 0
    augment: bool = False
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ShortcutForgeError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ShortcutForgeError("batch_size must be >= 1")

    def to_json_dict(self) -> dict:
        return asdict(self)


def make_linear_probe(input_shape, n_classes: int, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    h, w, c = input_shape
    layers = [Flatten(), Dense(h * w * c, n_classes, rng, "fc")]
    return Network(layers, ARCH_LINEAR, input_shape, n_classes)


def make_tiny_cnn(input_shape, n_classes: int, seed: int = 0) -> Network:
    """conv(3x3,16) -> ReLU -> pool2 -> conv(3x3,32) -> ReLU -> pool2 -> dense."""
    rng = np.random.default_rng(seed)
    h, w, c = input_shape
    layers = [
        Conv2d(c, 16, 3, rng, "conv1"),
        ReLU(),
        MaxPool2(),
        Conv2d(16, 32, 3, rng, "conv2"),
        ReLU(),
        MaxPool2(),
        Flatten(),
        Dense((h // 2 // 2) * (w // 2 // 2) * 32, n_classes, rng, "fc"),
    ]
    return Network(layers, ARCH_CNN, input_shape, n_classes)


# ---------------------------------------------------------------------------
# augmentation (always applied after any shortcut: protection happens on the
# stored files, augmentation inside the training loop)


def shift_image(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer translate with zero fill."""
    out = np.zeros_like(img)
    h, w = img.shape[:2]
    ys = slice(max(0, dy), h + min(0, dy))
    xs = slice(max(0, dx), w + min(0, dx))
    ys_src = slice(max(0, -dy), h + min(0, -dy))
    xs_src = slice(max(0, -dx), w + min(0, -dx))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def augment_batch(X: np.ndarray, rng: np.random.Generator, max_shift: int = 2):
    """Random horizontal flip + random translate, per sample.

    Returns (augmented, flips, shifts) so tests can reconstruct exactly which
    geometric transform hit each sample.
    """
    n = len(X)
    flips = rng.random(n) < 0.5
    shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
    out = np.empty_like(X)
    for i in range(n):
        img = X[i, :, ::-1, :] if flips[i] else X[i]
        out[i] = shift_image(img, int(shifts[i, 0]), int(shifts[i, 1]))
    return out, flips, shifts


# ---------------------------------------------------------------------------
# training


def _train_network(net: Network, X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> Network:
    """Mini-batch SGD with early stopping on a 10% validation split.

    RNG consumption order is fixed (val split, then per epoch: batch order,
    then augmentation draws), so results are bit-reproducible for a given
    (dataset order, seed).
    """
    n = len(X)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(0.1 * n))
    use_val = n_val >= 1 and n - n_val >= 1
    val_idx, train_idx = (perm[:n_val], perm[n_val:]) if use_val else (None, perm)

    opt = SGDMomentum(net.parameters(), cfg.learning_rate, cfg.momentum)
    history = {"train_loss": [], "val_loss": []}
    best_val = np.inf
    best_params = None
    stale = 0

    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(train_idx))
        total, seen = 0.0, 0
        for start in range(0, len(train_idx), cfg.batch_size):
            idx = train_idx[order[start : start + cfg.batch_size]]
            xb, yb = X[idx], y[idx]
            if cfg.augment:
                xb, _, _ = augment_batch(xb, rng)
            loss = net.loss_and_backward(xb, yb)
            opt.step()
            total += loss * len(idx)
            seen += len(idx)
        history["train_loss"].append(total / max(seen, 1))

        if use_val:
            val_loss = net.loss(X[val_idx], y[val_idx])
            history["val_loss"].append(val_loss)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_params = net.get_param_values()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    if best_params is not None:
        net.set_param_values(best_params)
    net.history = history
    return net


def train_linear_probe(X, y, config: TrainConfig | None = None) -> Network:
    """Multinomial logistic regression on raw flattened pixels via SGD."""
    X, y = check_batch(X, y)
    config = config or TrainConfig(learning_rate=0.05, max_epochs=100, patience=10)
    n_classes = int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise ShortcutForgeError("degenerate dataset: needs >= 2 classes")
    net = make_linear_probe(X.shape[1:], n_classes, seed=config.seed)
    return _train_network(net, X, y, config)


def train_cnn(X, y, config: TrainConfig | None = None) -> Network:
    X, y = check_batch(X, y)
    config = config or TrainConfig()
    n_classes = int(y.max()) + 1
    if len(np.unique(y)) < 2 and len(y) > 1:
        raise ShortcutForgeError("degenerate dataset: needs >= 2 classes")
    net = make_tiny_cnn(X.shape[1:], max(n_classes, 2), seed=config.seed)
    return _train_network(net, X, y, config)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # [true, predicted]
    n: int

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "n": self.n,
        }


def evaluate(net: Network, X, y, batch_size: int = 512) -> EvalResult:
    """Argmax accuracy (ties break toward the lowest class index) + confusion."""
    X, y = check_batch(X, y)
    if X.shape[1:] != net.input_shape:
        raise ShapeMismatchError(
            f"input shape {X.shape[1:]} does not match model {net.input_shape}"
        )
    k = net.n_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    correct = 0
    for start in range(0, len(X), batch_size):
        xb = X[start : start + batch_size]
        yb = y[start : start + batch_size]
        pred = net.predict(xb)
        correct += int(np.sum(pred == yb))
        np.add.at(confusion, (yb, pred), 1)
    return EvalResult(accuracy=correct / len(X), confusion=confusion, n=len(X))


@dataclass
class GapReport:
    baseline_clean_test_acc: float
    shortcut_clean_test_acc: float
    drop: float
    seed: int
    config: dict
    shortcut_shortcut_test_acc: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "baseline_clean_test_acc": self.baseline_clean_test_acc,
            "shortcut_clean_test_acc": self.shortcut_clean_test_acc,
            "drop": self.drop,
            "shortcut_shortcut_test_acc": self.shortcut_shortcut_test_acc,
            "seed": self.seed,
            "config": self.config,
        }


def generalization_gap(
    clean_train,
    protected_train,
    clean_test,
    config: TrainConfig | None = None,
    protected_test=None,
):
    """Train the CNN on clean vs. protected data; report the clean-test drop.

    Returns (GapReport, baseline_net, shortcut_net).
    """
    config = config or TrainConfig()
    Xc, yc = check_batch(*clean_train)
    Xp, yp = check_batch(*protected_train)
    Xt, yt = check_batch(*clean_test)
    baseline = train_cnn(Xc, yc, config)
    shortcut = train_cnn(Xp, yp, config)
    acc_base = evaluate(baseline, Xt, yt).accuracy
    acc_sc = evaluate(shortcut, Xt, yt).accuracy
    sc_test_acc = None
    if protected_test is not None:
        Xpt, ypt = check_batch(*protected_test)
        sc_test_acc = evaluate(shortcut, Xpt, ypt).accuracy
    report = GapReport(
        baseline_clean_test_acc=acc_base,
        shortcut_clean_test_acc=acc_sc,
        drop=acc_base - acc_sc,
        seed=config.seed,
        config=config.to_json_dict(),
        shortcut_shortcut_test_acc=sc_test_acc,
    )
    return report, baseline, shortcut


# ---------------------------------------------------------------------------
# checkpoints
#
# npz container, format_version 1. Keys: "format_version", "arch",
# "input_shape", "n_classes", then one "param_{i:02d}_{name}" entry per
# parameter in network order. Round-trips exactly (float64 binary).


def save_checkpoint(net: Network, path) -> None:
    payload = {
        "format_version": np.array(1),
        "arch": np.array(net.arch),
        "input_shape": np.array(net.input_shape),
        "n_classes": np.array(net.n_classes),
    }
    for i, p in enumerate(net.parameters()):
        payload[f"param_{i:02d}_{p.name}"] = p.value
    np.savez(path, **payload)


def load_checkpoint(path) -> Network:
    with np.load(path) as data:
        arch = str(data["arch"])
        input_shape = tuple(int(v) for v in data["input_shape"])
        n_classes = int(data["n_classes"])
        if arch == ARCH_LINEAR:
            net = make_linear_probe(input_shape, n_classes)
        elif arch == ARCH_CNN:
            net = make_tiny_cnn(input_shape, n_classes)
        else:
            raise ShortcutForgeError(f"unknown checkpoint architecture {arch!r}")
        params = net.parameters()
        for i, p in enumerate(params):
            key = f"param_{i:02d}_{p.name}"
            if key not in data:
                raise ShortcutForgeError(f"checkpoint missing parameter {key}")
            value = data[key]
            if value.shape != p.value.shape:
                raise ShortcutForgeError(
                    f"checkpoint parameter {key} has shape {value.shape}, "
                    f"expected {p.value.shape}"
                )
            p.value[...] = value
    return net


# ---------------------------------------------------------------------------
# sklearn-style veneers


class _NetClassifier(BaseEstimator, ClassifierMixin):
    """Shared fit/predict plumbing over the functional trainers."""

    _trainer = None

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            augment=self.augment,
            momentum=self.momentum,
        )

    def fit(self, X, y):
        X, y = check_batch(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ShortcutForgeError("degenerate dataset: needs >= 2 classes")
        y_idx = np.searchsorted(self.classes_, y)
        self.net_ = type(self)._trainer(X, y_idx, self._config())
        self.history_ = self.net_.history
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise ShortcutForgeError(f"{type(self).__name__} is not fitted")

    def predict_proba(self, X):
        self._check_fitted()
        X, _ = check_batch(X)
        return self.net_.predict_proba(X)

    def predict(self, X):
        self._check_fitted()
        X, _ = check_batch(X)
        return self.classes_[self.net_.predict(X)]


class LinearProbe(_NetClassifier):
    """Multinomial logistic regression on raw pixels, trained by seeded SGD.

    Certifies linear separability of a planted shortcut: held-out accuracy far
    above chance on pattern-vs-noise data means the pattern is linearly
    separable, the property that makes it an effective training shortcut.
    """

    _trainer = staticmethod(train_linear_probe)

    def __init__(
        self,
        learning_rate=0.05,
        batch_size=64,
        max_epochs=100,
        patience=10,
        seed=0,
        augment=False,
        momentum=0.9,
    ):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.augment = augment
        self.momentum = momentum


class TinyCNNClassifier(_NetClassifier):
    """Fixed small CNN (conv16-pool-conv32-pool-dense), from-scratch SGD."""

    _trainer = staticmethod(train_cnn)

    def __init__(
        self,
        learning_rate=0.01,
        batch_size=64,
        max_epochs=40,
        patience=5,
        seed=0,
        augment=True,
        momentum=0.9,
    ):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.augment = augment
        self.momentum = momentum
