"""Gradient-based explanation maps and the clean-vs-shortcut difference score.

All methods need only the network's differentiability; gradients come from the
same hand-written backward passes the finite-difference harness certifies.
Explanation maps are channel-reduced to one plane by summing absolute
per-channel attributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, ShortcutForgeError
from .nn import Network, cross_entropy
from .validation import check_batch

METHOD_ALIASES = {
    "saliency": "saliency",
    "sm": "saliency",
    "smoothgrad": "smoothgrad",
    "smooth_grad": "smoothgrad",
    "sg": "smoothgrad",
    "integrated_gradients": "integrated_gradients",
    "ig": "integrated_gradients",
    "gradcam": "gradcam",
    "grad_cam": "gradcam",
    "gc": "gradcam",
}


@dataclass
class ExplanationMap:
    values: np.ndarray  # (H, W)
    method: str
    raw: np.ndarray | None = None  # signed per-channel attributions, if kept

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ShortcutForgeError("explanation map contains non-finite values")


def _check_xy(net: Network, X, y):
    X, y = check_batch(X, y)
    if X.shape[1:] != net.input_shape:
        raise ShapeMismatchError(
            f"input shape {X.shape[1:]} does not match model {net.input_shape}"
        )
    if y.min() < 0 or y.max() >= net.n_classes:
        raise ShortcutForgeError(
            f"class index out of range [0, {net.n_classes})"
        )
    return X, y


def _loss_input_grads(net: Network, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d loss / d input, per sample (batch gradient is per-sample separable)."""
    logits = net.forward(X)
    _, dlogits = cross_entropy(logits, y)
    # cross_entropy averages over the batch; undo so each sample stands alone
    return net.backward(dlogits * len(X))


def _score_input_grads(net: Network, X: np.ndarray, y: np.ndarray):
    """d logit_y / d input per sample; also returns the logits."""
    logits = net.forward(X)
    onehot = np.zeros_like(logits)
    onehot[np.arange(len(X)), y] = 1.0
    return net.backward(onehot), logits


def saliency_batch(net: Network, X, y) -> np.ndarray:
    X, y = _check_xy(net, X, y)
    grads = _loss_input_grads(net, X, y)
    return np.abs(grads).sum(axis=3)


def saliency(net: Network, x, y: int) -> ExplanationMap:
    """|d loss / d pixel|, channels summed."""
    maps = saliency_batch(net, np.asarray(x)[None], [int(y)])
    return ExplanationMap(values=maps[0], method="saliency")


def smooth_grad_batch(net, X, y, n_samples: int = 32, sigma: float = 0.1, seed: int = 0):
    X, y = _check_xy(net, X, y)
    if n_samples < 1:
        raise ShortcutForgeError("n_samples must be >= 1")
    if sigma < 0:
        raise ShortcutForgeError("sigma must be >= 0")
    if sigma == 0.0:
        # degenerate noise: exactly the plain saliency map
        return saliency_batch(net, X, y)
    rng = np.random.default_rng(seed)
    acc = np.zeros(X.shape[:3])
    for _ in range(n_samples):
        noisy = X + rng.normal(0.0, sigma, size=X.shape)
        acc += np.abs(_loss_input_grads(net, noisy, y)).sum(axis=3)
    return acc / n_samples


def smooth_grad(net, x, y, n_samples: int = 32, sigma: float = 0.1, seed: int = 0) -> ExplanationMap:
    """Mean saliency over n_samples Gaussian-noised copies of x."""
    maps = smooth_grad_batch(net, np.asarray(x)[None], [int(y)], n_samples, sigma, seed)
    return ExplanationMap(values=maps[0], method="smoothgrad")


def integrated_gradients_batch(net, X, y, baseline=None, steps: int = 64):
    """Signed per-channel IG attributions (N, H, W, C), midpoint rule."""
    X, y = _check_xy(net, X, y)
    if steps < 1:
        raise ShortcutForgeError("steps must be >= 1")
    if baseline is None:
        baseline = np.zeros_like(X)
    else:
        baseline = np.asarray(baseline, dtype=np.float64)
        if baseline.ndim == 3:
            baseline = np.broadcast_to(baseline[None], X.shape).copy()
        if baseline.shape != X.shape:
            raise ShortcutForgeError(
                f"baseline shape {baseline.shape} does not match input {X.shape}"
            )
    diff = X - baseline
    acc = np.zeros_like(X)
    for k in range(steps):
        alpha = (k + 0.5) / steps
        grads, _ = _score_input_grads(net, baseline + alpha * diff, y)
        acc += grads
    return diff * (acc / steps)


def integrated_gradients(net, x, y, baseline=None, steps: int = 64) -> ExplanationMap:
    """(x - baseline) * path-averaged score gradient; baseline defaults to zeros."""
    raw = integrated_gradients_batch(
        net,
        np.asarray(x)[None],
        [int(y)],
        None if baseline is None else np.asarray(baseline)[None],
        steps,
    )[0]
    return ExplanationMap(values=np.abs(raw).sum(axis=2), method="integrated_gradients", raw=raw)


def ig_completeness_gap(net, x, y, baseline=None, steps: int = 256) -> float:
    """Relative completeness error: |sum(IG) - (s(x) - s(baseline))| / |ds|."""
    x = np.asarray(x, dtype=np.float64)
    if baseline is None:
        baseline = np.zeros_like(x)
    raw = integrated_gradients_batch(net, x[None], [int(y)], baseline[None], steps)[0]
    s_x = net.forward(x[None])[0, int(y)]
    s_b = net.forward(np.asarray(baseline)[None])[0, int(y)]
    ds = s_x - s_b
    return abs(raw.sum() - ds) / max(abs(ds), 1e-12)


def bilinear_resize(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Upsample a 2-D map with half-pixel-centered bilinear interpolation."""
    in_h, in_w = m.shape
    if (in_h, in_w) == (out_h, out_w):
        return m.copy()
    sy = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0.0, in_h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (sy - y0)[:, None]
    wx = (sx - x0)[None, :]
    return (
        m[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + m[np.ix_(y0, x1)] * (1 - wy) * wx
        + m[np.ix_(y1, x0)] * wy * (1 - wx)
        + m[np.ix_(y1, x1)] * wy * wx
    )


def grad_cam_batch(net: Network, X, y) -> np.ndarray:
    X, y = _check_xy(net, X, y)
    conv_idx = net.last_conv_index()
    if conv_idx is None:
        raise ShortcutForgeError("grad_cam needs a model with >= 1 conv layer")
    logits = net.forward(X, capture=True)
    onehot = np.zeros_like(logits)
    onehot[np.arange(len(X)), y] = 1.0
    net.backward(onehot, capture=True)
    acts = net._outputs[conv_idx]  # (N, Hc, Wc, K)
    grads = net._output_grads[conv_idx]
    alpha = grads.mean(axis=(1, 2))  # (N, K) spatial mean of d score / d A_k
    cam = np.maximum((acts * alpha[:, None, None, :]).sum(axis=3), 0.0)
    out = np.empty((len(X), X.shape[1], X.shape[2]))
    for i in range(len(X)):
        out[i] = bilinear_resize(cam[i], X.shape[1], X.shape[2])
    return out


def grad_cam(net: Network, x, y) -> ExplanationMap:
    """ReLU of the alpha-weighted last-conv feature maps, upsampled to input size."""
    maps = grad_cam_batch(net, np.asarray(x)[None], [int(y)])
    return ExplanationMap(values=maps[0], method="gradcam")


def explain_batch(net: Network, X, y, method: str, **params) -> np.ndarray:
    """(N, H, W) channel-reduced maps for any supported method tag."""
    tag = METHOD_ALIASES.get(method.lower())
    if tag is None:
        raise ShortcutForgeError(f"unknown XAI method {method!r}")
    if tag == "saliency":
        return saliency_batch(net, X, y)
    if tag == "smoothgrad":
        return smooth_grad_batch(
            net,
            X,
            y,
            n_samples=params.get("n_samples", 32),
            sigma=params.get("sigma", 0.1),
            seed=params.get("seed", 0),
        )
    if tag == "integrated_gradients":
        raw = integrated_gradients_batch(
            net, X, y, params.get("baseline"), steps=params.get("steps", 64)
        )
        return np.abs(raw).sum(axis=3)
    return grad_cam_batch(net, X, y)


def xai_difference(net_a: Network, net_b: Network, X, y, method: str = "saliency", **params) -> float:
    """Normalized L2 distance between two models' explanation maps.

    sqrt of the total squared per-pixel map difference over all instances,
    divided by the instance count: (1/N) * sqrt(sum_i sum_px (za_i - zb_i)^2).
    Symmetric, zero for identical parameters.
    """
    X, y = check_batch(X, y)
    if len(X) == 0:
        raise ShortcutForgeError("xai_difference needs a non-empty dataset")
    maps_a = explain_batch(net_a, X, y, method, **params)
    maps_b = explain_batch(net_b, X, y, method, **params)
    total = float(np.sum((maps_a - maps_b) ** 2))
    return float(np.sqrt(total) / len(X))


def save_heatmap(emap: ExplanationMap, path) -> None:
    """Min-max normalize to [0, 1] and write a grayscale PNG/PGM heatmap."""
    from .dataset_io import save_image, to_uint8

    v = emap.values
    span = v.max() - v.min()
    norm = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    save_image(path, to_uint8(norm[:, :, None]))
