"""Minimal from-scratch feed-forward network in float64 numpy.

Forward and backward passes are hand-written (im2col convolution, 2x2 max
pooling, dense layers, softmax cross-entropy) so that analytic gradients can
be certified against finite differences and training is bit-reproducible
given (dataset order, seed). No autograd framework is involved.
"""

from __future__ import annotations

import numpy as np

from .errors import ShortcutForgeError


class Param:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


class Layer:
    params: list = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    """3x3 (or kxk) same-padding convolution, stride 1, NHWC layout."""

    def __init__(self, in_ch: int, out_ch: int, ksize: int, rng: np.random.Generator, name: str):
        self.ksize = ksize
        self.in_ch = in_ch
        self.out_ch = out_ch
        scale = np.sqrt(2.0 / (ksize * ksize * in_ch))
        w = rng.normal(0.0, scale, size=(ksize, ksize, in_ch, out_ch))
        self.W = Param(f"{name}_W", w)
        self.b = Param(f"{name}_b", np.zeros(out_ch))
        self.params = [self.W, self.b]
        self._cols = None
        self._x_shape = None

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        k = self.ksize
        p = k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        s = xp.strides
        view = np.lib.stride_tricks.as_strided(
            xp,
            shape=(n, h, w, k, k, c),
            strides=(s[0], s[1], s[2], s[1], s[2], s[3]),
            writeable=False,
        )
        return view.reshape(n * h * w, k * k * c)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[3] != self.in_ch:
            raise ShortcutForgeError(
                f"conv expects {self.in_ch} input channels, got {x.shape[3]}"
            )
        self._x_shape = x.shape
        self._cols = self._im2col(x)
        wmat = self.W.value.reshape(-1, self.out_ch)
        y = self._cols @ wmat + self.b.value
        n, h, w, _ = x.shape
        return y.reshape(n, h, w, self.out_ch)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        n, h, w, c = self._x_shape
        k = self.ksize
        p = k // 2
        gm = grad_out.reshape(-1, self.out_ch)
        self.W.grad += (self._cols.T @ gm).reshape(self.W.value.shape)
        self.b.grad += gm.sum(axis=0)
        dcols = (gm @ self.W.value.reshape(-1, self.out_ch).T).reshape(n, h, w, k, k, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c))
        for ki in range(k):
            for kj in range(k):
                dxp[:, ki : ki + h, kj : kj + w, :] += dcols[:, :, :, ki, kj, :]
        return dxp[:, p : p + h, p : p + w, :]


class ReLU(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, 0.0)


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        self._x_shape = x.shape
        xr = x[:, : 2 * h2, : 2 * w2, :].reshape(n, h2, 2, w2, 2, c)
        self._xr = xr
        y = xr.max(axis=(2, 4))
        self._y = y
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        n, h, w, c = self._x_shape
        h2, w2 = h // 2, w // 2
        mask = self._xr == self._y[:, :, None, :, None, :]
        dxr = mask * grad_out[:, :, None, :, None, :]
        dx = np.zeros((n, h, w, c))
        dx[:, : 2 * h2, : 2 * w2, :] = dxr.reshape(n, 2 * h2, 2 * w2, c)
        return dx


class Flatten(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        scale = np.sqrt(1.0 / in_dim)
        self.W = Param(f"{name}_W", rng.normal(0.0, scale, size=(in_dim, out_dim)))
        self.b = Param(f"{name}_b", np.zeros(out_dim))
        self.params = [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.W.grad += self._x.T @ grad_out
        self.b.grad += grad_out.sum(axis=0)
        return grad_out @ self.W.value.T


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy loss and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    p = softmax(logits)
    picked = np.clip(p[np.arange(n), y], 1e-300, None)
    loss = float(-np.mean(np.log(picked)))
    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1.0
    return loss, dlogits / n


class Network:
    """A plain layer stack with cached activations for training and XAI."""

    def __init__(self, layers, arch: str, input_shape, n_classes: int):
        self.layers = list(layers)
        self.arch = arch
        self.input_shape = tuple(input_shape)
        self.n_classes = int(n_classes)
        self.history = {}

    # -- inference ---------------------------------------------------------

    def forward(self, x: np.ndarray, capture: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        outputs = [] if capture else None
        for layer in self.layers:
            x = layer.forward(x)
            if capture:
                outputs.append(x)
        if capture:
            self._outputs = outputs
        return x

    def backward(self, dlogits: np.ndarray, capture: bool = False) -> np.ndarray:
        """Backprop from the logits; returns the gradient w.r.t. the input.

        With capture=True, also records the gradient arriving at each layer's
        output (same indexing as the forward capture), which Grad-CAM uses.
        """
        g = dlogits
        grads = [None] * len(self.layers) if capture else None
        for i in range(len(self.layers) - 1, -1, -1):
            if capture:
                grads[i] = g
            g = self.layers[i].backward(g)
        if capture:
            self._output_grads = grads
        return g

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=-1)

    # -- training ----------------------------------------------------------

    def parameters(self) -> list:
        return [p for layer in self.layers for p in getattr(layer, "params", [])]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        loss, _ = cross_entropy(self.forward(x), y)
        return loss

    def loss_and_backward(self, x: np.ndarray, y: np.ndarray) -> float:
        self.zero_grads()
        loss, dlogits = cross_entropy(self.forward(x), y)
        self.backward(dlogits)
        return loss

    # -- parameter snapshots -------------------------------------------------

    def get_param_values(self) -> list:
        return [p.value.copy() for p in self.parameters()]

    def set_param_values(self, values) -> None:
        for p, v in zip(self.parameters(), values):
            if p.value.shape != v.shape:
                raise ShortcutForgeError(
                    f"parameter {p.name}: shape {v.shape} != expected {p.value.shape}"
                )
            p.value[...] = v

    def last_conv_index(self):
        idx = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2d):
                idx = i
        return idx


class SGDMomentum:
    """Plain SGD with classical momentum."""

    def __init__(self, params, learning_rate: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = learning_rate
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            v *= self.momentum
            v -= self.lr * p.grad
            p.value += v
