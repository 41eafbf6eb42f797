import numpy as np
import pytest

from shortcutforge.nn import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2,
    Network,
    ReLU,
    SGDMomentum,
    cross_entropy,
    softmax,
)

H_FD = 1e-5  # central-difference step, float64
REL_TOL = 1e-4  # per-layer relative error bound


def tiny_net(seed=3):
    rng = np.random.default_rng(seed)
    layers = [
        Conv2d(1, 3, 3, rng, "conv1"),
        ReLU(),
        MaxPool2(),
        Conv2d(3, 4, 3, rng, "conv2"),
        ReLU(),
        MaxPool2(),
        Flatten(),
        Dense(2 * 2 * 4, 3, rng, "fc"),
    ]
    return Network(layers, "test_net", (8, 8, 1), 3)


def numerical_grad(loss_fn, arr):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + H_FD
        lp = loss_fn()
        arr[idx] = orig - H_FD
        lm = loss_fn()
        arr[idx] = orig
        g[idx] = (lp - lm) / (2 * H_FD)
    return g


def layer_rel_error(analytic, numeric):
    scale = max(np.max(np.abs(numeric)), 1e-8)
    return np.max(np.abs(analytic - numeric)) / scale


def test_analytic_gradients_match_finite_differences_per_layer():
    net = tiny_net()
    rng = np.random.default_rng(11)
    X = rng.uniform(0.1, 0.9, size=(4, 8, 8, 1))
    y = np.array([0, 1, 2, 1])
    net.loss_and_backward(X, y)
    analytic = {p.name: p.grad.copy() for p in net.parameters()}
    for p in net.parameters():
        numeric = numerical_grad(lambda: net.loss(X, y), p.value)
        err = layer_rel_error(analytic[p.name], numeric)
        assert err < REL_TOL, f"{p.name}: rel err {err:.2e}"


def test_input_gradient_matches_finite_differences():
    net = tiny_net()
    rng = np.random.default_rng(12)
    X = rng.uniform(0.1, 0.9, size=(2, 8, 8, 1))
    y = np.array([2, 0])
    net.zero_grads()
    loss, dlogits = cross_entropy(net.forward(X), y)
    analytic = net.backward(dlogits)
    numeric = numerical_grad(lambda: net.loss(X, y), X)
    assert layer_rel_error(analytic, numeric) < REL_TOL


def test_softmax_normalized():
    rng = np.random.default_rng(5)
    logits = rng.normal(0, 50, size=(64, 7))  # large logits: stability matters
    p = softmax(logits)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_cross_entropy_uniform_logits():
    logits = np.zeros((4, 5))
    y = np.array([0, 1, 2, 3])
    loss, dlogits = cross_entropy(logits, y)
    assert loss == pytest.approx(np.log(5.0), abs=1e-12)
    expect = np.full((4, 5), 0.2)
    expect[np.arange(4), y] -= 1.0
    assert np.allclose(dlogits, expect / 4.0, atol=1e-12)


def test_conv_identity_kernel():
    rng = np.random.default_rng(0)
    conv = Conv2d(1, 1, 3, rng, "c")
    conv.W.value[...] = 0.0
    conv.W.value[1, 1, 0, 0] = 1.0  # delta kernel: same-pad conv == identity
    conv.b.value[...] = 0.0
    x = rng.uniform(size=(2, 5, 5, 1))
    assert np.allclose(conv.forward(x), x, atol=1e-15)


def test_conv_shift_kernel_uses_padding():
    rng = np.random.default_rng(0)
    conv = Conv2d(1, 1, 3, rng, "c")
    conv.W.value[...] = 0.0
    conv.W.value[0, 1, 0, 0] = 1.0  # pulls the pixel above: top row sees zero pad
    conv.b.value[...] = 0.0
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    out = conv.forward(x)
    assert np.all(out[0, 0, :, 0] == 0.0)
    assert np.allclose(out[0, 1:, :, 0], x[0, :-1, :, 0])


def test_maxpool_forward_and_routing():
    pool = MaxPool2()
    x = np.array(
        [[1.0, 2.0, 5.0, 0.0], [3.0, 0.0, 1.0, 1.0], [0.0, 0.0, 2.0, 9.0], [1.0, 1.0, 1.0, 1.0]]
    ).reshape(1, 4, 4, 1)
    y = pool.forward(x)
    assert y.reshape(2, 2).tolist() == [[3.0, 5.0], [1.0, 9.0]]
    g = pool.backward(np.ones_like(y))
    # gradient lands on each window's max entry
    assert g[0, 1, 0, 0] == 1.0 and g[0, 0, 2, 0] == 1.0 and g[0, 2, 3, 0] == 1.0
    assert g[0, 0, 0, 0] == 0.0


def test_maxpool_odd_dims_dropped():
    pool = MaxPool2()
    x = np.arange(25, dtype=np.float64).reshape(1, 5, 5, 1)
    y = pool.forward(x)
    assert y.shape == (1, 2, 2, 1)
    g = pool.backward(np.ones_like(y))
    assert g.shape == x.shape
    assert np.all(g[0, 4, :, 0] == 0.0) and np.all(g[0, :, 4, 0] == 0.0)


def test_sgd_momentum_step():
    p = type("P", (), {})()
    rngv = np.array([1.0, 2.0])
    param = Dense(2, 1, np.random.default_rng(0), "d").W
    param.value[...] = np.array([[1.0], [2.0]])
    param.grad[...] = np.array([[0.5], [0.5]])
    opt = SGDMomentum([param], learning_rate=0.1, momentum=0.9)
    opt.step()
    assert np.allclose(param.value, [[0.95], [1.95]])
    opt.step()  # velocity carries over: v = 0.9*(-0.05) - 0.1*0.5 = -0.095
    assert np.allclose(param.value, [[0.855], [1.855]])


def test_network_capture_indices():
    net = tiny_net()
    X = np.random.default_rng(1).uniform(size=(1, 8, 8, 1))
    logits = net.forward(X, capture=True)
    assert len(net._outputs) == len(net.layers)
    assert net._outputs[-1] is logits or np.array_equal(net._outputs[-1], logits)
    onehot = np.zeros_like(logits)
    onehot[0, 0] = 1.0
    net.backward(onehot, capture=True)
    assert len(net._output_grads) == len(net.layers)
    assert net.last_conv_index() == 3
