import numpy as np
import pytest

from shortcutforge import (
    ShapeMismatchError,
    ShortcutForgeError,
    LinearProbe,
    TinyCNNClassifier,
    TrainConfig,
    evaluate,
    generalization_gap,
    load_checkpoint,
    save_checkpoint,
    train_cnn,
    train_linear_probe,
)
from shortcutforge.probe import augment_batch, make_linear_probe, make_tiny_cnn


def toy_separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 0.3, size=(n, 8, 8, 1))
    y = np.arange(n) % 2
    X[y == 1] += 0.5
    return X, y


def test_config_validation():
    with pytest.raises(ShortcutForgeError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ShortcutForgeError):
        TrainConfig(batch_size=0)


def test_two_separable_points_fit_perfectly():
    X = np.zeros((2, 4, 4, 1))
    X[1] += 1.0
    y = np.array([0, 1])
    cfg = TrainConfig(learning_rate=0.1, batch_size=2, max_epochs=100, seed=0)
    net = train_linear_probe(X, y, cfg)
    assert evaluate(net, X, y).accuracy == 1.0
    assert len(net.history["train_loss"]) == 100  # n too small for a val split


def test_loss_decreases_over_training():
    X, y = toy_separable()
    cfg = TrainConfig(learning_rate=0.05, batch_size=8, max_epochs=100, patience=100, seed=1)
    net = train_linear_probe(X, y, cfg)
    hist = net.history["train_loss"]
    assert hist[-1] < hist[0]


def test_single_class_rejected():
    X = np.zeros((4, 4, 4, 1))
    y = np.zeros(4, dtype=int)
    with pytest.raises(ShortcutForgeError, match="class"):
        train_linear_probe(X, y)


def test_cnn_single_sample_capacity():
    X = np.random.default_rng(0).uniform(size=(1, 8, 8, 1))
    y = np.array([1])
    cfg = TrainConfig(learning_rate=0.05, batch_size=1, max_epochs=60, seed=0)
    net = make_tiny_cnn((8, 8, 1), 2, seed=0)
    from shortcutforge.probe import _train_network

    _train_network(net, X, y, cfg)
    assert evaluate(net, X, y).accuracy == 1.0


def test_training_bit_for_bit_deterministic():
    X, y = toy_separable(n=60, seed=4)
    cfg = TrainConfig(learning_rate=0.02, batch_size=16, max_epochs=4, seed=9, augment=True)
    n1 = train_cnn(X, y, cfg)
    n2 = train_cnn(X, y, cfg)
    for p1, p2 in zip(n1.parameters(), n2.parameters()):
        assert np.array_equal(p1.value, p2.value), p1.name


def test_training_seed_changes_result():
    X, y = toy_separable(n=60, seed=4)
    cfg_a = TrainConfig(max_epochs=2, seed=1)
    cfg_b = TrainConfig(max_epochs=2, seed=2)
    n1, n2 = train_cnn(X, y, cfg_a), train_cnn(X, y, cfg_b)
    assert any(
        not np.array_equal(p1.value, p2.value)
        for p1, p2 in zip(n1.parameters(), n2.parameters())
    )


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_uniform_model_tie_breaks_low_index():
    # zeroed linear model -> identical logits -> argmax picks class 0;
    # balanced 4-class set built with class 0 first scores exactly 0.25
    net = make_linear_probe((4, 4, 1), 4, seed=0)
    for p in net.parameters():
        p.value[...] = 0.0
    X = np.random.default_rng(0).uniform(size=(40, 4, 4, 1))
    y = np.repeat(np.arange(4), 10)
    res = evaluate(net, X, y)
    assert res.accuracy == 0.25
    assert np.all(res.confusion[:, 0] == 10)


def test_evaluate_perfect_predictions():
    X, y = toy_separable(n=20, seed=2)
    cfg = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=50, patience=50, seed=0)
    net = train_linear_probe(X, y, cfg)
    res = evaluate(net, X, y)
    assert res.accuracy == 1.0
    assert np.trace(res.confusion) == 20


def test_evaluate_confusion_rows_sum_to_class_counts(rng):
    X = rng.uniform(size=(30, 8, 8, 1))
    y = rng.integers(0, 3, size=30)
    net = make_tiny_cnn((8, 8, 1), 3, seed=1)
    res = evaluate(net, X, y)
    counts = np.bincount(y, minlength=3)
    assert np.array_equal(res.confusion.sum(axis=1), counts)
    assert res.confusion.sum() == res.n == 30


def test_evaluate_shape_mismatch(rng):
    net = make_tiny_cnn((8, 8, 1), 2, seed=0)
    with pytest.raises(ShapeMismatchError):
        evaluate(net, rng.uniform(size=(4, 6, 6, 1)), np.zeros(4, dtype=int))


# ---------------------------------------------------------------------------
# augmentation ordering


def test_shortcut_applied_before_augmentation_is_observable():
    # protect first, augment second: the perturbation of an augmented pair is
    # exactly the augmented field (flip shows up flipped)
    from shortcutforge import AttributeCodebook, ShortcutSpec, protect_image
    from shortcutforge.probe import shift_image

    book = AttributeCodebook(("c",), (4,), seed=3)
    spec = ShortcutSpec("sensor", epsilon=4.0 / 255.0, seed=3)
    clean = np.full((8, 32, 32, 3), 0.5)
    protected = np.stack(
        [protect_image(img, (1,), book, spec) for img in clean]
    )
    field = protected[0] - clean[0]

    rng_a = np.random.default_rng(77)
    rng_b = np.random.default_rng(77)
    aug_prot, flips, shifts = augment_batch(protected, rng_a)
    aug_clean, flips_b, _ = augment_batch(clean, rng_b)
    assert np.array_equal(flips, flips_b)
    assert flips.any() and (~flips).any()

    for i in range(len(clean)):
        expected = field[:, ::-1, :] if flips[i] else field
        expected = shift_image(expected, int(shifts[i, 0]), int(shifts[i, 1]))
        delta = aug_prot[i] - aug_clean[i]
        assert np.allclose(delta, expected, atol=1e-12)
        if flips[i]:
            assert not np.allclose(delta, shift_image(field, *map(int, shifts[i])))


# ---------------------------------------------------------------------------
# generalization gap


def test_gap_identity_protection_is_zero():
    # same data, same seed: both arms train identically, drop is exactly 0
    X, y = toy_separable(n=60, seed=5)
    Xt, yt = toy_separable(n=20, seed=6)
    cfg = TrainConfig(max_epochs=2, seed=0)
    report, base, sc = generalization_gap((X, y), (X.copy(), y), (Xt, yt), cfg)
    assert report.drop == 0.0
    assert report.baseline_clean_test_acc == report.shortcut_clean_test_acc


def test_gap_report_contents():
    X, y = toy_separable(n=40, seed=5)
    cfg = TrainConfig(max_epochs=1, seed=12)
    report, _, _ = generalization_gap((X, y), (X, y), (X, y), cfg, protected_test=(X, y))
    d = report.to_json_dict()
    assert d["seed"] == 12
    assert "baseline_clean_test_acc" in d and "shortcut_clean_test_acc" in d
    assert d["config"]["seed"] == 12
    assert d["shortcut_shortcut_test_acc"] is not None


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_exact(tmp_path):
    X, y = toy_separable(n=30, seed=8)
    net = train_cnn(X, y, TrainConfig(max_epochs=2, seed=3))
    path = tmp_path / "model.npz"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.arch == net.arch
    assert back.input_shape == net.input_shape
    for p1, p2 in zip(net.parameters(), back.parameters()):
        assert np.array_equal(p1.value, p2.value)
    assert np.array_equal(net.predict(X), back.predict(X))


def test_checkpoint_linear_round_trip(tmp_path):
    X, y = toy_separable(n=20, seed=8)
    net = train_linear_probe(X, y, TrainConfig(max_epochs=2, seed=3))
    save_checkpoint(net, tmp_path / "probe.npz")
    back = load_checkpoint(tmp_path / "probe.npz")
    assert np.array_equal(net.predict(X), back.predict(X))


def test_checkpoint_unknown_arch_rejected(tmp_path):
    path = tmp_path / "weird.npz"
    np.savez(
        path,
        format_version=np.array(1),
        arch=np.array("resnet152"),
        input_shape=np.array((8, 8, 1)),
        n_classes=np.array(2),
    )
    with pytest.raises(ShortcutForgeError, match="architecture"):
        load_checkpoint(path)


# ---------------------------------------------------------------------------
# estimator veneers


def test_linear_probe_estimator(rng):
    from sklearn.base import clone

    X, y = toy_separable(n=40, seed=3)
    y = y + 5  # non-contiguous labels must round-trip through classes_
    probe = LinearProbe(max_epochs=60, seed=0)
    probe.fit(X, y)
    assert set(np.unique(probe.predict(X))) <= {5, 6}
    assert probe.score(X, y) == 1.0
    proba = probe.predict_proba(X)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-6)
    clone(probe)  # sklearn param contract


def test_cnn_estimator(rng):
    X, y = toy_separable(n=30, seed=13)
    clf = TinyCNNClassifier(max_epochs=3, seed=0, augment=False)
    assert clf.fit(X, y) is clf
    assert clf.predict(X).shape == (30,)
    assert "train_loss" in clf.history_


def test_estimator_not_fitted_error():
    with pytest.raises(ShortcutForgeError, match="not fitted"):
        TinyCNNClassifier().predict(np.zeros((1, 8, 8, 1)))
