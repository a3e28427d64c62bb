import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, forward_loop, relative_error, relu_kink_safe
from subgreedy.nn import (MlpParams, Schedule, TrainConfig, TrainingDivergedError, cross_entropy, forward,
                          init_params, loss_and_grad, sgd_train, train_member, zero_params)


def _batch(seed, n=16, d=3, c=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.integers(0, c, n)


def test_zero_params_uniform():
    probs = forward(zero_params(3, 5, 8), np.random.default_rng(0).normal(size=(7, 3)))
    assert np.all(probs == 0.2)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(2, 6))
def test_probabilities_normalized(seed, c):
    x, _ = _batch(seed, c=c)
    probs = forward(init_params(3, c, 16, seed), x * 10)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(probs >= 0)


def test_forward_matches_loop():
    x, _ = _batch(1)
    params = init_params(3, 4, 32, seed=2)
    np.testing.assert_allclose(forward(params, x), forward_loop(params, x), rtol=0, atol=1e-12)


def test_uniform_predictor_cross_entropy():
    x, y = _batch(0, c=2)
    loss, _ = loss_and_grad(zero_params(3, 2, 8), x, y, 0.0)
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    assert cross_entropy(np.full((4, 2), 0.5), [0, 1, 1, 0]) == pytest.approx(math.log(2))


def test_weight_decay_gradient_zero_at_origin():
    x, y = _batch(0)
    _, plain = loss_and_grad(zero_params(3, 4, 8), x, y, 0.0)
    _, decayed = loss_and_grad(zero_params(3, 4, 8), x, y, 0.3)
    np.testing.assert_array_equal(plain.flat(), decayed.flat())


def test_gradient_finite_differences():
    x, y = _batch(3)
    params = init_params(3, 4, 48, seed=4)
    dims = params.dims
    theta = params.flat()
    _, grad = loss_and_grad(params, x, y, 1e-3)
    rng = np.random.default_rng(5)
    coords = rng.choice(theta.size, 200, replace=False)
    coords = coords[relu_kink_safe(params, x, coords, 1e-5)][:100]
    assert len(coords) == 100
    numeric = central_difference(lambda t: loss_and_grad(MlpParams.from_flat(t, dims), x, y, 1e-3)[0], theta, coords)
    assert relative_error(grad.flat()[coords], numeric).max() <= 1e-5


def test_labels_validated():
    x, _ = _batch(0)
    with pytest.raises(ValueError):
        loss_and_grad(zero_params(3, 2, 4), x, np.full(len(x), 2))


def _separable(n=100, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    x[:, 0] += np.where(np.arange(n) % 2 == 0, 2.0, -2.0)
    return x, (np.arange(n) % 2).astype(np.int64)


def test_separable_reaches_full_accuracy():
    x, y = _separable()
    res = train_member(x, y, TrainConfig(epochs=200, hidden=16), seed=0)
    assert np.mean(np.argmax(forward(res.params, x), axis=1) == y) == 1.0


def test_zero_learning_rate_leaves_params():
    x, y = _separable(40)
    params = init_params(2, 2, 8, seed=1)
    res = sgd_train(params, x, y, TrainConfig(learning_rate=0.0, epochs=3))
    for a, b in zip(params.arrays(), res.params.arrays()):
        assert a.tobytes() == b.tobytes()


def test_same_seed_same_trajectory():
    x, y = _separable(40)
    cfg = TrainConfig(epochs=5, hidden=8)
    a, b = train_member(x, y, cfg, seed=11), train_member(x, y, cfg, seed=11)
    assert a.losses == b.losses
    assert a.params.flat().tobytes() == b.params.flat().tobytes()
    assert train_member(x, y, cfg, seed=12).losses != a.losses


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    x, y = _separable(40)
    with pytest.raises(TrainingDivergedError):
        train_member(x * 1e3, y, TrainConfig(learning_rate=1e6, epochs=20, hidden=8), seed=0)


def test_validation_picks_best_epoch():
    x, y = _separable(60)
    res = train_member(x, y, TrainConfig(epochs=10, hidden=8, val_fraction=0.2), seed=0)
    assert 0 <= res.best_epoch < 10


def test_schedule_shape():
    s = Schedule("warmup_linear", warmup_frac=0.1, anneal_start_frac=0.5, anneal_end_frac=0.9, final_scale=0.01)
    assert s.scale(0.0) == pytest.approx(0.1)
    assert s.scale(0.3) == 1.0
    assert s.scale(0.7) == pytest.approx(0.505)
    assert s.scale(0.95) == 0.01
    assert Schedule().scale(0.5) == 1.0


def test_save_load_roundtrip(tmp_path):
    params = init_params(3, 2, 7, seed=9)
    params.save(tmp_path / "m.bin")
    back = MlpParams.load(tmp_path / "m.bin")
    assert back.flat().tobytes() == params.flat().tobytes()
    assert back.dims == (3, 7, 2)


def test_shape_validation():
    with pytest.raises(ValueError):
        MlpParams(np.zeros((4, 3)), np.zeros(5), np.zeros((2, 4)), np.zeros(2))
