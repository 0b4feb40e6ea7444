import numpy as np
import pytest

from diffcast.errors import ShapeError, TrainingError
from diffcast.nn import Adam


def test_zero_gradient_is_a_fixed_point():
    w = np.array([1.0, -2.0, 3.0])
    optim = Adam({"w": w})
    for _ in range(5):
        optim.step({"w": np.zeros(3)})
    np.testing.assert_array_equal(w, [1.0, -2.0, 3.0])


def test_first_step_magnitude_is_learning_rate():
    # with constant gradient g, the first update is lr * g / (|g| + eps') ~ lr * sign(g)
    w = np.array([0.0])
    optim = Adam({"w": w}, learning_rate=1e-3)
    optim.step({"w": np.array([0.5])})
    assert abs(w[0] + 1e-3) < 1e-9
    w2 = np.array([0.0])
    optim2 = Adam({"w": w2}, learning_rate=1e-3)
    optim2.step({"w": np.array([-7.0])})
    assert abs(w2[0] - 1e-3) < 1e-9


def test_constant_gradient_moves_monotonically():
    w = np.array([0.0])
    optim = Adam({"w": w})
    g = np.array([2.5])
    prev = 0.0
    for _ in range(3):
        optim.step({"w": g})
        assert w[0] < prev
        prev = w[0]


def test_step_count_increments_by_one():
    optim = Adam({"w": np.zeros(2)})
    for expected in (1, 2, 3):
        optim.step({"w": np.ones(2)})
        assert optim.step_count == expected


def test_non_finite_gradient_names_the_group():
    optim = Adam({"hidden.weight": np.zeros(2)})
    with pytest.raises(TrainingError, match="hidden.weight"):
        optim.step({"hidden.weight": np.array([1.0, np.nan])})


def test_shape_mismatch_rejected():
    optim = Adam({"w": np.zeros(2)})
    with pytest.raises(ShapeError):
        optim.step({"w": np.zeros(3)})


def test_state_arrays_round_trip():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(4)
    optim = Adam({"w": w})
    optim.step({"w": rng.standard_normal(4)})
    saved = {k: v.copy() for k, v in optim.state_arrays().items()}
    optim.step({"w": rng.standard_normal(4)})
    optim.load_state_arrays(saved)
    assert optim.step_count == 1
    np.testing.assert_array_equal(optim.m["w"], saved["optim.m.w"])
    np.testing.assert_array_equal(optim.v["w"], saved["optim.v.w"])
