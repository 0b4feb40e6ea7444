import numpy as np

from diffcast import gradchecks
from diffcast.nn import Dense, finite_diff_check


def test_linear_op_checks_at_machine_precision():
    # central differences are exact for a linear map, up to float64 roundoff
    rng = np.random.default_rng(0)
    layer = Dense(6, 3, rng=rng)
    x = rng.standard_normal((2, 6))
    cot = rng.standard_normal((2, 3))

    def loss_and_grads():
        layer.zero_grad()
        out = layer.forward(x)
        layer.backward(cot)
        return float(np.sum(out * cot)), dict(layer.grads())

    err = finite_diff_check(loss_and_grads, dict(layer.params()), 20, rng=rng)
    assert err < 1e-9


def test_conv_block_with_all_activations_passes():
    assert gradchecks.check_conv_block(seed=3) < 1e-4


def test_corrupted_backward_is_flagged():
    rng = np.random.default_rng(1)
    layer = Dense(5, 4, rng=rng)
    x = rng.standard_normal((3, 5))
    cot = rng.standard_normal((3, 4))

    def loss_and_grads():
        layer.zero_grad()
        out = layer.forward(x)
        layer.backward(cot)
        grads = {k: 2.0 * v for k, v in layer.grads().items()}  # deliberately doubled
        return float(np.sum(out * cot)), grads

    err = finite_diff_check(loss_and_grads, dict(layer.params()), 20, rng=rng)
    assert err > 0.3


def test_full_suite_under_tolerance():
    results = gradchecks.run_suite(seed=0)
    assert set(results) == set(gradchecks.SUITE)
    for name, err in results.items():
        assert err < 1e-4, f"{name} failed gradient check: {err:.3e}"


def test_suite_deterministic_under_seed():
    a = gradchecks.run_suite(seed=7)
    b = gradchecks.run_suite(seed=7)
    assert a == b
