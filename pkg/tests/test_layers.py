import numpy as np
import pytest

from diffcast.errors import ConfigError, ShapeError
from diffcast.nn import (
    BatchNorm1d,
    Conv1d,
    ConvBlock,
    Dense,
    Dropout,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout,
    leaky_relu,
    silu,
)


class TestConv1dForward:
    def test_identity_kernel(self):
        x = np.array([[1.0, 2.0, 3.0]])
        kernel = np.array([[[0.0, 1.0, 0.0]]])
        np.testing.assert_array_equal(conv1d_forward(x, kernel), [[1.0, 2.0, 3.0]])

    def test_box_kernel_with_zero_padding(self):
        x = np.array([[1.0, 2.0, 3.0]])
        kernel = np.array([[[1.0, 1.0, 1.0]]])
        # padded input [0,1,2,3,0] summed over width-3 windows
        np.testing.assert_allclose(conv1d_forward(x, kernel), [[3.0, 6.0, 5.0]])

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(0)
        kernel = rng.standard_normal((4, 3, 3))
        bias = rng.standard_normal(4)
        out = conv1d_forward(np.zeros((3, 11)), kernel, bias)
        np.testing.assert_allclose(out, np.broadcast_to(bias[:, None], (4, 11)))

    @pytest.mark.parametrize("t", [1, 2, 3, 5, 8])
    def test_same_padding_preserves_length(self, t):
        rng = np.random.default_rng(t)
        out = conv1d_forward(rng.standard_normal((2, 2, t)), rng.standard_normal((5, 2, 3)))
        assert out.shape == (2, 5, t)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            conv1d_forward(np.zeros((3, 5)), np.zeros((2, 4, 3)))

    def test_even_width_rejected(self):
        with pytest.raises(ConfigError):
            conv1d_forward(np.zeros((2, 5)), np.zeros((2, 2, 2)))


class TestConv1dBackward:
    def test_zero_cotangent(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 6))
        kernel = rng.standard_normal((4, 3, 3))
        gx, gk, gb = conv1d_backward(x, kernel, np.zeros((2, 4, 6)))
        assert not gx.any() and not gk.any() and not gb.any()

    def test_identity_kernel_passes_grad_through(self):
        g = np.random.default_rng(2).standard_normal((1, 7))
        gx, _, _ = conv1d_backward(np.zeros((1, 7)), np.array([[[0.0, 1.0, 0.0]]]), g)
        np.testing.assert_array_equal(gx, g)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 2, 3))
        kernel = rng.standard_normal((2, 2, 3))
        cot = rng.standard_normal((2, 2, 3))
        gx, gk, gb = conv1d_backward(x, kernel, cot)
        step = 1e-5

        def loss(xv, kv):
            return np.sum(conv1d_forward(xv, kv) * cot)

        for arr, grad in ((x, gx), (kernel, gk)):
            flat, gflat = arr.reshape(-1), grad.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + step
                up = loss(x, kernel)
                flat[idx] = orig - step
                down = loss(x, kernel)
                flat[idx] = orig
                cd = (up - down) / (2 * step)
                assert abs(gflat[idx] - cd) / max(abs(cd), abs(gflat[idx]), 1e-8) < 1e-5

    def test_grad_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            conv1d_backward(np.zeros((1, 2, 5)), np.zeros((3, 2, 3)), np.zeros((1, 3, 4)))


class TestBatchNorm:
    def test_train_mode_standardizes(self):
        rng = np.random.default_rng(4)
        bn = BatchNorm1d(3)
        out = bn.forward(rng.standard_normal((8, 3, 10)) * 5 + 2, train=True)
        np.testing.assert_allclose(out.mean(axis=(0, 2)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=(0, 2)), 1.0, atol=1e-4)

    def test_affine_on_standardized_input(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((16, 2, 25))
        x = (x - x.mean(axis=(0, 2), keepdims=True)) / x.std(axis=(0, 2), keepdims=True)
        bn = BatchNorm1d(2)
        bn.gain[:] = 2.0
        bn.bias[:] = 3.0
        np.testing.assert_allclose(bn.forward(x, train=True), 2.0 * x + 3.0, atol=1e-4)

    def test_constant_channel_outputs_bias(self):
        bn = BatchNorm1d(2)
        bn.bias[:] = [4.0, -1.0]
        out = bn.forward(np.full((3, 2, 5), 7.0), train=True)
        np.testing.assert_allclose(out[:, 0], 4.0)
        np.testing.assert_allclose(out[:, 1], -1.0)

    def test_eval_before_train_uses_initial_stats(self):
        x = np.random.default_rng(6).standard_normal((2, 3, 4))
        out = BatchNorm1d(3).forward(x, train=False)
        np.testing.assert_allclose(out, x / np.sqrt(1.0 + 1e-5), atol=1e-12)

    def test_eval_mode_is_deterministic(self):
        rng = np.random.default_rng(7)
        bn = BatchNorm1d(2)
        bn.forward(rng.standard_normal((4, 2, 6)), train=True)
        x = rng.standard_normal((3, 2, 6))
        np.testing.assert_array_equal(bn.forward(x, train=False), bn.forward(x, train=False))

    def test_running_stats_updated_with_momentum(self):
        rng = np.random.default_rng(8)
        bn = BatchNorm1d(1)
        x = rng.standard_normal((4, 1, 8)) + 10.0
        bn.forward(x, train=True)
        np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(), atol=1e-12)

    def test_single_sample_train_rejected(self):
        with pytest.raises(ShapeError):
            BatchNorm1d(2).forward(np.zeros((1, 2, 1)), train=True)


class TestActivations:
    def test_leaky_relu_negative_slope(self):
        assert leaky_relu(np.array(-10.0)) == -1.0
        assert leaky_relu(np.array(3.0)) == 3.0

    def test_silu_at_zero(self):
        assert silu(np.array(0.0)) == 0.0

    def test_silu_large_negative_is_stable(self):
        out = silu(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.0, 1000.0], atol=1e-12)

    def test_dropout_eval_is_identity(self):
        x = np.random.default_rng(9).standard_normal((4, 5))
        out, mask = dropout(x, 0.5, train=False, rng=None)
        assert mask is None
        np.testing.assert_array_equal(out, x)

    def test_dropout_train_scales_survivors(self):
        rng = np.random.default_rng(10)
        x = np.ones((100, 100))
        out, _ = dropout(x, 0.25, train=True, rng=rng)
        kept = out != 0.0
        assert abs(kept.mean() - 0.75) < 0.02
        np.testing.assert_allclose(out[kept], 1.0 / 0.75)

    def test_dropout_bad_rate_rejected(self):
        with pytest.raises(ConfigError):
            dropout(np.zeros(3), 1.0, train=True, rng=np.random.default_rng(0))


class TestDense:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(dense_forward(x, np.eye(3), np.zeros(3)), x)

    def test_zero_weight_gives_bias(self):
        out = dense_forward(np.array([5.0, 6.0]), np.zeros((3, 2)), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])

    def test_hand_computed_product(self):
        out = dense_forward(np.array([1.0, 1.0]), np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2))
        np.testing.assert_array_equal(out, [3.0, 7.0])

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ShapeError):
            dense_forward(np.zeros(3), np.zeros((2, 4)), np.zeros(2))

    def test_backward_shapes(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((6, 4))
        w = rng.standard_normal((3, 4))
        gx, gw, gb = dense_backward(x, w, rng.standard_normal((6, 3)))
        assert gx.shape == (6, 4) and gw.shape == (3, 4) and gb.shape == (3,)


class TestConvBlock:
    def test_forward_is_deterministic_in_eval(self):
        rng = np.random.default_rng(12)
        block = ConvBlock(2, 4, rng=rng)
        x = rng.standard_normal((3, 2, 7))
        np.testing.assert_array_equal(block.forward(x), block.forward(x))

    def test_param_names_are_namespaced(self):
        block = ConvBlock(2, 4, rng=np.random.default_rng(13))
        assert set(block.params()) == {"conv.kernel", "conv.bias", "bn.gain", "bn.bias"}
        assert set(block.state()) == {"bn.running_mean", "bn.running_var"}

    def test_zero_grad_clears_accumulation(self):
        rng = np.random.default_rng(14)
        block = ConvBlock(2, 3, rng=rng)
        x = rng.standard_normal((4, 2, 5))
        block.forward(x, train=True, rng=rng)
        block.backward(rng.standard_normal((4, 3, 5)))
        assert any(g.any() for g in block.grads().values())
        block.zero_grad()
        assert not any(g.any() for g in block.grads().values())


def test_layer_forward_determinism_given_seed():
    # same input, params, rng seed and mode => same output, for the full block
    rng = np.random.default_rng(15)
    block = ConvBlock(2, 3, rng=rng)
    x = rng.standard_normal((4, 2, 6))
    a = block.forward(x, train=True, rng=np.random.default_rng(42))
    b = block.forward(x, train=True, rng=np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_conv1d_class_matches_functional():
    rng = np.random.default_rng(16)
    layer = Conv1d(3, 5, 3, rng=rng)
    x = rng.standard_normal((2, 3, 9))
    np.testing.assert_allclose(layer.forward(x), conv1d_forward(x, layer.kernel, layer.bias), atol=1e-12)
