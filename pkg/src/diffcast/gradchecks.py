"""Finite-difference verification suite over every backward pass.

Each group builds a small instance, defines a scalar loss (a fixed random
cotangent dotted with the forward output, or the real training loss for
the end-to-end groups), and compares analytic gradients of every
parameter — including the input — against central differences.
"""

from __future__ import annotations

import numpy as np

from .conditioning import ArModel, CondNet
from .denoiser import Denoiser, StepEmbedding
from .nn import BatchNorm1d, Conv1d, ConvBlock, Dense, finite_diff_check
from .pipeline import ForecastModel, ModelConfig
from .schedule import build_cosine_schedule

PROBES = 12


def _cotangent_loss(layer, x, cot, *, train=False, seed=0):
    """loss = sum(forward(x) * cot); returns (loss, grads incl. d/dx)."""

    def loss_and_grads():
        layer.zero_grad()
        rng = np.random.default_rng(seed)
        out = layer.forward(x, train=train, rng=rng)
        grad_x = layer.backward(cot)
        grads = dict(layer.grads())
        grads["input"] = grad_x
        return float(np.sum(out * cot)), grads

    return loss_and_grads


def check_dense(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = Dense(5, 4, rng=rng)
    x = rng.standard_normal((3, 5))
    cot = rng.standard_normal((3, 4))
    params = dict(layer.params(), input=x)
    return finite_diff_check(_cotangent_loss(layer, x, cot), params, PROBES, rng=rng)


def check_conv1d(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = Conv1d(3, 4, 3, rng=rng)
    x = rng.standard_normal((2, 3, 7))
    cot = rng.standard_normal((2, 4, 7))
    params = dict(layer.params(), input=x)
    return finite_diff_check(_cotangent_loss(layer, x, cot), params, PROBES, rng=rng)


def check_batchnorm(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = BatchNorm1d(3)
    layer.gain[:] = rng.uniform(0.5, 1.5, 3)
    layer.bias[:] = rng.standard_normal(3)
    x = rng.standard_normal((4, 3, 5))
    cot = rng.standard_normal((4, 3, 5))
    params = dict(layer.params(), input=x)
    return finite_diff_check(_cotangent_loss(layer, x, cot, train=True), params, PROBES, rng=rng)


def check_conv_block(seed=0) -> float:
    # full block: conv, batchnorm (train), leaky-relu, dropout under a fixed rng
    rng = np.random.default_rng(seed)
    layer = ConvBlock(2, 3, rng=rng)
    x = rng.standard_normal((3, 2, 6))
    cot = rng.standard_normal((3, 3, 6))
    params = dict(layer.params(), input=x)
    return finite_diff_check(_cotangent_loss(layer, x, cot, train=True, seed=seed + 1), params, PROBES, rng=rng)


def check_step_embedding(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = StepEmbedding(16, 8, rng=rng)
    k = np.array([1.0, 7.0, 42.0])
    cot = rng.standard_normal((3, 16))

    def loss_and_grads():
        layer.zero_grad()
        out = layer.forward(k)
        layer.backward(cot)
        return float(np.sum(out * cot)), dict(layer.grads())

    return finite_diff_check(loss_and_grads, dict(layer.params()), PROBES, rng=rng)


def check_ar_model(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = ArModel(2, 5, 3, rng=rng)
    x = rng.standard_normal((4, 2, 5))
    cot = rng.standard_normal((4, 2, 3))
    params = dict(layer.params(), input=x)
    return finite_diff_check(_cotangent_loss(layer, x, cot), params, PROBES, rng=rng)


def check_cond_net(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = CondNet(2, 8, 4, hidden=6, rng=rng)
    x = rng.standard_normal((3, 2, 8))
    cot = rng.standard_normal((3, 2, 4))
    params = dict(layer.params(), input=x)
    return finite_diff_check(_cotangent_loss(layer, x, cot, train=True, seed=seed + 1), params, PROBES, rng=rng)


def check_denoiser(seed=0) -> float:
    rng = np.random.default_rng(seed)
    layer = Denoiser(2, 4, hidden=8, rng=rng)
    x = rng.standard_normal((2, 2, 4))
    cond = rng.standard_normal((2, 4, 4))
    k = np.array([3, 9])
    cot = rng.standard_normal((2, 2, 4))

    def loss_and_grads():
        layer.zero_grad()
        drop_rng = np.random.default_rng(seed + 1)
        out = layer.forward(x, k, cond, train=True, rng=drop_rng)
        g_x, g_c = layer.backward(cot)
        grads = dict(layer.grads())
        grads["input"] = g_x
        grads["condition"] = g_c
        return float(np.sum(out * cot)), grads

    params = dict(layer.params(), input=x, condition=cond)
    return finite_diff_check(loss_and_grads, params, PROBES, rng=rng)


def _end_to_end(head: str, seed: int, *, d=2, lookback=8, horizon=4, hidden=256) -> float:
    rng = np.random.default_rng(seed)
    config = ModelConfig(d=d, lookback=lookback, horizon=horizon, hidden=hidden,
                         k_steps=20, head=head, mixup="soft")
    model = ForecastModel(config, rng)
    schedule = build_cosine_schedule(config.k_steps, config.beta_start, config.beta_end)
    lookbacks = rng.standard_normal((2, d, lookback))
    targets = rng.standard_normal((2, d, horizon))

    def loss_and_grads():
        model.zero_grad()
        loss = model.train_loss_and_backward(lookbacks, targets, schedule, np.random.default_rng(seed + 1))
        return loss, dict(model.trainable_grads())

    return finite_diff_check(loss_and_grads, model.trainable_params(), PROBES, rng=rng)


def check_loss_data(seed=0) -> float:
    """Squared-error training loss of the data-prediction head, end to end."""
    return _end_to_end("data", seed)


def check_loss_noise(seed=0) -> float:
    """Squared-error training loss of the noise-prediction head, end to end."""
    return _end_to_end("noise", seed)


SUITE = {
    "dense": check_dense,
    "conv1d": check_conv1d,
    "batchnorm": check_batchnorm,
    "conv_block": check_conv_block,
    "step_embedding": check_step_embedding,
    "ar_model": check_ar_model,
    "cond_net": check_cond_net,
    "denoiser": check_denoiser,
    "loss_data_head": check_loss_data,
    "loss_noise_head": check_loss_noise,
}


def run_suite(seed: int = 0) -> dict[str, float]:
    """Max relative finite-difference error for every group."""
    return {name: fn(seed) for name, fn in SUITE.items()}
