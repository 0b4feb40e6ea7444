"""Condition assembly for the denoiser.

Three ingredients: a convolutional network mapping the lookback window
(d, L) to the horizon shape (d, H); future mixup, which during training
blends that map with the ground-truth horizon under a random mixing mask;
and a pretrained linear autoregressive initializer giving a crude horizon
guess. The condition tensor stacks the mixup output and the initializer
output along the channel axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .nn import Adam, ConvBlock, Conv1d, Layer, Sequential, TimeProjection

MASK_STRATEGIES = ("soft", "hard", "segment")
SEGMENT_MASKED_MEAN = 3.0


@dataclass
class Condition:
    """Denoiser condition: mixup channels stacked over initializer channels."""

    z_mix: np.ndarray
    z_ar: np.ndarray | None
    c: np.ndarray


class CondNet(Layer):
    """Lookback encoder: two conv blocks, a time projection L -> H, and a
    width-1 conv head back down to the data channels. Output is linear."""

    def __init__(self, d: int, lookback: int, horizon: int, *, hidden: int = 256,
                 rng: np.random.Generator):
        self.d = d
        self.lookback = lookback
        self.horizon = horizon
        self.blocks = Sequential([
            ConvBlock(d, hidden, rng=rng),
            ConvBlock(hidden, hidden, rng=rng),
        ])
        self.time_proj = TimeProjection(lookback, horizon, rng=rng)
        self.head = Conv1d(hidden, d, kernel_size=1, rng=rng)

    def children(self):
        return {"blocks": self.blocks, "time_proj": self.time_proj, "head": self.head}

    def forward(self, x, *, train=False, rng=None):
        x, squeeze = _as_batched(x, self.d, self.lookback, "lookback")
        h = self.blocks.forward(x, train=train, rng=rng)
        h = self.time_proj.forward(h)
        out = self.head.forward(h)
        return out[0] if squeeze else out

    def backward(self, grad):
        if grad.ndim == 2:
            grad = grad[None]
        g = self.head.backward(grad)
        g = self.time_proj.backward(g)
        return self.blocks.backward(g)


class ArModel(Layer):
    """Linear horizon initializer: one (d, H) weight matrix per lookback
    column plus a bias, summed over columns. All horizon positions are
    produced in a single pass; nothing is decoded sequentially."""

    param_names = ("weight", "bias")

    def __init__(self, d: int, lookback: int, horizon: int, *, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        # least-squares problem is convex; small init suffices
        self.weight = rng.normal(0.0, 0.01, size=(lookback, d, horizon))
        self.bias = np.zeros((d, horizon))
        self.g_weight = np.zeros_like(self.weight)
        self.g_bias = np.zeros_like(self.bias)
        self.d = d
        self.lookback = lookback
        self.horizon = horizon
        self._x = None

    def forward(self, x, *, train=False, rng=None):
        x, squeeze = _as_batched(x, self.d, self.lookback, "lookback")
        self._x = x
        out = np.einsum("bdl,ldh->bdh", x, self.weight, optimize=True) + self.bias
        return out[0] if squeeze else out

    def backward(self, grad):
        if grad.ndim == 2:
            grad = grad[None]
        self.g_weight += np.einsum("bdh,bdl->ldh", grad, self._x, optimize=True)
        self.g_bias += grad.sum(axis=0)
        return np.einsum("bdh,ldh->bdl", grad, self.weight, optimize=True)


def ar_pretrain(model: ArModel, lookbacks: np.ndarray, targets: np.ndarray, *,
                epochs: int = 20, batch_size: int = 64, learning_rate: float = 1e-3,
                rng: np.random.Generator) -> list[float]:
    """Fit the initializer to the ground-truth horizons by squared error.

    Runs a fixed small number of epochs of Adam and returns the per-epoch
    mean losses. The caller freezes the parameters afterwards by simply not
    handing them to the main optimizer.
    """
    n = len(lookbacks)
    if n == 0:
        raise DataError("autoregressive pretraining needs at least one window")
    optim = Adam(model.params(), learning_rate=learning_rate)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            model.zero_grad()
            pred = model.forward(lookbacks[idx])
            resid = pred - targets[idx]
            loss = float(np.mean(resid * resid))
            model.backward(2.0 * resid / resid.size)
            optim.step(model.grads())
            total += loss * len(idx)
        history.append(total / n)
    return history


def sample_mask(strategy: str, shape: tuple[int, ...], rng: np.random.Generator,
                tau: float | None = None) -> np.ndarray:
    """Draw a mixing mask; 1 selects the lookback encoding, 0 leaks the target.

    soft: i.i.d. uniform [0,1). hard: uniforms binarized as 1{u < tau}, so
    larger tau leaks less ground truth. segment: per row, alternating
    masked runs with geometric mean length 3 and unmasked runs with
    geometric mean length 3(1-tau)/tau, starting in a random state.
    """
    if strategy == "soft":
        return rng.random(shape)
    if strategy not in MASK_STRATEGIES:
        raise ConfigError(f"unknown mask strategy '{strategy}'")
    if tau is None or not 0.0 < tau < 1.0:
        raise ConfigError(f"strategy '{strategy}' needs tau in (0, 1), got {tau}")
    if strategy == "hard":
        return (rng.random(shape) < tau).astype(np.float64)
    # segment
    mask = np.empty(shape)
    rows = mask.reshape(-1, shape[-1])
    p_masked = 1.0 / SEGMENT_MASKED_MEAN
    p_unmasked = min(1.0, tau / (SEGMENT_MASKED_MEAN * (1.0 - tau)))
    for row in rows:
        masked = bool(rng.integers(2))
        pos = 0
        h = len(row)
        while pos < h:
            run = int(rng.geometric(p_masked if masked else p_unmasked))
            row[pos : pos + run] = 1.0 if masked else 0.0
            pos += run
            masked = not masked
    return mask


def future_mixup_train(cond_out: np.ndarray, target: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise blend: mask * cond_out + (1 - mask) * target."""
    if cond_out.shape != target.shape or mask.shape != cond_out.shape:
        raise ShapeError(f"mixup shapes disagree: cond {cond_out.shape}, target {target.shape}, mask {mask.shape}")
    return mask * cond_out + (1.0 - mask) * target


def future_mixup_infer(cond_out: np.ndarray) -> np.ndarray:
    """Inference-time mixup: the conditioning output alone. This entry point
    takes no target argument, so the horizon cannot leak into inference."""
    return cond_out


def build_condition(z_mix: np.ndarray, z_ar: np.ndarray | None) -> Condition:
    """Stack mixup channels over initializer channels (channel axis = -2)."""
    if z_ar is None:
        return Condition(z_mix=z_mix, z_ar=None, c=z_mix)
    if z_ar.shape != z_mix.shape:
        raise ShapeError(f"condition parts disagree: z_mix {z_mix.shape}, z_ar {z_ar.shape}")
    return Condition(z_mix=z_mix, z_ar=z_ar, c=np.concatenate([z_mix, z_ar], axis=-2))


def _as_batched(x: np.ndarray, d: int, length: int, what: str):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != d or x.shape[2] != length:
        raise ShapeError(f"{what} must have shape ({d}, {length}) or (batch, {d}, {length}), got {np.asarray(x).shape}")
    return x, squeeze
