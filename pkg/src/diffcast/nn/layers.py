"""Dense-tensor layers with hand-written forward/backward passes.

Everything is float64. Temporal layers take (batch, channels, length)
arrays; ``Dense`` takes (batch, features). Each layer caches whatever its
backward pass needs, so ``backward`` must follow the most recent
``forward``. Parameter gradients accumulate into ``g_<name>`` buffers
until ``zero_grad``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    # centered uniform scaled by 1/sqrt(fan_in); keeps activations O(1)
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def leaky_relu(x: np.ndarray, negative_slope: float = 0.1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, negative_slope * x)


def leaky_relu_grad(x: np.ndarray, grad: np.ndarray, negative_slope: float = 0.1) -> np.ndarray:
    return np.where(x >= 0.0, grad, negative_slope * grad)


def silu(x: np.ndarray) -> np.ndarray:
    """Sigmoid-weighted linear unit, x * sigmoid(x)."""
    return x * sigmoid(x)


def silu_grad(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return grad * (s + x * s * (1.0 - s))


def dropout(x: np.ndarray, rate: float, train: bool, rng: np.random.Generator | None):
    """Inverted dropout. Returns (output, mask); mask is None in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("dropout in train mode needs an rng")
    mask = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * mask, mask


def dropout_grad(grad: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return grad if mask is None else grad * mask


def _as_batched(x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected a (channels, length) or (batch, channels, length) array, got shape {x.shape}")


def _conv_columns(xb: np.ndarray, width: int) -> np.ndarray:
    """im2col: (batch, c_in, T) -> (c_in * width, batch * T) with zero padding."""
    b, c_in, t = xb.shape
    pad = width // 2
    xp = np.pad(xb, ((0, 0), (0, 0), (pad, pad))) if pad else xb
    win = np.lib.stride_tricks.sliding_window_view(xp, width, axis=2)  # (b, c_in, t, width)
    return win.transpose(1, 3, 0, 2).reshape(c_in * width, b * t)


def _conv_apply(cols: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None, b: int, t: int) -> np.ndarray:
    c_out = kernel.shape[0]
    out = (kernel.reshape(c_out, -1) @ cols).reshape(c_out, b, t)
    out = np.ascontiguousarray(out.transpose(1, 0, 2))
    if bias is not None:
        out += bias[:, None]
    return out


def _conv_grads(cols: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray):
    b, c_out, t = grad_out.shape
    _, c_in, width = kernel.shape
    g2 = np.ascontiguousarray(grad_out.transpose(1, 0, 2)).reshape(c_out, b * t)
    grad_kernel = (g2 @ cols.T).reshape(kernel.shape)
    grad_cols = kernel.reshape(c_out, -1).T @ g2
    gx4 = grad_cols.reshape(c_in, width, b, t)
    pad = width // 2
    acc = np.zeros((c_in, b, t + 2 * pad))
    for j in range(width):
        acc[:, :, j : j + t] += gx4[:, j]
    grad_x = np.ascontiguousarray((acc[:, :, pad : pad + t] if pad else acc).transpose(1, 0, 2))
    return grad_x, grad_kernel, g2.sum(axis=1)


def _check_conv_shapes(xb: np.ndarray, kernel: np.ndarray) -> None:
    if kernel.shape[2] % 2 != 1:
        raise ConfigError(f"conv kernel width must be odd, got {kernel.shape[2]}")
    if xb.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv input has {xb.shape[1]} channels, kernel expects {kernel.shape[1]}")


def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-padded 1-D convolution, stride 1.

    x: (batch, c_in, T) or (c_in, T); kernel: (c_out, c_in, width) with odd
    width; output length equals input length.
    """
    xb, squeeze = _as_batched(x)
    _check_conv_shapes(xb, kernel)
    cols = _conv_columns(xb, kernel.shape[2])
    out = _conv_apply(cols, kernel, bias, xb.shape[0], xb.shape[2])
    return out[0] if squeeze else out


def conv1d_backward(x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray):
    """Gradients of the same-padded convolution.

    Returns (grad_x, grad_kernel, grad_bias) matching the forward shapes.
    """
    xb, squeeze = _as_batched(x)
    _check_conv_shapes(xb, kernel)
    gb, _ = _as_batched(grad_out)
    c_out = kernel.shape[0]
    t = xb.shape[2]
    if gb.shape != (xb.shape[0], c_out, t):
        raise ShapeError(f"upstream grad shape {grad_out.shape} does not match conv output ({xb.shape[0]}, {c_out}, {t})")
    cols = _conv_columns(xb, kernel.shape[2])
    grad_x, grad_kernel, grad_bias = _conv_grads(cols, kernel, gb)
    if squeeze:
        grad_x = grad_x[0]
    return grad_x, grad_kernel, grad_bias


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """weight @ x + bias over the last axis; x: (features,) or (batch, features)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"dense input dim {x.shape[-1]} does not match weight in-dim {weight.shape[1]}")
    return x @ weight.T + bias


def dense_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    g2 = grad_out.reshape(-1, weight.shape[0])
    x2 = x.reshape(-1, weight.shape[1])
    grad_weight = g2.T @ x2
    grad_bias = g2.sum(axis=0)
    grad_x = grad_out @ weight
    return grad_x, grad_weight, grad_bias


class Layer:
    """Base class: named parameters, matching grad buffers, extra state."""

    param_names: tuple[str, ...] = ()
    state_names: tuple[str, ...] = ()

    def children(self) -> dict[str, "Layer"]:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        out = {name: getattr(self, name) for name in self.param_names}
        for cname, child in self.children().items():
            for key, value in child.params().items():
                out[f"{cname}.{key}"] = value
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {name: getattr(self, "g_" + name) for name in self.param_names}
        for cname, child in self.children().items():
            for key, value in child.grads().items():
                out[f"{cname}.{key}"] = value
        return out

    def state(self) -> dict[str, np.ndarray]:
        out = {name: getattr(self, name) for name in self.state_names}
        for cname, child in self.children().items():
            for key, value in child.state().items():
                out[f"{cname}.{key}"] = value
        return out

    def zero_grad(self) -> None:
        for name in self.param_names:
            getattr(self, "g_" + name)[...] = 0.0
        for child in self.children().values():
            child.zero_grad()

    def forward(self, x, *, train: bool = False, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def load_arrays(layer: Layer, values: dict[str, np.ndarray], *, include_state: bool = True) -> None:
    """Copy values into a layer's parameter (and state) buffers in place."""
    targets = dict(layer.params())
    if include_state:
        targets.update(layer.state())
    for name, target in targets.items():
        if name not in values:
            raise ShapeError(f"missing array for parameter group '{name}'")
        src = values[name]
        if src.shape != target.shape:
            raise ShapeError(f"parameter group '{name}' has shape {src.shape}, expected {target.shape}")
        np.copyto(target, src)


class Conv1d(Layer):
    param_names = ("kernel", "bias")

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, *, rng: np.random.Generator):
        self.kernel = uniform_init(rng, (out_channels, in_channels, kernel_size), in_channels * kernel_size)
        self.bias = np.zeros(out_channels)
        self.g_kernel = np.zeros_like(self.kernel)
        self.g_bias = np.zeros_like(self.bias)
        self._cols = None
        self._shape = None

    def forward(self, x, *, train=False, rng=None):
        xb, _ = _as_batched(x)
        _check_conv_shapes(xb, self.kernel)
        # the im2col matrix is reused by backward
        self._cols = _conv_columns(xb, self.kernel.shape[2])
        self._shape = xb.shape
        return _conv_apply(self._cols, self.kernel, self.bias, xb.shape[0], xb.shape[2])

    def backward(self, grad):
        if grad.shape != (self._shape[0], self.kernel.shape[0], self._shape[2]):
            raise ShapeError(f"upstream grad shape {grad.shape} does not match conv output")
        grad_x, gk, gb = _conv_grads(self._cols, self.kernel, grad)
        self.g_kernel += gk
        self.g_bias += gb
        return grad_x


class Dense(Layer):
    param_names = ("weight", "bias")

    def __init__(self, in_dim: int, out_dim: int, *, rng: np.random.Generator):
        self.weight = uniform_init(rng, (out_dim, in_dim), in_dim)
        self.bias = np.zeros(out_dim)
        self.g_weight = np.zeros_like(self.weight)
        self.g_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x, *, train=False, rng=None):
        self._x = x
        return dense_forward(x, self.weight, self.bias)

    def backward(self, grad):
        grad_x, gw, gb = dense_backward(self._x, self.weight, grad)
        self.g_weight += gw
        self.g_bias += gb
        return grad_x


class BatchNorm1d(Layer):
    """Per-channel batch normalization over (batch, time).

    Train mode normalizes by biased batch statistics and updates running
    stats with momentum 0.1; eval mode is a pure function of the running
    stats (which start at mean 0, var 1).
    """

    param_names = ("gain", "bias")
    state_names = ("running_mean", "running_var")

    def __init__(self, channels: int, *, momentum: float = 0.1, eps: float = 1e-5):
        self.gain = np.ones(channels)
        self.bias = np.zeros(channels)
        self.g_gain = np.zeros_like(self.gain)
        self.g_bias = np.zeros_like(self.bias)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def forward(self, x, *, train=False, rng=None):
        if x.ndim != 3:
            raise ShapeError(f"batchnorm expects (batch, channels, length), got shape {x.shape}")
        if x.shape[1] != self.gain.shape[0]:
            raise ShapeError(f"batchnorm has {self.gain.shape[0]} channels, input has {x.shape[1]}")
        if not train:
            # fused affine form of (x - mean) * inv_std * gain + bias
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            scale = self.gain * inv_std
            shift = self.bias - self.running_mean * scale
            self._cache = (x, inv_std, False)
            out = x * scale[:, None]
            out += shift[:, None]
            return out
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise ShapeError("batchnorm train mode needs at least 2 samples per channel")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        self.running_mean *= 1.0 - self.momentum
        self.running_mean += self.momentum * mean
        self.running_var *= 1.0 - self.momentum
        self.running_var += self.momentum * var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = x - mean[:, None]
        xhat *= inv_std[:, None]
        self._cache = (xhat, inv_std, True)
        out = xhat * self.gain[:, None]
        out += self.bias[:, None]
        return out

    def backward(self, grad):
        xhat, inv_std, train = self._cache
        if not train:
            # eval cache holds the raw input; stats are constants here
            xhat = (xhat - self.running_mean[:, None]) * inv_std[:, None]
        self.g_gain += (grad * xhat).sum(axis=(0, 2))
        self.g_bias += grad.sum(axis=(0, 2))
        gxhat = grad * self.gain[:, None]
        if not train:
            gxhat *= inv_std[:, None]
            return gxhat
        n = xhat.shape[0] * xhat.shape[2]
        sum_g = gxhat.sum(axis=(0, 2), keepdims=True)
        sum_gx = (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
        # in-place evaluation of inv_std/n * (n*gxhat - sum_g - xhat*sum_gx)
        gxhat -= sum_g / n
        gxhat -= xhat * (sum_gx / n)
        gxhat *= inv_std[:, None]
        return gxhat


class LeakyReLU(Layer):
    def __init__(self, negative_slope: float = 0.1):
        self.negative_slope = negative_slope
        self._scale = None

    def forward(self, x, *, train=False, rng=None):
        if not train:
            # max(x, slope*x) equals the leaky rectifier for slope in (0, 1)
            return np.maximum(x, self.negative_slope * x)
        # cache the elementwise slope factor; backward is one multiply
        self._scale = np.where(x >= 0.0, 1.0, self.negative_slope)
        return x * self._scale

    def backward(self, grad):
        return grad * self._scale


class SiLU(Layer):
    def __init__(self):
        self._x = None

    def forward(self, x, *, train=False, rng=None):
        self._x = x
        return silu(x)

    def backward(self, grad):
        return silu_grad(self._x, grad)


class Dropout(Layer):
    def __init__(self, rate: float = 0.1):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, *, train=False, rng=None):
        out, self._mask = dropout(x, self.rate, train, rng)
        return out

    def backward(self, grad):
        return dropout_grad(grad, self._mask)


class ConvBlock(Layer):
    """conv -> batchnorm -> leaky-relu -> dropout, all length-preserving."""

    def __init__(self, in_channels: int, out_channels: int, *, rng: np.random.Generator,
                 kernel_size: int = 3, negative_slope: float = 0.1, dropout_rate: float = 0.1):
        self.conv = Conv1d(in_channels, out_channels, kernel_size, rng=rng)
        self.bn = BatchNorm1d(out_channels)
        self.act = LeakyReLU(negative_slope)
        self.drop = Dropout(dropout_rate)

    def children(self):
        return {"conv": self.conv, "bn": self.bn, "act": self.act, "drop": self.drop}

    def forward(self, x, *, train=False, rng=None):
        x = self.conv.forward(x)
        x = self.bn.forward(x, train=train)
        x = self.act.forward(x, train=train)
        return self.drop.forward(x, train=train, rng=rng)

    def backward(self, grad):
        grad = self.drop.backward(grad)
        grad = self.act.backward(grad)
        grad = self.bn.backward(grad)
        return self.conv.backward(grad)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def children(self):
        return {str(i): layer for i, layer in enumerate(self.layers)}

    def forward(self, x, *, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class TimeProjection(Layer):
    """Dense map over the time axis (length_in -> length_out), shared across channels."""

    param_names = ("weight", "bias")

    def __init__(self, length_in: int, length_out: int, *, rng: np.random.Generator):
        self.weight = uniform_init(rng, (length_out, length_in), length_in)
        self.bias = np.zeros(length_out)
        self.g_weight = np.zeros_like(self.weight)
        self.g_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x, *, train=False, rng=None):
        if x.shape[-1] != self.weight.shape[1]:
            raise ShapeError(f"time projection expects length {self.weight.shape[1]}, got {x.shape[-1]}")
        self._x = x
        return np.einsum("bcl,hl->bch", x, self.weight, optimize=True) + self.bias

    def backward(self, grad):
        self.g_weight += np.einsum("bch,bcl->hl", grad, self._x, optimize=True)
        self.g_bias += grad.sum(axis=(0, 1))
        return np.einsum("bch,hl->bcl", grad, self.weight, optimize=True)
