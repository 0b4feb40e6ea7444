"""Denoising network: step embedding, input projection, encoder, decoder.

The network predicts the clean horizon (or, for the noise-objective
variant, the injected noise — same architecture, separate weights) from
the diffused horizon x^k, the step index k, and the condition tensor.
All convolutions preserve length, so the stacks are horizon-agnostic.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import ConvBlock, Conv1d, Dense, Layer, Sequential, silu, silu_grad


def sinusoidal_embedding(k, dim: int = 256) -> np.ndarray:
    """Raw sinusoidal features of the diffusion step.

    Frequencies run 10^0 .. 10^4 across dim/2 slots; the vector is the
    sines followed by the cosines. Accepts a scalar step or an array of
    steps (returned as rows).
    """
    if dim < 4 or dim % 2 != 0:
        raise ConfigError(f"embedding dim must be even and >= 4, got {dim}")
    w = dim // 2
    freqs = 10.0 ** (4.0 * np.arange(w) / (w - 1))
    k_arr = np.atleast_1d(np.asarray(k, dtype=np.float64))
    angles = k_arr[:, None] * freqs
    out = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return out[0] if np.ndim(k) == 0 else out


class StepEmbedding(Layer):
    """Two dense layers with SiLU after each, on top of the raw sinusoids."""

    def __init__(self, dim: int = 256, hidden: int = 128, *, rng: np.random.Generator):
        self.dim = dim
        self.fc1 = Dense(dim, hidden, rng=rng)
        self.fc2 = Dense(hidden, dim, rng=rng)
        self._pre1 = None
        self._pre2 = None

    def children(self):
        return {"fc1": self.fc1, "fc2": self.fc2}

    def forward(self, k, *, train=False, rng=None):
        raw = sinusoidal_embedding(k, self.dim)
        self._pre1 = self.fc1.forward(raw)
        self._pre2 = self.fc2.forward(silu(self._pre1))
        return silu(self._pre2)

    def backward(self, grad):
        g = silu_grad(self._pre2, grad)
        g = self.fc2.backward(g)
        g = silu_grad(self._pre1, g)
        self.fc1.backward(g)
        return None  # no gradient flows into the step index


class Denoiser(Layer):
    """Full denoising network.

    input projection: (B, d, H)        -> (B, hidden, H)    [2 conv blocks]
    encoder:          (B, 2*hidden, H) -> (B, hidden, H)    [3 conv blocks]
    decoder:          (B, cond+hidden, H) -> (B, d, H)      [3 blocks + plain conv]
    """

    def __init__(self, d: int, cond_channels: int, *, hidden: int = 256,
                 rng: np.random.Generator):
        self.d = d
        self.cond_channels = cond_channels
        self.hidden = hidden
        self.step_embed = StepEmbedding(hidden, rng=rng)
        self.input_proj = Sequential([
            ConvBlock(d, hidden, rng=rng),
            ConvBlock(hidden, hidden, rng=rng),
        ])
        self.encoder = Sequential([
            ConvBlock(2 * hidden, hidden, rng=rng),
            ConvBlock(hidden, hidden, rng=rng),
            ConvBlock(hidden, hidden, rng=rng),
        ])
        self.decoder = Sequential([
            ConvBlock(cond_channels + hidden, hidden, rng=rng),
            ConvBlock(hidden, hidden, rng=rng),
            ConvBlock(hidden, hidden, rng=rng),
            Conv1d(hidden, d, kernel_size=3, rng=rng),  # plain head: no norm/activation
        ])

    def children(self):
        return {"step_embed": self.step_embed, "input_proj": self.input_proj,
                "encoder": self.encoder, "decoder": self.decoder}

    def forward(self, xk, k, cond, *, train=False, rng=None):
        xk, squeeze = _promote(xk)
        cond, _ = _promote(cond)
        if xk.shape[1] != self.d:
            raise ShapeError(f"denoiser built for {self.d} data channels, input has {xk.shape[1]}")
        if cond.shape[1] != self.cond_channels:
            raise ShapeError(f"denoiser built for {self.cond_channels} condition channels, got {cond.shape[1]}")
        if cond.shape[2] != xk.shape[2]:
            raise ShapeError(f"condition length {cond.shape[2]} does not match input length {xk.shape[2]}")
        h = xk.shape[2]
        z1 = self.input_proj.forward(xk, train=train, rng=rng)
        pk = self.step_embed.forward(np.broadcast_to(np.atleast_1d(k), (xk.shape[0],)), train=train, rng=rng)
        pk_tiled = np.repeat(pk[:, :, None], h, axis=2)
        z2 = self.encoder.forward(np.concatenate([z1, pk_tiled], axis=1), train=train, rng=rng)
        out = self.decoder.forward(np.concatenate([cond, z2], axis=1), train=train, rng=rng)
        return out[0] if squeeze else out

    def backward(self, grad):
        """Returns (grad wrt x^k, grad wrt condition)."""
        if grad.ndim == 2:
            grad = grad[None]
        g = self.decoder.backward(grad)
        g_cond, g_z2 = g[:, : self.cond_channels], g[:, self.cond_channels :]
        g = self.encoder.backward(g_z2)
        g_z1, g_pk = g[:, : self.hidden], g[:, self.hidden :]
        self.step_embed.backward(g_pk.sum(axis=2))
        g_x = self.input_proj.backward(g_z1)
        return g_x, g_cond


def _promote(x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected 2-D or 3-D array, got shape {x.shape}")
