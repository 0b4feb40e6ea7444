"""Training and inference orchestration.

Training: per batch element, draw a diffusion step and noise, diffuse the
(instance-normalized) horizon, assemble the condition with future mixup
and the frozen autoregressive initializer, run the denoiser, and take one
Adam step on the squared prediction error. Inference: start from white
noise and iterate the backward denoising step down a (possibly strided)
schedule, conditioning on the lookback alone, then undo the instance
normalization.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conditioning import ArModel, CondNet, ar_pretrain, build_condition, future_mixup_train, sample_mask
from .denoiser import Denoiser
from .errors import ConfigError, DataError, ShapeError, TrainingError
from .nn import Adam, Layer
from .schedule import (
    DiffusionSchedule,
    build_cosine_schedule,
    denoise_step_data,
    denoise_step_noise,
    forward_sample_batch,
    recover_x0,
    strided_subschedule,
)

STD_FLOOR = 1e-5


@dataclass
class ModelConfig:
    d: int
    lookback: int
    horizon: int
    hidden: int = 256
    k_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.1
    mixup: str = "soft"              # soft | hard | segment | none
    mixup_tau: float = 0.5
    use_ar: bool = True
    head: str = "data"               # data | noise
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    ar_epochs: int = 20
    sample_count: int = 10
    sampler_steps: int | None = None    # None = full k_steps
    train_stride: int = 1
    valid_steps: int | None = None      # sampler steps for validation (None = full)
    valid_max_windows: int | None = None
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if min(self.d, self.lookback, self.horizon) < 1:
            raise ConfigError(f"d, lookback and horizon must be >= 1, got ({self.d}, {self.lookback}, {self.horizon})")
        if self.hidden < 4 or self.hidden % 2:
            raise ConfigError(f"hidden width must be even and >= 4, got {self.hidden}")
        if self.k_steps < 2:
            raise ConfigError(f"k_steps must be >= 2, got {self.k_steps}")
        if not (0.0 < self.beta_start < self.beta_end < 1.0):
            raise ConfigError(f"invalid schedule endpoints ({self.beta_start}, {self.beta_end})")
        if self.mixup not in ("soft", "hard", "segment", "none"):
            raise ConfigError(f"unknown mixup strategy '{self.mixup}'")
        if self.mixup in ("hard", "segment") and not 0.0 < self.mixup_tau < 1.0:
            raise ConfigError(f"mixup '{self.mixup}' needs tau in (0, 1), got {self.mixup_tau}")
        if self.head not in ("data", "noise"):
            raise ConfigError(f"head must be 'data' or 'noise', got '{self.head}'")
        for name in ("learning_rate",):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("batch_size", "max_epochs", "patience", "sample_count", "train_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.ar_epochs < 0:
            raise ConfigError("ar_epochs must be >= 0")
        for name in ("sampler_steps", "valid_steps"):
            v = getattr(self, name)
            if v is not None and not 1 <= v <= self.k_steps:
                raise ConfigError(f"{name} must be in 1..{self.k_steps}, got {v}")
        if self.valid_max_windows is not None and self.valid_max_windows < 1:
            raise ConfigError("valid_max_windows must be >= 1")
        return self

    @property
    def cond_channels(self) -> int:
        return self.d * (2 if self.use_ar else 1)


@dataclass
class NormStats:
    mean: np.ndarray   # (d,)
    std: np.ndarray    # (d,), floored at STD_FLOOR


def instance_normalize(lookback: np.ndarray, target: np.ndarray | None = None):
    """Shift/scale a window by the lookback's per-variable mean and
    population standard deviation. The horizon never enters the stats."""
    lookback = np.asarray(lookback, dtype=np.float64)
    mean = lookback.mean(axis=-1)
    std = np.maximum(lookback.std(axis=-1), STD_FLOOR)
    stats = NormStats(mean=mean, std=std)
    nl = (lookback - mean[..., None]) / std[..., None]
    if target is None:
        return nl, stats
    nt = (np.asarray(target, dtype=np.float64) - mean[..., None]) / std[..., None]
    return nl, nt, stats


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return values * stats.std[..., None] + stats.mean[..., None]


def stack_windows(windows) -> tuple[np.ndarray, np.ndarray]:
    """(lookbacks, targets) arrays of shape (n, d, L) / (n, d, H)."""
    if not windows:
        raise DataError("no windows to train or evaluate on")
    return (np.stack([w.lookback for w in windows]).astype(np.float64),
            np.stack([w.target for w in windows]).astype(np.float64))


class ForecastModel(Layer):
    """Conditioning network + frozen initializer + denoiser, as one tree.

    Only the conditioning network and the denoiser are trainable; the
    autoregressive initializer is pretrained separately and then frozen.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.cond_net = CondNet(config.d, config.lookback, config.horizon,
                                hidden=config.hidden, rng=rng)
        self.ar = ArModel(config.d, config.lookback, config.horizon, rng=rng) if config.use_ar else None
        self.denoiser = Denoiser(config.d, config.cond_channels, hidden=config.hidden, rng=rng)

    def children(self):
        out = {"cond_net": self.cond_net, "denoiser": self.denoiser}
        if self.ar is not None:
            out["ar"] = self.ar
        return out

    def trainable_params(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("cond_net", "denoiser"):
            for key, value in getattr(self, name).params().items():
                out[f"{name}.{key}"] = value
        return out

    def trainable_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("cond_net", "denoiser"):
            for key, value in getattr(self, name).grads().items():
                out[f"{name}.{key}"] = value
        return out

    def condition_infer(self, lookbacks: np.ndarray) -> np.ndarray:
        """Inference-path condition; takes no target and uses eval mode."""
        cond_out = self.cond_net.forward(lookbacks, train=False)
        z_ar = self.ar.forward(lookbacks) if self.ar is not None else None
        return build_condition(cond_out, z_ar).c

    def train_loss_and_backward(self, lookbacks: np.ndarray, targets: np.ndarray,
                                schedule: DiffusionSchedule, rng: np.random.Generator) -> float:
        cfg = self.config
        b = lookbacks.shape[0]
        k = rng.integers(1, schedule.K + 1, size=b)
        eps = rng.standard_normal(targets.shape)
        xk = forward_sample_batch(targets, k, schedule, eps)
        cond_out = self.cond_net.forward(lookbacks, train=True, rng=rng)
        if cfg.mixup != "none":
            mask = sample_mask(cfg.mixup, targets.shape, rng, cfg.mixup_tau)
            z_mix = future_mixup_train(cond_out, targets, mask)
        else:
            mask = None
            z_mix = cond_out
        z_ar = self.ar.forward(lookbacks) if self.ar is not None else None
        cond = build_condition(z_mix, z_ar)
        pred = self.denoiser.forward(xk, k, cond.c, train=True, rng=rng)
        reference = targets if cfg.head == "data" else eps
        resid = pred - reference
        loss = float(np.mean(resid * resid))
        _, g_cond = self.denoiser.backward(2.0 * resid / resid.size)
        g_zmix = g_cond[:, : cfg.d]
        self.cond_net.backward(g_zmix if mask is None else g_zmix * mask)
        return loss


def train_step(model: ForecastModel, optimizer: Adam, lookbacks: np.ndarray, targets: np.ndarray,
               schedule: DiffusionSchedule, rng: np.random.Generator, *, batch_index: int | None = None) -> float:
    model.zero_grad()
    loss = model.train_loss_and_backward(lookbacks, targets, schedule, rng)
    if not math.isfinite(loss):
        where = "" if batch_index is None else f" at batch {batch_index}"
        raise TrainingError(f"non-finite training loss{where}")
    optimizer.step(model.trainable_grads())
    return loss


@dataclass
class Checkpoint:
    config: ModelConfig
    schedule: DiffusionSchedule
    model: ForecastModel
    optimizer: Adam
    epoch: int = 0
    best_val: float = math.inf
    trained: bool = False
    history: list[dict] = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"schedule.beta": self.schedule.beta[1:].copy()}
        out.update({k: v.copy() for k, v in self.model.params().items()})
        out.update({k: v.copy() for k, v in self.model.state().items()})
        out.update({k: v.copy() for k, v in self.optimizer.state_arrays().items()})
        return out


def _snapshot(model: ForecastModel, optimizer: Adam) -> dict[str, np.ndarray]:
    out = {k: v.copy() for k, v in model.params().items()}
    out.update({k: v.copy() for k, v in model.state().items()})
    out.update({k: v.copy() for k, v in optimizer.state_arrays().items()})
    return out


def _restore(model: ForecastModel, optimizer: Adam, snap: dict[str, np.ndarray]) -> None:
    for k, v in model.params().items():
        np.copyto(v, snap[k])
    for k, v in model.state().items():
        np.copyto(v, snap[k])
    optimizer.load_state_arrays(snap)


def train_loop(train_windows, valid_windows, config: ModelConfig) -> Checkpoint:
    """Full training: initializer pretraining, epochs with early stopping on
    validation MSE, best-epoch restore. Deterministic under config.seed."""
    config.validate()
    if not train_windows or not valid_windows:
        raise DataError("training and validation splits must both contain windows")
    ss = np.random.SeedSequence(config.seed)
    rng_init, rng_ar, rng_train, rng_valid = (np.random.default_rng(c) for c in ss.spawn(4))

    lookbacks, targets = stack_windows(train_windows)
    lookbacks, targets, _ = instance_normalize(lookbacks, targets)
    v_lookbacks, v_targets = stack_windows(valid_windows)
    v_lookbacks, v_targets, _ = instance_normalize(v_lookbacks, v_targets)
    if config.valid_max_windows and len(v_lookbacks) > config.valid_max_windows:
        keep = np.unique(np.linspace(0, len(v_lookbacks) - 1, config.valid_max_windows).round().astype(int))
        v_lookbacks, v_targets = v_lookbacks[keep], v_targets[keep]

    schedule = build_cosine_schedule(config.k_steps, config.beta_start, config.beta_end)
    model = ForecastModel(config, rng_init)
    if model.ar is not None and config.ar_epochs > 0:
        ar_pretrain(model.ar, lookbacks, targets, epochs=config.ar_epochs,
                    batch_size=config.batch_size, learning_rate=config.learning_rate, rng=rng_ar)
    optimizer = Adam(model.trainable_params(), learning_rate=config.learning_rate)
    ckpt = Checkpoint(config=config, schedule=schedule, model=model, optimizer=optimizer)

    best_snap = None
    stale = 0
    n = len(lookbacks)
    for epoch in range(1, config.max_epochs + 1):
        order = rng_train.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) * config.horizon < 2:
                continue  # batchnorm needs at least 2 samples per channel
            loss = train_step(model, optimizer, lookbacks[idx], targets[idx],
                              schedule, rng_train, batch_index=start // config.batch_size)
            total += loss * len(idx)
            seen += len(idx)
        valid_mse = _validation_mse(model, schedule, v_lookbacks, v_targets, config, rng_valid)
        ckpt.history.append({"epoch": epoch, "train_loss": total / max(seen, 1), "valid_mse": valid_mse})
        ckpt.epoch = epoch
        if valid_mse < ckpt.best_val:
            ckpt.best_val = valid_mse
            best_snap = _snapshot(model, optimizer)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_snap is not None:
        _restore(model, optimizer, best_snap)
    ckpt.trained = True
    return ckpt


def _validation_mse(model, schedule, v_lookbacks, v_targets, config, rng) -> float:
    cond = model.condition_infer(v_lookbacks)
    steps = config.valid_steps or schedule.K
    forecast = sample_chain(model, schedule, cond, v_targets.shape, steps, rng)
    return mse_eval(forecast, v_targets)


def sample_chain(model: ForecastModel, schedule: DiffusionSchedule, cond: np.ndarray,
                 shape: tuple[int, ...], steps: int, rng: np.random.Generator | None,
                 *, deterministic: bool = False) -> np.ndarray:
    """Ancestral denoising from white noise down the (strided) schedule.

    The condition is fixed across steps; the denoiser runs in eval mode.
    With ``deterministic`` every noise draw (including the start) is zero.
    """
    if deterministic:
        x = np.zeros(shape)
    else:
        x = rng.standard_normal(shape)
    ks = strided_subschedule(schedule, steps)
    noise_head = model.config.head == "noise"
    for j, k in enumerate(ks):
        k_to = ks[j + 1] if j + 1 < len(ks) else 0
        pred = model.denoiser.forward(x, k, cond, train=False)
        noise = None if (deterministic or k_to == 0) else rng.standard_normal(shape)
        if noise_head:
            if k_to == k - 1:
                x = denoise_step_noise(x, k, pred, schedule, noise)
            else:
                x = denoise_step_data(x, k, recover_x0(x, k, schedule, pred), schedule, noise, k_to=k_to)
        else:
            x = denoise_step_data(x, k, pred, schedule, noise, k_to=k_to)
    return x


def _require_trained(checkpoint: Checkpoint) -> None:
    if not checkpoint.trained:
        raise TrainingError("checkpoint is untrained; run training before sampling")


def sample(lookback: np.ndarray, checkpoint: Checkpoint, steps: int | None = None,
           rng: np.random.Generator | None = None, *, deterministic: bool = False) -> np.ndarray:
    """One forecast draw for a single (d, L) lookback, denormalized."""
    _require_trained(checkpoint)
    rng = rng or np.random.default_rng(checkpoint.config.seed)
    cfg = checkpoint.config
    nl, stats = instance_normalize(np.asarray(lookback, dtype=np.float64))
    cond = checkpoint.model.condition_infer(nl[None])
    steps = steps or cfg.sampler_steps or checkpoint.schedule.K
    out = sample_chain(checkpoint.model, checkpoint.schedule, cond,
                       (1, cfg.d, cfg.horizon), steps, rng, deterministic=deterministic)
    return denormalize(out[0], stats)


def predict(lookback: np.ndarray, checkpoint: Checkpoint, n_samples: int | None = None,
            steps: int | None = None, rng: np.random.Generator | None = None,
            *, deterministic: bool = False) -> np.ndarray:
    """Pointwise mean of ``n_samples`` independent forecast draws."""
    _require_trained(checkpoint)
    rng = rng or np.random.default_rng(checkpoint.config.seed)
    cfg = checkpoint.config
    s = n_samples or cfg.sample_count
    if s < 1:
        raise ConfigError(f"need at least one sample, got {s}")
    nl, stats = instance_normalize(np.asarray(lookback, dtype=np.float64))
    cond = np.repeat(checkpoint.model.condition_infer(nl[None]), s, axis=0)
    steps = steps or cfg.sampler_steps or checkpoint.schedule.K
    out = sample_chain(checkpoint.model, checkpoint.schedule, cond,
                       (s, cfg.d, cfg.horizon), steps, rng, deterministic=deterministic)
    return denormalize(out.mean(axis=0), stats)


def mse_eval(forecasts: np.ndarray, targets: np.ndarray) -> float:
    forecasts = np.asarray(forecasts, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if forecasts.shape != targets.shape:
        raise ShapeError(f"forecast shape {forecasts.shape} does not match target shape {targets.shape}")
    return float(np.mean((forecasts - targets) ** 2))


def evaluate_windows(checkpoint: Checkpoint, windows, *, n_samples: int | None = None,
                     steps: int | None = None, seed: int = 0, chunk_size: int = 16,
                     threads: int = 1, return_forecasts: bool = False):
    """Mean-of-samples forecast for every window, against the raw targets.

    Windows are processed in fixed-size chunks with independently seeded
    generators, so the result is deterministic for any thread count.
    Returns (overall_mse, per_window_mse) plus the forecasts on request.
    """
    _require_trained(checkpoint)
    cfg = checkpoint.config
    s = n_samples or cfg.sample_count
    steps = steps or cfg.sampler_steps or checkpoint.schedule.K
    windows = list(windows)
    if not windows:
        raise DataError("no windows to evaluate")
    chunks = [windows[i : i + chunk_size] for i in range(0, len(windows), chunk_size)]
    seeds = np.random.SeedSequence(seed).spawn(len(chunks))

    def run_chunk(args):
        chunk, child = args
        rng = np.random.default_rng(child)
        lb, tg = stack_windows(chunk)
        nl, _, stats = instance_normalize(lb, tg)
        cond = np.repeat(checkpoint.model.condition_infer(nl), s, axis=0)
        w = len(chunk)
        out = sample_chain(checkpoint.model, checkpoint.schedule, cond,
                           (w * s, cfg.d, cfg.horizon), steps, rng)
        mean = out.reshape(w, s, cfg.d, cfg.horizon).mean(axis=1)
        forecast = mean * stats.std[:, :, None] + stats.mean[:, :, None]
        sq = (forecast - tg) ** 2
        return forecast, sq.mean(axis=(1, 2)), sq.sum(), sq.size

    jobs = list(zip(chunks, seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, jobs))
    else:
        results = [run_chunk(j) for j in jobs]
    per_window = np.concatenate([r[1] for r in results])
    total = sum(r[2] for r in results)
    count = sum(r[3] for r in results)
    if return_forecasts:
        return total / count, per_window, np.concatenate([r[0] for r in results])
    return total / count, per_window
