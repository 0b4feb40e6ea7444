"""Scikit-learn style front end.

``DiffusionForecaster`` wraps the functional training/sampling pipeline in
the usual estimator protocol: constructor parameters stored verbatim,
``fit(X)`` on a time-major array returning self, ``predict(X)`` mapping
the most recent lookback rows to a horizon forecast, and
``get_params``/``set_params`` via ``BaseEstimator`` so the model clones
and grid-searches like any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import RawSeries, sliding_windows
from .errors import DataError
from .pipeline import ModelConfig, predict as pipeline_predict, sample as pipeline_sample, train_loop


def check_series(X, *, min_rows: int = 1, name: str = "X") -> np.ndarray:
    """Validate a time-major (observations, variables) series array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError(f"{name} must be 1-D or 2-D (observations, variables), got shape {X.shape}")
    if X.shape[0] < min_rows:
        raise DataError(f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains NaN or infinite values")
    return X


class DiffusionForecaster(BaseEstimator):
    """Non-autoregressive diffusion forecaster over a fixed horizon.

    Parameters mirror :class:`diffcast.pipeline.ModelConfig`; see the
    README for the full table. ``fit`` takes one time-major series and
    carves its own chronological train/validation split; ``predict`` takes
    a series whose last ``lookback`` rows form the conditioning window and
    returns a (horizon, variables) array averaged over ``sample_count``
    forecast draws.
    """

    def __init__(self, lookback=96, horizon=24, hidden=256, k_steps=100,
                 beta_start=1e-4, beta_end=0.1, mixup="soft", mixup_tau=0.5,
                 use_ar=True, head="data", learning_rate=1e-3, batch_size=64,
                 max_epochs=100, patience=10, ar_epochs=20, sample_count=10,
                 sampler_steps=None, train_stride=1, valid_steps=None,
                 valid_max_windows=None, valid_fraction=0.2, random_state=0):
        self.lookback = lookback
        self.horizon = horizon
        self.hidden = hidden
        self.k_steps = k_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.mixup = mixup
        self.mixup_tau = mixup_tau
        self.use_ar = use_ar
        self.head = head
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.ar_epochs = ar_epochs
        self.sample_count = sample_count
        self.sampler_steps = sampler_steps
        self.train_stride = train_stride
        self.valid_steps = valid_steps
        self.valid_max_windows = valid_max_windows
        self.valid_fraction = valid_fraction
        self.random_state = random_state

    def _config(self, d: int) -> ModelConfig:
        return ModelConfig(
            d=d, lookback=self.lookback, horizon=self.horizon, hidden=self.hidden,
            k_steps=self.k_steps, beta_start=self.beta_start, beta_end=self.beta_end,
            mixup=self.mixup, mixup_tau=self.mixup_tau, use_ar=self.use_ar,
            head=self.head, learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, ar_epochs=self.ar_epochs,
            sample_count=self.sample_count, sampler_steps=self.sampler_steps,
            train_stride=self.train_stride, valid_steps=self.valid_steps,
            valid_max_windows=self.valid_max_windows, seed=self.random_state,
        ).validate()

    def fit(self, X, y=None):
        span = self.lookback + self.horizon
        X = check_series(X, min_rows=2 * span, name="X")
        config = self._config(X.shape[1])
        if not 0.0 < self.valid_fraction < 1.0:
            raise DataError(f"valid_fraction must be in (0, 1), got {self.valid_fraction}")
        n_valid = max(span, int(round(X.shape[0] * self.valid_fraction)))
        if X.shape[0] - n_valid < span:
            raise DataError(f"series of length {X.shape[0]} too short for lookback+horizon={span} "
                            f"plus a validation tail of {n_valid} rows")
        names = [f"v{i}" for i in range(X.shape[1])]
        train_part = RawSeries(values=X[: X.shape[0] - n_valid], names=names)
        valid_part = RawSeries(values=X[X.shape[0] - n_valid :], names=names)
        train_w = sliding_windows(train_part, self.lookback, self.horizon, self.train_stride)
        valid_w = sliding_windows(valid_part, self.lookback, self.horizon)
        self.checkpoint_ = train_loop(train_w, valid_w, config)
        self.history_ = self.checkpoint_.history
        self.n_features_in_ = X.shape[1]
        return self

    def _require_fitted(self):
        if not hasattr(self, "checkpoint_"):
            raise DataError("this forecaster is not fitted yet; call fit first")

    def predict(self, X):
        """Mean forecast, shape (horizon, variables)."""
        self._require_fitted()
        X = check_series(X, min_rows=self.lookback)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"fitted on {self.n_features_in_} variables, got {X.shape[1]}")
        lookback = X[-self.lookback :].T
        rng = np.random.default_rng(self.random_state)
        return pipeline_predict(lookback, self.checkpoint_, rng=rng).T

    def sample(self, X, n_draws: int = 1, random_state: int | None = None):
        """Independent forecast draws, shape (n_draws, horizon, variables)."""
        self._require_fitted()
        X = check_series(X, min_rows=self.lookback)
        lookback = X[-self.lookback :].T
        rng = np.random.default_rng(self.random_state if random_state is None else random_state)
        return np.stack([pipeline_sample(lookback, self.checkpoint_, rng=rng).T for _ in range(n_draws)])
