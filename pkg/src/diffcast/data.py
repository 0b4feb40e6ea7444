"""Dataset handling: CSV ingestion, chronological splits, sliding windows,
univariate extraction, synthetic series, and the ADF stationarity statistic.

Series are stored time-major, (observations, variables); windows are
channel-major, (variables, length), matching the model's layout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

SYNTH_KINDS = ("sine_mix", "trend_sine", "random_walk")

# sine_mix component periods (steps) and amplitudes, shared by all variables
SINE_MIX_PERIODS = (24, 64)
SINE_MIX_AMPLITUDES = (1.0, 0.6)


@dataclass
class RawSeries:
    values: np.ndarray                      # (N, d) float64, no missing cells
    names: list[str]
    freq: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"series values must be 2-D (observations, variables), got shape {self.values.shape}")
        bad = np.argwhere(~np.isfinite(self.values))
        if len(bad):
            r, c = bad[0]
            raise DataError(f"missing or non-finite value at row {int(r)}, column {int(c)}")
        if len(self.names) != self.values.shape[1]:
            raise DataError(f"{len(self.names)} names for {self.values.shape[1]} variables")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass
class SeriesWindow:
    lookback: np.ndarray   # (d, L)
    target: np.ndarray     # (d, H)
    origin: int            # index of the first lookback row in the source split


def load_csv(path) -> RawSeries:
    """Read a header-ed CSV into a RawSeries.

    The first column is skipped when its cells are not numeric (timestamp
    column); all remaining cells must parse as floats.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise DataError(f"empty file: {path}")
    header, data_rows = rows[0], rows[1:]
    if not data_rows:
        raise DataError(f"no data rows in {path}")
    skip_first = False
    try:
        float(data_rows[0][0])
    except ValueError:
        skip_first = True
    start = 1 if skip_first else 0
    names = [h.strip() for h in header[start:]]
    values = np.empty((len(data_rows), len(names)))
    for i, row in enumerate(data_rows):
        if len(row) != len(header):
            raise DataError(f"row {i + 1} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row[start:]):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell at row {i + 1}, column '{header[start + j]}': {cell!r}") from None
    return RawSeries(values=values, names=names)


def write_csv(path, series: RawSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.names)
        for row in series.values:
            writer.writerow([repr(v) for v in row])


def chronological_split(series: RawSeries, ratios, *, min_length: int = 1):
    """Order-preserving partition into (train, valid, test).

    Boundary rows go by floor division, remainder to the last split, so the
    three pieces concatenate back to the original series exactly.
    """
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"need three positive split ratios, got {ratios}")
    total = sum(ratios)
    n = series.n
    n0 = int(math.floor(n * ratios[0] / total))
    n1 = int(math.floor(n * ratios[1] / total))
    sizes = (n0, n1, n - n0 - n1)
    if any(s < min_length for s in sizes):
        raise DataError(f"split sizes {sizes} fall below the minimum usable length {min_length}")
    parts = []
    start = 0
    for s in sizes:
        parts.append(RawSeries(values=series.values[start : start + s].copy(),
                               names=list(series.names), freq=series.freq))
        start += s
    return tuple(parts)


def sliding_windows(split: RawSeries, lookback: int, horizon: int, stride: int = 1) -> list[SeriesWindow]:
    """All contiguous (lookback, target) pairs at the given stride."""
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ConfigError(f"lookback, horizon and stride must be >= 1, got ({lookback}, {horizon}, {stride})")
    span = lookback + horizon
    if split.n < span:
        raise DataError(f"split of length {split.n} is shorter than lookback + horizon = {span}")
    windows = []
    for start in range(0, split.n - span + 1, stride):
        chunk = split.values[start : start + span].T  # (d, span)
        windows.append(SeriesWindow(lookback=chunk[:, :lookback].copy(),
                                    target=chunk[:, lookback:].copy(),
                                    origin=start))
    return windows


def univariate_extract(series: RawSeries, mode: str = "last_variable") -> list[RawSeries]:
    """Univariate views: either the last variable only, or one per variable."""
    if mode == "last_variable":
        cols = [series.d - 1]
    elif mode == "per_variable":
        cols = list(range(series.d))
    else:
        raise ConfigError(f"unknown univariate mode '{mode}'")
    return [RawSeries(values=series.values[:, [c]].copy(), names=[series.names[c]], freq=series.freq)
            for c in cols]


def synth_generate(kind: str, d: int, n: int, noise_std: float, seed: int) -> RawSeries:
    """Deterministic synthetic series for desk-scale experiments.

    sine_mix: per variable, two sinusoids (periods 24 and 64) with random
    phases plus Gaussian noise. trend_sine: linear trend plus one sinusoid
    plus noise. random_walk: cumulative sum of Gaussian steps.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown synthetic kind '{kind}' (choose from {', '.join(SYNTH_KINDS)})")
    if d < 1 or n < 1:
        raise ConfigError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    rng = np.random.default_rng(seed)
    t = np.arange(n)[:, None]
    if kind == "sine_mix":
        values = np.zeros((n, d))
        for period, amp in zip(SINE_MIX_PERIODS, SINE_MIX_AMPLITUDES):
            phase = rng.uniform(0.0, 2.0 * np.pi, size=d)
            values += amp * np.sin(2.0 * np.pi * t / period + phase)
        values += noise_std * rng.standard_normal((n, d))
    elif kind == "trend_sine":
        slope = 3.0 * (np.arange(d) + 1.0) / n
        phase = rng.uniform(0.0, 2.0 * np.pi, size=d)
        values = slope * t + np.sin(2.0 * np.pi * t / 48.0 + phase)
        values += noise_std * rng.standard_normal((n, d))
    else:  # random_walk
        scale = noise_std if noise_std > 0 else 1.0
        values = np.cumsum(scale * rng.standard_normal((n, d)), axis=0)
    names = [f"v{i}" for i in range(d)]
    return RawSeries(values=values, names=names, freq="synthetic")


def sine_mix_period() -> int:
    """Composite period of the noiseless sine_mix generator."""
    return math.lcm(*SINE_MIX_PERIODS)


def adf_statistic(series: np.ndarray, lag_order: int = 1) -> float:
    """Augmented Dickey-Fuller t-statistic (constant, no trend).

    Regresses the first difference on a constant, the lagged level, and
    ``lag_order`` lagged differences, and returns the t-statistic of the
    lagged-level coefficient. Strongly negative values indicate
    stationarity; no p-value is computed.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    p = int(lag_order)
    if p < 0:
        raise ConfigError(f"lag order must be >= 0, got {p}")
    n_regressors = p + 2
    if len(x) <= p + 2 + n_regressors:
        raise DataError(f"series of length {len(x)} too short for lag order {p}")
    dx = np.diff(x)
    # rows t = p+1 .. N-1 of: dx_t = a + g*x_{t-1} + sum_i d_i * dx_{t-i} + e
    y = dx[p:]
    cols = [np.ones_like(y), x[p:-1]]
    for i in range(1, p + 1):
        cols.append(dx[p - i : len(dx) - i])
    design = np.column_stack(cols)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DataError("singular design matrix in ADF regression")
    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    dof = design.shape[0] - design.shape[1]
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return float(beta[1] / np.sqrt(cov[1, 1]))
