"""Variance schedule and the closed-form noising/denoising algebra.

Arrays are indexed directly by diffusion step k = 1..K, with slot 0 holding
the k=0 conventions (beta[0] = 0, alpha_bar[0] = 1) so the k=1 formulas are
well-defined. Under these conventions the first denoising step carries no
injected noise (sigma[1] = 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray          # length K+1; beta[0] = 0 by convention
    alpha: np.ndarray         # 1 - beta; alpha[0] = 1
    alpha_bar: np.ndarray     # cumulative product of alpha; alpha_bar[0] = 1
    beta_tilde: np.ndarray    # posterior variance; beta_tilde[1] = 0
    sigma: np.ndarray         # sqrt(beta_tilde)

    @property
    def K(self) -> int:
        return len(self.beta) - 1


def build_cosine_schedule(K: int = 100, beta_start: float = 1e-4, beta_end: float = 0.1) -> DiffusionSchedule:
    """Raised-cosine interpolation of beta between the two endpoints.

    beta_1 = beta_start and beta_K = beta_end exactly; beta is strictly
    increasing and smooth in between.
    """
    if K < 2:
        raise ConfigError(f"schedule needs K >= 2 steps, got {K}")
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ConfigError(f"schedule endpoints must satisfy 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})")
    k = np.arange(1, K + 1)
    # convex-combination form keeps both endpoints exact in floating point
    t = 0.5 * (1.0 - np.cos(np.pi * (k - 1) / (K - 1)))
    beta = np.concatenate([[0.0], beta_start * (1.0 - t) + beta_end * t])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    beta_tilde = np.zeros_like(beta)
    beta_tilde[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    return DiffusionSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar,
                             beta_tilde=beta_tilde, sigma=np.sqrt(beta_tilde))


def _check_step(k: int, schedule: DiffusionSchedule) -> None:
    if not 1 <= k <= schedule.K:
        raise ConfigError(f"diffusion step k={k} out of range 1..{schedule.K}")


def forward_sample(x0: np.ndarray, k: int, schedule: DiffusionSchedule, noise: np.ndarray) -> np.ndarray:
    """Diffuse x0 straight to step k: sqrt(ab_k) x0 + sqrt(1 - ab_k) noise."""
    _check_step(k, schedule)
    ab = schedule.alpha_bar[k]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def forward_sample_batch(x0: np.ndarray, k: np.ndarray, schedule: DiffusionSchedule, noise: np.ndarray) -> np.ndarray:
    """Vectorized forward_sample with a per-element step array k of shape (batch,)."""
    k = np.asarray(k)
    if np.any(k < 1) or np.any(k > schedule.K):
        raise ConfigError(f"diffusion steps out of range 1..{schedule.K}")
    ab = schedule.alpha_bar[k][:, None, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def recover_x0(xk: np.ndarray, k: int, schedule: DiffusionSchedule, noise: np.ndarray) -> np.ndarray:
    """Invert forward_sample given the same noise draw."""
    _check_step(k, schedule)
    ab = schedule.alpha_bar[k]
    return (xk - np.sqrt(1.0 - ab) * noise) / np.sqrt(ab)


def posterior_mean(x0: np.ndarray, xk: np.ndarray, k: int, schedule: DiffusionSchedule) -> np.ndarray:
    """Mean of the reverse-step distribution given both endpoints x0 and xk."""
    _check_step(k, schedule)
    ab_k = schedule.alpha_bar[k]
    ab_prev = schedule.alpha_bar[k - 1]
    coef_x0 = np.sqrt(ab_prev) * schedule.beta[k] / (1.0 - ab_k)
    coef_xk = np.sqrt(schedule.alpha[k]) * (1.0 - ab_prev) / (1.0 - ab_k)
    return coef_x0 * x0 + coef_xk * xk


def denoise_step_data(xk: np.ndarray, k: int, x0_pred: np.ndarray, schedule: DiffusionSchedule,
                      noise: np.ndarray | None = None, *, k_to: int | None = None) -> np.ndarray:
    """One backward step under the data-prediction parameterization.

    Maps x^k to x^{k_to} (default k_to = k-1) using the posterior mean with
    x0 replaced by the model prediction, plus sigma-scaled noise. For
    k_to < k-1 the skipped sub-chain is collapsed into a single step with
    composite alpha ratio alpha_bar[k] / alpha_bar[k_to]; at k_to = 0 the
    noise variance vanishes, so the k=1 step is noiseless by construction.
    """
    _check_step(k, schedule)
    if k_to is None:
        k_to = k - 1
    if not 0 <= k_to < k:
        raise ConfigError(f"target step k_to={k_to} must lie in 0..{k - 1}")
    ab_hi = schedule.alpha_bar[k]
    ab_lo = schedule.alpha_bar[k_to]
    alpha_eff = ab_hi / ab_lo
    beta_eff = 1.0 - alpha_eff
    coef_xk = np.sqrt(alpha_eff) * (1.0 - ab_lo) / (1.0 - ab_hi)
    coef_pred = np.sqrt(ab_lo) * beta_eff / (1.0 - ab_hi)
    out = coef_xk * xk + coef_pred * x0_pred
    if noise is not None and k_to >= 1:
        var = (1.0 - ab_lo) / (1.0 - ab_hi) * beta_eff
        out = out + np.sqrt(var) * noise
    return out


def denoise_step_noise(xk: np.ndarray, k: int, eps_pred: np.ndarray, schedule: DiffusionSchedule,
                       noise: np.ndarray | None = None) -> np.ndarray:
    """One backward step under the noise-prediction parameterization."""
    _check_step(k, schedule)
    a = schedule.alpha[k]
    ab = schedule.alpha_bar[k]
    out = xk / np.sqrt(a) - (1.0 - a) / (np.sqrt(1.0 - ab) * np.sqrt(a)) * eps_pred
    if noise is not None and k > 1:
        out = out + schedule.sigma[k] * noise
    return out


def noise_pred_from_data_pred(xk: np.ndarray, k: int, x0_pred: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """Noise implied by a data prediction: (x^k - sqrt(ab_k) x0) / sqrt(1 - ab_k)."""
    _check_step(k, schedule)
    ab = schedule.alpha_bar[k]
    return (xk - np.sqrt(ab) * x0_pred) / np.sqrt(1.0 - ab)


def strided_subschedule(schedule: DiffusionSchedule, steps: int) -> list[int]:
    """Evenly spaced decreasing subset of {K, ..., 1} with both endpoints kept.

    The sampler visits consecutive selected steps, collapsing each gap into
    one composite denoising step, so the denoiser is evaluated exactly
    ``steps`` times.
    """
    if not 1 <= steps <= schedule.K:
        raise ConfigError(f"sampler steps must be in 1..{schedule.K}, got {steps}")
    ks = np.round(np.linspace(schedule.K, 1, steps)).astype(int)
    out: list[int] = []
    for k in ks:
        if not out or k < out[-1]:
            out.append(int(k))
    return out


def schedule_from_beta(beta_1_to_K: np.ndarray) -> DiffusionSchedule:
    """Rebuild the derived arrays from a stored beta sequence (checkpoint load)."""
    beta_1_to_K = np.asarray(beta_1_to_K, dtype=np.float64)
    if beta_1_to_K.ndim != 1 or len(beta_1_to_K) < 2:
        raise ShapeError(f"beta must be a 1-D array of length >= 2, got shape {beta_1_to_K.shape}")
    beta = np.concatenate([[0.0], beta_1_to_K])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    beta_tilde = np.zeros_like(beta)
    beta_tilde[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    return DiffusionSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar,
                             beta_tilde=beta_tilde, sigma=np.sqrt(beta_tilde))
