"""diffcast: non-autoregressive conditional diffusion forecasting."""

from .conditioning import (
    ArModel,
    CondNet,
    Condition,
    ar_pretrain,
    build_condition,
    future_mixup_infer,
    future_mixup_train,
    sample_mask,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import RawSeries, SeriesWindow, adf_statistic, chronological_split, load_csv, sliding_windows, synth_generate, univariate_extract
from .denoiser import Denoiser, StepEmbedding, sinusoidal_embedding
from .errors import CheckpointError, ConfigError, DataError, DiffcastError, GradCheckError, ShapeError, TrainingError
from .estimator import DiffusionForecaster, check_series
from .pipeline import (
    Checkpoint,
    ForecastModel,
    ModelConfig,
    NormStats,
    denormalize,
    evaluate_windows,
    instance_normalize,
    mse_eval,
    predict,
    sample,
    sample_chain,
    train_loop,
    train_step,
)
from .schedule import (
    DiffusionSchedule,
    build_cosine_schedule,
    denoise_step_data,
    denoise_step_noise,
    forward_sample,
    noise_pred_from_data_pred,
    posterior_mean,
    recover_x0,
    strided_subschedule,
)

__version__ = "0.1.0"
