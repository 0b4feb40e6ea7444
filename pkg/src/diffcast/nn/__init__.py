from .gradcheck import finite_diff_check
from .layers import (
    BatchNorm1d,
    Conv1d,
    ConvBlock,
    Dense,
    Dropout,
    Layer,
    LeakyReLU,
    Sequential,
    SiLU,
    TimeProjection,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout,
    dropout_grad,
    leaky_relu,
    leaky_relu_grad,
    load_arrays,
    sigmoid,
    silu,
    silu_grad,
    uniform_init,
)
from .optim import Adam

__all__ = [
    "Adam",
    "BatchNorm1d",
    "Conv1d",
    "ConvBlock",
    "Dense",
    "Dropout",
    "Layer",
    "LeakyReLU",
    "Sequential",
    "SiLU",
    "TimeProjection",
    "conv1d_backward",
    "conv1d_forward",
    "dense_backward",
    "dense_forward",
    "dropout",
    "dropout_grad",
    "finite_diff_check",
    "leaky_relu",
    "leaky_relu_grad",
    "load_arrays",
    "sigmoid",
    "silu",
    "silu_grad",
    "uniform_init",
]
