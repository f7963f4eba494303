"""Float64 autodiff tensors, nn building blocks, optimizers, checkpoints."""

from .tensor import (
    MissingGradError,
    NonFiniteError,
    Tensor,
    backward,
    bce_loss,
    clip,
    concat,
    constant,
    cos,
    div,
    exp,
    gather,
    grad_enabled,
    leaky_relu,
    log,
    matmul,
    no_grad,
    parameter,
    scatter_rows,
    segment_sum,
    sigmoid,
    softmax,
    tanh,
    tensor_mean,
    tensor_sum,
)
from .params import ParameterSet, xavier_uniform
from .nn import EmbeddingTable, GruCell, Linear, Mlp, TimeEncoder
from .optim import Adam, Sgd, make_optimizer
from .checkpoint import CheckpointError, read_blob, write_blob

__all__ = [
    "Adam",
    "CheckpointError",
    "EmbeddingTable",
    "GruCell",
    "Linear",
    "MissingGradError",
    "Mlp",
    "NonFiniteError",
    "ParameterSet",
    "Sgd",
    "Tensor",
    "TimeEncoder",
    "backward",
    "bce_loss",
    "clip",
    "concat",
    "constant",
    "cos",
    "div",
    "exp",
    "gather",
    "grad_enabled",
    "leaky_relu",
    "log",
    "make_optimizer",
    "matmul",
    "no_grad",
    "parameter",
    "read_blob",
    "scatter_rows",
    "segment_sum",
    "sigmoid",
    "softmax",
    "tanh",
    "tensor_mean",
    "tensor_sum",
    "write_blob",
    "xavier_uniform",
]
