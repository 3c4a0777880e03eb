from .checkpoint import CheckpointError, load, save
from .gradcheck import finite_diff_check
from .losses import (
    DomainError,
    LossKind,
    bce,
    bce_with_logits,
    cross_entropy,
    loss,
    masked_cross_entropy_logits,
    mse,
)
from .optim import Adam, AdamState, adam_step, uniform_init
from .tensor import (
    NotScalar,
    ShapeMismatch,
    Tape,
    Tensor,
    backward,
    matmul,
    no_grad,
    softmax_rows,
    zero_grad,
)

__all__ = [
    "Adam",
    "AdamState",
    "CheckpointError",
    "DomainError",
    "LossKind",
    "NotScalar",
    "ShapeMismatch",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "bce",
    "bce_with_logits",
    "cross_entropy",
    "finite_diff_check",
    "load",
    "loss",
    "masked_cross_entropy_logits",
    "matmul",
    "mse",
    "no_grad",
    "save",
    "softmax_rows",
    "uniform_init",
    "zero_grad",
]
