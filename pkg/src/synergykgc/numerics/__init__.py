"""Dense float64 kernel with tape-based reverse-mode gradients."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numeric_grad, relative_error
from .init import glorot_uniform, spawn_rngs
from .optim import OptimizerState, adamw_step, clip_grad_norm
from .tensor import NumericError, Parameter, Tape, Tensor, active_tape, as_tensor, backward, no_tape, zero_grads

__all__ = [
    "ops", "Tensor", "Parameter", "Tape", "NumericError", "as_tensor", "backward", "no_tape", "active_tape",
    "zero_grads", "OptimizerState", "adamw_step", "clip_grad_norm", "check_gradients",
    "numeric_grad", "relative_error", "save_checkpoint", "load_checkpoint", "glorot_uniform",
    "spawn_rngs",
]
