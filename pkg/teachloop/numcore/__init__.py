"""Small float64 autodiff and network toolkit used by every learned component."""

from .checkpoint import assign_tensors, load_checkpoint, save_checkpoint
from .distributions import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    DiagGaussianHead,
    deterministic_action,
    kl_diag_gaussian,
    policy_head,
    sample_squashed,
)
from .nn import Mlp, forward, init_mlp
from .optim import AdamState, adam_step
from .tensor import Tensor, as_tensor, backward, no_grad, zero_grad

__all__ = [
    "AdamState",
    "DiagGaussianHead",
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "Mlp",
    "Tensor",
    "adam_step",
    "as_tensor",
    "assign_tensors",
    "backward",
    "deterministic_action",
    "forward",
    "init_mlp",
    "kl_diag_gaussian",
    "load_checkpoint",
    "no_grad",
    "policy_head",
    "sample_squashed",
    "save_checkpoint",
    "zero_grad",
]
