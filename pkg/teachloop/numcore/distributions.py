"""Diagonal-Gaussian policy heads with tanh squashing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ErrorCode, TeachLoopError
from .nn import Mlp, forward
from .tensor import Tensor, as_tensor, clip, exp, log_one_minus_tanh_sq, square, sum_, tanh

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# tanh rounds to exactly +-1 in float64 beyond about 19.06.
PRE_SQUASH_LIMIT = 18.0


@dataclass
class DiagGaussianHead:
    """Pre-squash Gaussian ``N(mean, exp(log_std)^2)`` over the last axis."""

    mean: Tensor
    log_std: Tensor

    def __post_init__(self) -> None:
        self.mean = as_tensor(self.mean)
        self.log_std = as_tensor(self.log_std)
        if self.mean.shape != self.log_std.shape:
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"Head mean {self.mean.shape} and log_std {self.log_std.shape} differ in shape.",
            )

    @property
    def action_dim(self) -> int:
        return int(self.mean.shape[-1])

    def detach(self) -> "DiagGaussianHead":
        return DiagGaussianHead(self.mean.detach(), self.log_std.detach())


def policy_head(net: Mlp, inputs, frozen: bool = False) -> DiagGaussianHead:
    """Split a ``2 * action_dim`` network output into mean and clamped log_std."""

    out = forward(net, inputs, frozen=frozen)
    if out.shape[-1] % 2:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"Policy network output {out.shape[-1]} is not 2 * action_dim.",
        )
    half = out.shape[-1] // 2
    mean = out[..., :half]
    log_std = clip(out[..., half:], LOG_STD_MIN, LOG_STD_MAX)
    return DiagGaussianHead(mean, log_std)


def sample_squashed(head: DiagGaussianHead, noise) -> tuple[Tensor, Tensor]:
    """Reparameterized tanh-Gaussian draw and its log density.

    ``noise`` is standard normal with the head's shape. The log density carries
    the change-of-variables term ``-sum log(1 - action^2)``.
    """

    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1:] != head.mean.shape[-1:]:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"Noise shape {noise.shape} does not match action dim {head.action_dim}.",
        )
    pre = clip(head.mean + exp(head.log_std) * noise, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT)
    action = tanh(pre)
    gaussian = sum_((head.log_std + HALF_LOG_2PI) * -1.0 - 0.5 * noise * noise, axis=-1)
    log_prob = gaussian - sum_(log_one_minus_tanh_sq(pre), axis=-1)
    return action, log_prob


def deterministic_action(head: DiagGaussianHead) -> Tensor:
    return tanh(clip(head.mean, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT))


def kl_diag_gaussian(p: DiagGaussianHead, q: DiagGaussianHead) -> Tensor:
    """Closed-form ``KL(p || q)`` of the pre-squash Gaussians, summed over the last axis."""

    if p.mean.shape[-1] != q.mean.shape[-1]:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"KL between heads of action dim {p.action_dim} and {q.action_dim}.",
        )
    var_p = exp(p.log_std * 2.0)
    var_q = exp(q.log_std * 2.0)
    terms = (q.log_std - p.log_std) + (var_p + square(p.mean - q.mean)) / (var_q * 2.0) - 0.5
    return sum_(terms, axis=-1)
