"""Adaptive-moment (Adam) optimizer state and update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ErrorCode, TeachLoopError
from .tensor import Tensor, all_finite


@dataclass
class AdamState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[Tensor], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place and return ``state``."""

    missing = [p.name or f"#{i}" for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise TeachLoopError(
            ErrorCode.CONTRACT_ERROR,
            f"adam_step called before gradients were populated for: {', '.join(missing)}.",
            hint="Run backward() on a loss that depends on every optimized parameter.",
        )

    if not all_finite(*(p.grad for p in params)):
        bad = [p.name or f"#{i}" for i, p in enumerate(params) if not all_finite(p.grad)]
        raise TeachLoopError(
            ErrorCode.NUMERIC_ERROR,
            f"Non-finite gradient for: {', '.join(bad)}.",
            hint="Lower the learning rate; parameters were left unchanged.",
        )

    if not state.first_moments:
        state.first_moments = [np.zeros_like(p.data) for p in params]
        state.second_moments = [np.zeros_like(p.data) for p in params]
    elif len(state.first_moments) != len(params) or any(
        m.shape != p.data.shape for m, p in zip(state.first_moments, params)
    ):
        raise TeachLoopError(
            ErrorCode.CONTRACT_ERROR,
            "Adam moment accumulators do not match the parameter list.",
        )

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for param, m, v in zip(params, state.first_moments, state.second_moments):
        g = param.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param.data -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return state
