"""Privileged-state soft actor-critic teacher.

The critic is a twin ensemble with Polyak-averaged targets. The actor step
minimizes ``E_s[entropy_temp * log pi(a|s) - min(q1, q2)(s, a)]`` with ``a``
reparameterized from the current policy.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .envs import EnvSpec
from .errors import ErrorCode, TeachLoopError
from .numcore import (
    AdamState,
    Mlp,
    Tensor,
    adam_step,
    backward,
    deterministic_action,
    forward,
    init_mlp,
    no_grad,
    policy_head,
    sample_squashed,
    zero_grad,
)
from .numcore.tensor import as_tensor, concat, mean, minimum, square
from .replay import Minibatch

DEFAULT_HIDDEN = (64, 64)


class CriticLike(Protocol):
    def min_q(self, states, actions, frozen: bool = False, target: bool = False) -> Tensor: ...


@dataclass
class CriticEnsemble:
    q1: Mlp
    q2: Mlp
    q1_target: Mlp
    q2_target: Mlp
    tau: float = 0.005

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Polyak tau must lie in [0, 1], got {self.tau}.")
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            if list(online.layer_dims) != list(target.layer_dims):
                raise TeachLoopError(
                    ErrorCode.DIMENSION_ERROR,
                    f"Target critic {target.layer_dims} differs from online critic {online.layer_dims}.",
                )

    def parameters(self) -> list[Tensor]:
        return self.q1.parameters() + self.q2.parameters()

    def q_values(self, states, actions, frozen: bool = False, target: bool = False) -> tuple[Tensor, Tensor]:
        first, second = (self.q1_target, self.q2_target) if target else (self.q1, self.q2)
        inputs = concat([as_tensor(states), as_tensor(actions)], axis=-1)
        return (
            forward(first, inputs, frozen=frozen or target)[..., 0],
            forward(second, inputs, frozen=frozen or target)[..., 0],
        )

    def min_q(self, states, actions, frozen: bool = False, target: bool = False) -> Tensor:
        q1, q2 = self.q_values(states, actions, frozen=frozen, target=target)
        return minimum(q1, q2)


def make_critics(
    state_dim: int,
    action_dim: int,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    activation: str = "tanh",
    tau: float = 0.005,
) -> CriticEnsemble:
    dims = [state_dim + action_dim, *hidden, 1]
    q1 = init_mlp(dims, rng, activation)
    q2 = init_mlp(dims, rng, activation)
    q1_target = Mlp(layer_dims=list(dims), activation=activation)
    q2_target = Mlp(layer_dims=list(dims), activation=activation)
    q1_target.copy_from(q1)
    q2_target.copy_from(q2)
    return CriticEnsemble(q1, q2, q1_target, q2_target, tau=tau)


@dataclass
class TeacherAgent:
    policy: Mlp
    critics: CriticEnsemble
    entropy_temp: float = 0.2
    gamma: float = 0.99
    action_low: float = -1.0
    action_high: float = 1.0
    policy_opt: AdamState = field(default_factory=lambda: AdamState(learning_rate=3e-4))
    critic_opt: AdamState = field(default_factory=lambda: AdamState(learning_rate=3e-4))
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    view: str = "state"
    updates: int = 0

    def __post_init__(self) -> None:
        if self.entropy_temp < 0.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"entropy_temp must be >= 0, got {self.entropy_temp}.")
        if not 0.0 < self.gamma <= 1.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"gamma must lie in (0, 1], got {self.gamma}.")

    @property
    def state_dim(self) -> int:
        return self.policy.input_dim

    @property
    def action_dim(self) -> int:
        return self.policy.output_dim // 2

    def named_tensors(self) -> dict[str, Tensor]:
        named = self.policy.named_parameters("policy.")
        named.update(self.critics.q1.named_parameters("q1."))
        named.update(self.critics.q2.named_parameters("q2."))
        named.update(self.critics.q1_target.named_parameters("q1_target."))
        named.update(self.critics.q2_target.named_parameters("q2_target."))
        return named

    def snapshot(self) -> "TeacherAgent":
        return copy.deepcopy(self)


def make_teacher(
    spec: EnvSpec,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    activation: str = "tanh",
    actor_lr: float = 3e-4,
    critic_lr: float = 3e-4,
    tau: float = 0.005,
    entropy_temp: float = 0.2,
    gamma: float | None = None,
) -> TeacherAgent:
    policy = init_mlp([spec.state_dim, *hidden, 2 * spec.action_dim], rng, activation)
    critics = make_critics(spec.state_dim, spec.action_dim, rng, hidden, activation, tau)
    return TeacherAgent(
        policy=policy,
        critics=critics,
        entropy_temp=float(entropy_temp),
        gamma=float(spec.gamma if gamma is None else gamma),
        action_low=spec.action_low,
        action_high=spec.action_high,
        policy_opt=AdamState(learning_rate=float(actor_lr)),
        critic_opt=AdamState(learning_rate=float(critic_lr)),
        rng=np.random.default_rng(rng.integers(0, 2**63)),
    )


def scale_to_bounds(action: np.ndarray, low: float, high: float) -> np.ndarray:
    return low + (np.asarray(action, dtype=np.float64) + 1.0) * 0.5 * (high - low)


def normalize_from_bounds(action: np.ndarray, low: float, high: float) -> np.ndarray:
    return 2.0 * (np.asarray(action, dtype=np.float64) - low) / (high - low) - 1.0


def ensure_finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise TeachLoopError(
            ErrorCode.NUMERIC_ERROR,
            f"{what} became non-finite ({value}).",
            hint="Lower the learning rate or entropy temperature.",
        )
    return value


def _check_nonempty(batch: Minibatch) -> None:
    if len(batch) == 0:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "Update called with an empty minibatch.")


def compute_td_targets(agent: TeacherAgent, batch: Minibatch, noise: np.ndarray | None = None) -> np.ndarray:
    """Soft Bellman targets ``r + gamma (1 - done) (min Q'(s', a') - temp log pi(a'|s'))``."""

    _check_nonempty(batch)
    with no_grad():
        head = policy_head(agent.policy, batch.s_next)
        if noise is None:
            noise = agent.rng.standard_normal(head.mean.shape)
        next_action, next_log_prob = sample_squashed(head, noise)
        q_next = agent.critics.min_q(batch.s_next, next_action, target=True)
        soft_value = q_next.data - agent.entropy_temp * next_log_prob.data
    not_done = 1.0 - batch.done.astype(np.float64)
    return batch.r + agent.gamma * not_done * soft_value


def critic_td_update(agent: TeacherAgent, batch: Minibatch) -> float:
    """One Adam step on the summed mean-squared TD error of both critics."""

    targets = compute_td_targets(agent, batch)
    actions = normalize_from_bounds(batch.a, agent.action_low, agent.action_high)
    q1, q2 = agent.critics.q_values(batch.s, actions)
    loss = mean(square(q1 - targets)) + mean(square(q2 - targets))
    value = ensure_finite(loss.item(), "Critic TD loss")

    params = agent.critics.parameters()
    zero_grad(params)
    backward(loss)
    adam_step(params, agent.critic_opt)
    return value


def actor_loss(agent: TeacherAgent, states, critics: CriticLike | None = None, noise: np.ndarray | None = None) -> Tensor:
    critics = agent.critics if critics is None else critics
    head = policy_head(agent.policy, states)
    if noise is None:
        noise = agent.rng.standard_normal(head.mean.shape)
    action, log_prob = sample_squashed(head, noise)
    q = critics.min_q(states, action, frozen=True)
    return mean(log_prob * agent.entropy_temp - q)


def actor_pmd_update(
    agent: TeacherAgent,
    batch: Minibatch,
    critics: CriticLike | None = None,
    noise: np.ndarray | None = None,
) -> float:
    """One Adam step on the soft policy objective; critics stay untouched."""

    _check_nonempty(batch)
    loss = actor_loss(agent, batch.s, critics=critics, noise=noise)
    value = ensure_finite(loss.item(), "Actor loss")

    params = agent.policy.parameters()
    zero_grad(params)
    backward(loss)
    adam_step(params, agent.policy_opt)
    agent.updates += 1
    return value


def polyak_update(critics: CriticEnsemble) -> None:
    tau = critics.tau
    for online, target in ((critics.q1, critics.q1_target), (critics.q2, critics.q2_target)):
        for src, dst in zip(online.parameters(), target.parameters()):
            dst.data = tau * src.data + (1.0 - tau) * dst.data


def act(agent: TeacherAgent, s, deterministic: bool = True, rng: np.random.Generator | None = None) -> np.ndarray:
    return policy_action(agent.policy, s, agent.action_low, agent.action_high, deterministic, rng)


def policy_action(
    policy: Mlp,
    x,
    low: float,
    high: float,
    deterministic: bool = True,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Bounded action for a single input vector or a batch of them."""

    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != policy.input_dim:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"Policy expects {policy.input_dim} inputs, got shape {x.shape}.",
        )
    with no_grad():
        head = policy_head(policy, x)
        if deterministic:
            action = deterministic_action(head).data
        else:
            if rng is None:
                raise TeachLoopError(ErrorCode.CONTRACT_ERROR, "Stochastic actions need an rng.")
            action, _ = sample_squashed(head, rng.standard_normal(head.mean.shape))
            action = action.data
    return scale_to_bounds(action, low, high)
