"""Learned reward models and the reward side of the max-min imitation objective.

For a reward model ``r`` the ascent objective on one pair of minibatches is::

    mean(r(expert)) - mean(r(policy)) - psi * mean(r^2 over both batches)

The policy entropy term is independent of the reward parameters; it appears
only in :func:`irl_objective_value`.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import spearmanr

from .errors import ErrorCode, TeachLoopError
from .numcore import AdamState, Mlp, Tensor, adam_step, backward, forward, init_mlp, no_grad, policy_head, sample_squashed, zero_grad
from .numcore.tensor import mean, square, sum_
from .replay import Minibatch
from .teacher import DEFAULT_HIDDEN, ensure_finite

log = logging.getLogger(__name__)


@dataclass
class RewardModel:
    net: Mlp
    psi_coeff: float = 0.1
    output_bound: float = 10.0
    opt: AdamState = field(default_factory=lambda: AdamState(learning_rate=3e-4))
    updates: int = 0

    def __post_init__(self) -> None:
        if self.psi_coeff < 0.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"psi_coeff must be >= 0, got {self.psi_coeff}.")
        if self.output_bound <= 0.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"output_bound must be > 0, got {self.output_bound}.")
        if self.net.output_dim != 1:
            raise TeachLoopError(ErrorCode.DIMENSION_ERROR, "Reward network must have a single output.")

    @property
    def eta(self) -> float:
        return self.opt.learning_rate

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    def named_tensors(self, prefix: str = "reward.") -> dict[str, Tensor]:
        return self.net.named_parameters(prefix)

    def snapshot(self) -> "RewardModel":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class IrlBatchEstimate:
    policy_rewards: np.ndarray
    expert_rewards: np.ndarray


def make_reward_model(
    state_dim: int,
    action_dim: int,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    activation: str = "tanh",
    eta: float = 3e-4,
    psi_coeff: float = 0.1,
    output_bound: float = 10.0,
) -> RewardModel:
    net = init_mlp([state_dim + action_dim, *hidden, 1], rng, activation)
    return RewardModel(net=net, psi_coeff=float(psi_coeff), output_bound=float(output_bound), opt=AdamState(learning_rate=float(eta)))


def _pairs(model: RewardModel, states, actions) -> np.ndarray:
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.float64).reshape(states.shape[0], -1)
    joined = np.concatenate([states, actions], axis=-1)
    if joined.shape[-1] != model.input_dim:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"Reward model expects {model.input_dim} inputs per pair, got {joined.shape[-1]}.",
        )
    return joined


def _raw_rewards(model: RewardModel, states, actions) -> Tensor:
    return forward(model.net, _pairs(model, states, actions))[..., 0]


def estimate_rewards(model: RewardModel, states, actions) -> np.ndarray:
    with no_grad():
        raw = _raw_rewards(model, states, actions).data
    return np.clip(raw, -model.output_bound, model.output_bound)


def estimate_batch(model: RewardModel, expert: tuple[np.ndarray, np.ndarray], policy: tuple[np.ndarray, np.ndarray]) -> IrlBatchEstimate:
    return IrlBatchEstimate(
        policy_rewards=estimate_rewards(model, *policy),
        expert_rewards=estimate_rewards(model, *expert),
    )


def _reward_ascent_step(model: RewardModel, expert: tuple[np.ndarray, np.ndarray], policy: tuple[np.ndarray, np.ndarray], label: str) -> float:
    if len(expert[0]) == 0 or len(policy[0]) == 0:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"{label} update needs nonempty expert and policy batches.")

    # Separate passes keep identical batches cancelling exactly.
    expert_r = _raw_rewards(model, *expert)
    policy_r = _raw_rewards(model, *policy)
    count = expert_r.size + policy_r.size
    regularizer = (sum_(square(expert_r)) + sum_(square(policy_r))) * (1.0 / count)
    objective = mean(expert_r) - mean(policy_r) - regularizer * model.psi_coeff
    value = ensure_finite(objective.item(), f"{label} objective")

    params = model.net.parameters()
    zero_grad(params)
    backward(-objective)
    adam_step(params, model.opt)
    model.updates += 1
    return value


def teacher_reward_update(
    model: RewardModel,
    expert_batch: tuple[np.ndarray, np.ndarray],
    policy_batch: tuple[np.ndarray, np.ndarray],
    policy_entropy_estimate: float = 0.0,
) -> float:
    """One ascent step on the teacher reward; returns the objective including ``-H``."""

    value = _reward_ascent_step(model, expert_batch, policy_batch, "Teacher reward")
    return value - float(policy_entropy_estimate)


def student_reward_update(
    model: RewardModel,
    expert_batch: tuple[np.ndarray, np.ndarray],
    policy_batch: tuple[np.ndarray, np.ndarray],
) -> float:
    """Same ascent rule on ``(o, a)`` policy pairs against noiseless expert pairs."""

    return _reward_ascent_step(model, expert_batch, policy_batch, "Student reward")


def irl_objective_value(
    model: RewardModel,
    expert_batch: tuple[np.ndarray, np.ndarray],
    policy_batch: tuple[np.ndarray, np.ndarray],
    entropy_estimate: float = 0.0,
) -> float:
    est = estimate_batch(model, expert_batch, policy_batch)
    joined = np.concatenate([est.expert_rewards, est.policy_rewards])
    return float(
        est.expert_rewards.mean()
        - est.policy_rewards.mean()
        - float(entropy_estimate)
        - model.psi_coeff * float(np.mean(joined * joined))
    )


def entropy_estimate(policy: Mlp, inputs: np.ndarray, rng: np.random.Generator) -> float:
    """Monte-Carlo ``-E[log pi(a|x)]`` with one squashed sample per input."""

    with no_grad():
        head = policy_head(policy, inputs)
        _, log_prob = sample_squashed(head, rng.standard_normal(head.mean.shape))
    return -float(np.mean(log_prob.data))


def reward_rank_correlation(model: RewardModel, states, actions, true_rewards) -> float:
    estimates = estimate_rewards(model, states, actions)
    rho = spearmanr(estimates, np.asarray(true_rewards, dtype=np.float64)).correlation
    if not np.isfinite(rho):
        log.debug("Rank correlation undefined for constant rewards; reporting 0.")
        return 0.0
    return float(rho)


class RewardSource(Protocol):
    """Supplies the rewards the critic trains on; ``fixed`` sources are never updated."""

    fixed: bool

    def rewards(self, batch: Minibatch) -> np.ndarray: ...


class EnvRewardSource:
    fixed = True

    def rewards(self, batch: Minibatch) -> np.ndarray:
        return batch.r


class LearnedRewardSource:
    fixed = False

    def __init__(self, model: RewardModel) -> None:
        self.model = model

    def rewards(self, batch: Minibatch) -> np.ndarray:
        return estimate_rewards(self.model, batch.s, batch.a)


class FixedModelRewardSource(LearnedRewardSource):
    """A reward model used as-is, without ascent updates."""

    fixed = True


class ImitationRewardSource:
    """``-min_j ||s - s*_j||`` over demonstration states."""

    fixed = True

    def __init__(self, demo_states: np.ndarray) -> None:
        demo_states = np.asarray(demo_states, dtype=np.float64)
        if demo_states.ndim != 2 or demo_states.shape[0] == 0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "Imitation reward needs a nonempty 2-D array of demo states.")
        self._tree = cKDTree(demo_states)

    def distances(self, states: np.ndarray) -> np.ndarray:
        dist, _ = self._tree.query(np.atleast_2d(np.asarray(states, dtype=np.float64)), k=1)
        return np.asarray(dist, dtype=np.float64)

    def rewards(self, batch: Minibatch) -> np.ndarray:
        return -self.distances(batch.s)
