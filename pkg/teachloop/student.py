"""Observation-space student policy trained only from replayed teacher experience."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvSpec
from .errors import ErrorCode, TeachLoopError
from .numcore import (
    AdamState,
    Mlp,
    Tensor,
    adam_step,
    backward,
    init_mlp,
    kl_diag_gaussian,
    no_grad,
    policy_head,
    sample_squashed,
    zero_grad,
)
from .numcore.tensor import mean, pnorm
from .replay import Minibatch
from .teacher import DEFAULT_HIDDEN, CriticLike, TeacherAgent, ensure_finite, policy_action

LOSS_MODES = ("bc_l1", "bc_l2", "kl", "asym", "combined")


@dataclass
class StudentAgent:
    policy: Mlp
    loss_mode: str = "combined"
    p_norm: int = 1
    log_std_weight: float = 0.0
    entropy_temp: float = 0.2
    action_low: float = -1.0
    action_high: float = 1.0
    opt: AdamState = field(default_factory=lambda: AdamState(learning_rate=3e-4))
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    view: str = "observation"
    updates: int = 0

    def __post_init__(self) -> None:
        if self.loss_mode not in LOSS_MODES:
            raise TeachLoopError(
                ErrorCode.INVALID_INPUT,
                f"Unknown student loss_mode '{self.loss_mode}'. Expected one of {'|'.join(LOSS_MODES)}.",
            )
        if self.p_norm not in (1, 2):
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Student p_norm must be 1 or 2, got {self.p_norm}.")
        if self.log_std_weight < 0.0 or self.entropy_temp < 0.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "log_std_weight and entropy_temp must be >= 0.")

    @property
    def obs_dim(self) -> int:
        return self.policy.input_dim

    @property
    def beta_s(self) -> float:
        return self.opt.learning_rate

    @property
    def bc_p(self) -> int:
        if self.loss_mode == "bc_l1":
            return 1
        if self.loss_mode == "bc_l2":
            return 2
        return self.p_norm

    def named_tensors(self) -> dict[str, Tensor]:
        return self.policy.named_parameters("student.")

    def snapshot(self) -> "StudentAgent":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class StudentLossReport:
    bc_component: float = 0.0
    asym_component: float = 0.0
    kl_component: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {"bc": self.bc_component, "asym": self.asym_component, "kl": self.kl_component, "total": self.total}


def make_student(
    spec: EnvSpec,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    activation: str = "tanh",
    lr: float = 3e-4,
    loss_mode: str = "combined",
    p_norm: int = 1,
    log_std_weight: float = 0.0,
    entropy_temp: float = 0.2,
) -> StudentAgent:
    policy = init_mlp([spec.obs_dim, *hidden, 2 * spec.action_dim], rng, activation)
    return StudentAgent(
        policy=policy,
        loss_mode=loss_mode,
        p_norm=int(p_norm),
        log_std_weight=float(log_std_weight),
        entropy_temp=float(entropy_temp),
        action_low=spec.action_low,
        action_high=spec.action_high,
        opt=AdamState(learning_rate=float(lr)),
        rng=np.random.default_rng(rng.integers(0, 2**63)),
    )


def _check_views(student: StudentAgent, teacher: TeacherAgent, batch: Minibatch) -> None:
    if len(batch) == 0:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "Student update called with an empty minibatch.")
    if batch.o.shape[-1] != student.obs_dim or batch.s.shape[-1] != teacher.state_dim:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"Batch views (o={batch.o.shape[-1]}, s={batch.s.shape[-1]}) do not match "
            f"student obs_dim={student.obs_dim} / teacher state_dim={teacher.state_dim}.",
        )
    if student.policy.output_dim != teacher.policy.output_dim:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            "Student and teacher policies disagree on action_dim.",
        )


def _teacher_head(teacher: TeacherAgent, states: np.ndarray):
    with no_grad():
        return policy_head(teacher.policy, states, frozen=True)


def bc_loss(student: StudentAgent, teacher: TeacherAgent, batch: Minibatch, p: int | None = None) -> Tensor:
    """Mean ``||mu_s(o) - mu_t(s)||_p`` over the batch, on pre-squash means."""

    _check_views(student, teacher, batch)
    p = student.bc_p if p is None else p
    target = _teacher_head(teacher, batch.s)
    head = policy_head(student.policy, batch.o)
    loss = mean(pnorm(head.mean - target.mean.data, p))
    if student.log_std_weight > 0.0:
        loss = loss + mean(pnorm(head.log_std - target.log_std.data, p)) * student.log_std_weight
    return loss


def kl_loss(student: StudentAgent, teacher: TeacherAgent, batch: Minibatch) -> Tensor:
    """Mean ``KL(p_s(.|o) || pi_t(.|s))`` with the teacher as a constant target."""

    _check_views(student, teacher, batch)
    target = _teacher_head(teacher, batch.s)
    head = policy_head(student.policy, batch.o)
    return mean(kl_diag_gaussian(head, target))


def asym_loss(
    student: StudentAgent,
    teacher: TeacherAgent,
    batch: Minibatch,
    critics: CriticLike | None = None,
    noise: np.ndarray | None = None,
) -> Tensor:
    """Student action from the observation, judged by the critic at the privileged state."""

    _check_views(student, teacher, batch)
    critics = teacher.critics if critics is None else critics
    head = policy_head(student.policy, batch.o)
    if noise is None:
        noise = student.rng.standard_normal(head.mean.shape)
    action, log_prob = sample_squashed(head, noise)
    q = critics.min_q(batch.s, action, frozen=True)
    return mean(log_prob * student.entropy_temp - q)


def student_update(
    student: StudentAgent,
    teacher: TeacherAgent,
    batch: Minibatch,
    critics: CriticLike | None = None,
    noise: np.ndarray | None = None,
) -> StudentLossReport:
    mode = student.loss_mode
    if mode in ("bc_l1", "bc_l2"):
        loss = bc_loss(student, teacher, batch)
        value = ensure_finite(loss.item(), f"Student {mode} loss")
        report = StudentLossReport(bc_component=value, total=value)
    elif mode == "kl":
        loss = kl_loss(student, teacher, batch)
        value = ensure_finite(loss.item(), "Student KL loss")
        report = StudentLossReport(kl_component=value, total=value)
    elif mode == "asym":
        loss = asym_loss(student, teacher, batch, critics=critics, noise=noise)
        value = ensure_finite(loss.item(), "Student asymmetric loss")
        report = StudentLossReport(asym_component=value, total=value)
    else:
        bc = bc_loss(student, teacher, batch)
        asym = asym_loss(student, teacher, batch, critics=critics, noise=noise)
        loss = bc + asym
        bc_value = ensure_finite(bc.item(), "Student BC loss")
        asym_value = ensure_finite(asym.item(), "Student asymmetric loss")
        report = StudentLossReport(bc_component=bc_value, asym_component=asym_value, total=bc_value + asym_value)

    params = student.policy.parameters()
    zero_grad(params)
    backward(loss)
    adam_step(params, student.opt)
    student.updates += 1
    return report


def act_student(student: StudentAgent, o, deterministic: bool = True, rng: np.random.Generator | None = None) -> np.ndarray:
    return policy_action(student.policy, o, student.action_low, student.action_high, deterministic, rng)
