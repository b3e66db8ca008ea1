"""Training loops, evaluation protocol and ablation verdicts.

One loop serves every teacher-student variant: the teacher acts in the
environment, each transition lands in the shared replay buffer with its noisy
observation, and a single minibatch per iteration updates the teacher critic,
the teacher actor and the student. The IRL variant swaps the reward source
and adds the reward-model ascent steps. The two-stage baseline is separate
because there the student collects its own experience.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .envs import (
    CURRICULUM_SHAPES,
    ENV_NAMES,
    CurriculumSchedule,
    EnvSpec,
    EnvState,
    curriculum_alpha,
    make_env_spec,
    observe,
    random_action,
    reset,
    scripted_oracle,
    step,
)
from .errors import ErrorCode, TeachLoopError
from .irl import (
    EnvRewardSource,
    ImitationRewardSource,
    LearnedRewardSource,
    RewardModel,
    RewardSource,
    entropy_estimate,
    make_reward_model,
    student_reward_update,
    teacher_reward_update,
)
from .metrics import MetricsLog
from .numcore import save_checkpoint
from .replay import ExpertBuffer, ReplayBuffer, Transition, load_demonstrations, sample_minibatch
from .student import LOSS_MODES, StudentAgent, act_student, make_student, student_update
from .teacher import TeacherAgent, act, actor_pmd_update, critic_td_update, make_teacher, polyak_update

log = logging.getLogger(__name__)

ALGORITHMS = ("l2t_rl", "l2t_irl", "two_stage_bc")
REWARD_SOURCES = ("env", "imitation")


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "pendulum"
    horizon: int | None = None
    gamma: float = 0.99
    alpha: float = 0.4
    curriculum: str = "linear"
    ramp_fraction: float = 0.3
    algorithm: str = "l2t_rl"
    total_steps: int = 100_000
    warmup_steps: int = 1000
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    eval_interval: int = 5000
    eval_episodes: int = 5
    eval_workers: int = 1
    loss_log_interval: int = 1
    seed: int = 0
    reward_source: str = "env"
    demo_path: str | None = None
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    tau: float = 0.005
    teacher_entropy_temp: float = 0.2
    loss_mode: str = "combined"
    p_norm: int = 1
    student_lr: float = 3e-4
    log_std_weight: float = 0.0
    student_entropy_temp: float = 0.2
    psi_coeff: float = 0.1
    irl_eta: float = 3e-4
    output_bound: float = 10.0
    demo_episodes: int = 5
    baseline_steps: int = 0
    teacher_checkpoint: str | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Raise ``CONFIG_ERROR`` naming the offending key."""

        def fail(key: str, message: str) -> None:
            raise TeachLoopError(ErrorCode.CONFIG_ERROR, f"{key}: {message}")

        choices = {
            "env.name": (self.env, ENV_NAMES),
            "noise.curriculum": (self.curriculum, CURRICULUM_SHAPES),
            "train.algorithm": (self.algorithm, ALGORITHMS),
            "train.reward_source": (self.reward_source, REWARD_SOURCES),
            "student.loss_mode": (self.loss_mode, LOSS_MODES),
            "network.activation": (self.activation, ("tanh", "relu")),
        }
        for key, (value, allowed) in choices.items():
            if value not in allowed:
                fail(key, f"'{value}' is not one of {'|'.join(allowed)}.")

        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            fail("noise.alpha", f"must be a finite value >= 0, got {self.alpha}.")
        if not 0.0 <= self.ramp_fraction <= 1.0:
            fail("noise.ramp_fraction", "must lie in [0, 1].")
        if not 0.0 < self.gamma <= 1.0:
            fail("env.gamma", "must lie in (0, 1].")
        if self.horizon is not None and self.horizon < 1:
            fail("env.horizon", "must be >= 1 (or 0 for the environment default).")
        if self.total_steps < self.warmup_steps or self.warmup_steps < 0:
            fail("train.warmup_steps", "need total_steps >= warmup_steps >= 0.")
        for key, value in (
            ("train.batch_size", self.batch_size),
            ("train.buffer_capacity", self.buffer_capacity),
            ("train.eval_interval", self.eval_interval),
            ("train.eval_episodes", self.eval_episodes),
            ("train.eval_workers", self.eval_workers),
            ("train.loss_log_interval", self.loss_log_interval),
            ("irl.demo_episodes", self.demo_episodes),
        ):
            if value < 1:
                fail(key, f"must be >= 1, got {value}.")
        if not self.hidden or any(width < 1 for width in self.hidden):
            fail("network.hidden", "must be a nonempty list of positive widths.")
        for key, value in (
            ("teacher.actor_lr", self.actor_lr),
            ("teacher.critic_lr", self.critic_lr),
            ("student.lr", self.student_lr),
            ("irl.eta", self.irl_eta),
            ("irl.output_bound", self.output_bound),
        ):
            if not value > 0.0:
                fail(key, f"must be > 0, got {value}.")
        if not 0.0 <= self.tau <= 1.0:
            fail("teacher.tau", "must lie in [0, 1].")
        for key, value in (
            ("teacher.entropy_temp", self.teacher_entropy_temp),
            ("student.entropy_temp", self.student_entropy_temp),
            ("student.log_std_weight", self.log_std_weight),
            ("irl.psi_coeff", self.psi_coeff),
        ):
            if value < 0.0:
                fail(key, f"must be >= 0, got {value}.")
        if self.p_norm not in (1, 2):
            fail("student.p_norm", "must be 1 or 2.")
        if self.baseline_steps < 0:
            fail("baseline.student_steps", "must be >= 0.")

    @property
    def env_spec(self) -> EnvSpec:
        return make_env_spec(self.env, gamma=self.gamma, horizon=self.horizon)

    @property
    def curriculum_schedule(self) -> CurriculumSchedule:
        return CurriculumSchedule(
            alpha_target=self.alpha,
            ramp_steps=int(self.ramp_fraction * self.total_steps),
            shape=self.curriculum,
        )


@dataclass(frozen=True)
class EvalStats:
    return_mean: float
    return_std: float
    length_mean: float
    average_reward: float
    returns: tuple[float, ...] = ()

    def as_dict(self) -> dict[str, float]:
        return {
            "return_mean": self.return_mean,
            "return_std": self.return_std,
            "length_mean": self.length_mean,
            "average_reward": self.average_reward,
        }


@dataclass(frozen=True)
class EvalRecord:
    step: int
    teacher_return_mean: float
    teacher_return_std: float
    student_return_mean: float
    student_return_std: float
    episode_length_mean: float
    alpha_current: float
    teacher_average_reward: float = 0.0
    student_average_reward: float = 0.0

    @classmethod
    def from_stats(cls, step: int, teacher: EvalStats, student: EvalStats, alpha_current: float) -> "EvalRecord":
        return cls(
            step=step,
            teacher_return_mean=teacher.return_mean,
            teacher_return_std=teacher.return_std,
            student_return_mean=student.return_mean,
            student_return_std=student.return_std,
            episode_length_mean=student.length_mean,
            alpha_current=alpha_current,
            teacher_average_reward=teacher.average_reward,
            student_average_reward=student.average_reward,
        )


@dataclass
class InteractionCounters:
    """Environment steps attributed to each agent."""

    teacher_env_steps: int = 0
    student_env_steps: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"teacher_env_steps": self.teacher_env_steps, "student_env_steps": self.student_env_steps}


@dataclass
class TrainResult:
    teacher: TeacherAgent
    student: StudentAgent
    metrics: MetricsLog
    counters: InteractionCounters
    evals: list[EvalRecord] = field(default_factory=list)
    best_teacher: TeacherAgent | None = None
    best_teacher_return: float | None = None
    teacher_reward: RewardModel | None = None
    student_reward: RewardModel | None = None


class RandomPolicy:
    view = "state"

    def __init__(self, spec: EnvSpec) -> None:
        self.spec = spec

    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return random_action(self.spec, rng)


class OraclePolicy:
    view = "state"

    def __init__(self, spec: EnvSpec) -> None:
        self.spec = spec

    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return scripted_oracle(self.spec, x)


def _as_actor(agent) -> tuple[Callable[[np.ndarray, np.random.Generator], np.ndarray], str]:
    if isinstance(agent, TeacherAgent):
        return (lambda x, rng: act(agent, x, deterministic=True)), agent.view
    if isinstance(agent, StudentAgent):
        return (lambda x, rng: act_student(agent, x, deterministic=True)), agent.view
    return agent, getattr(agent, "view", "state")


def _run_episode(
    actor: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    view: str,
    spec: EnvSpec,
    alpha: float,
    rng: np.random.Generator,
    start: np.ndarray | None,
) -> tuple[float, int]:
    state = reset(spec, rng)
    if start is not None:
        state = EnvState(s=np.array(start, dtype=np.float64), t=0, done=False)
    total = 0.0
    while not state.done:
        x = observe(state.s, alpha, rng) if view == "observation" else state.s
        state, reward = step(spec, state, actor(x, rng))
        total += reward
    return total, state.t


def evaluate(
    agent,
    spec: EnvSpec,
    alpha: float,
    episodes: int,
    seed: int,
    workers: int = 1,
    start: np.ndarray | None = None,
) -> EvalStats:
    """Deterministic-action rollouts; observation-view agents see noise at ``alpha``.

    Each episode owns a generator spawned from ``seed``; results are reduced in
    episode order so ``workers`` never changes the outcome.
    """

    if episodes < 1:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"evaluate needs episodes >= 1, got {episodes}.")
    actor, view = _as_actor(agent)
    children = np.random.SeedSequence(seed).spawn(episodes)

    def run(child: np.random.SeedSequence) -> tuple[float, int]:
        return _run_episode(actor, view, spec, alpha, np.random.default_rng(child), start)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, children))
    else:
        outcomes = [run(child) for child in children]

    returns = np.array([ret for ret, _ in outcomes])
    lengths = np.array([length for _, length in outcomes], dtype=np.float64)
    return EvalStats(
        return_mean=float(returns.mean()),
        return_std=float(returns.std()),
        length_mean=float(lengths.mean()),
        average_reward=float(returns.sum() / lengths.sum()),
        returns=tuple(float(r) for r in returns),
    )


def random_policy_baseline(spec: EnvSpec, episodes: int = 100, seed: int = 0) -> EvalStats:
    return evaluate(RandomPolicy(spec), spec, 0.0, episodes, seed)


def oracle_gap_fraction(value: float, random_return: float, oracle_return: float) -> float:
    """Share of the random-to-oracle return gap closed by ``value``."""

    gap = oracle_return - random_return
    if gap <= 0.0:
        raise TeachLoopError(ErrorCode.CONTRACT_ERROR, "Oracle return does not exceed the random baseline.")
    return (value - random_return) / gap


def collect_oracle_demonstrations(spec: EnvSpec, episodes: int, seed: int) -> tuple[ExpertBuffer, np.ndarray]:
    """Scripted-oracle rollouts as an expert buffer, plus each episode's return."""

    if episodes < 1:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "Need at least one demonstration episode.")
    rollouts: list[tuple[np.ndarray, np.ndarray]] = []
    returns: list[float] = []
    for child in np.random.SeedSequence(seed).spawn(episodes):
        state = reset(spec, np.random.default_rng(child))
        states, actions, total = [], [], 0.0
        while not state.done:
            action = scripted_oracle(spec, state)
            states.append(state.s.copy())
            actions.append(action)
            state, reward = step(spec, state, action)
            total += reward
        rollouts.append((np.array(states), np.array(actions)))
        returns.append(total)
    return ExpertBuffer.from_episodes(rollouts), np.array(returns)


@dataclass
class _Streams:
    init: np.random.Generator
    env: np.random.Generator
    sample: np.random.Generator
    expert: np.random.Generator
    reward_init: np.random.Generator
    eval_seed: int

    @classmethod
    def from_seed(cls, seed: int) -> "_Streams":
        init, env, sample, expert, reward_init, evaluation = np.random.SeedSequence(seed).spawn(6)
        return cls(
            init=np.random.default_rng(init),
            env=np.random.default_rng(env),
            sample=np.random.default_rng(sample),
            expert=np.random.default_rng(expert),
            reward_init=np.random.default_rng(reward_init),
            eval_seed=int(evaluation.generate_state(1)[0]),
        )


def build_agents(cfg: ExperimentConfig, rng: np.random.Generator) -> tuple[TeacherAgent, StudentAgent]:
    spec = cfg.env_spec
    teacher = make_teacher(
        spec,
        rng,
        hidden=cfg.hidden,
        activation=cfg.activation,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        tau=cfg.tau,
        entropy_temp=cfg.teacher_entropy_temp,
        gamma=cfg.gamma,
    )
    student = make_student(
        spec,
        rng,
        hidden=cfg.hidden,
        activation=cfg.activation,
        lr=cfg.student_lr,
        loss_mode=cfg.loss_mode,
        p_norm=cfg.p_norm,
        log_std_weight=cfg.log_std_weight,
        entropy_temp=cfg.student_entropy_temp,
    )
    return teacher, student


def _abort_checkpoint(output_dir: Path | None, step_index: int, agents: dict[str, object]) -> None:
    if output_dir is None:
        return
    tensors = {}
    for name, agent in agents.items():
        if isinstance(agent, RewardModel):
            tensors.update(agent.named_tensors(f"{name}."))
        elif agent is not None:
            tensors.update(agent.named_tensors())
    path = save_checkpoint(Path(output_dir) / "nan-abort.ckpt", tensors, {"step": step_index, "reason": "non-finite loss"})
    log.error("Non-finite loss at step %d; diagnostic checkpoint written to %s", step_index, path)


def _eval_point(
    cfg: ExperimentConfig,
    spec: EnvSpec,
    teacher: TeacherAgent,
    student: StudentAgent,
    eval_seed: int,
    step_index: int,
    alpha_current: float,
) -> EvalRecord:
    teacher_stats = evaluate(teacher, spec, cfg.alpha, cfg.eval_episodes, eval_seed + step_index, cfg.eval_workers)
    # The student is always judged at the target noise level.
    student_stats = evaluate(student, spec, cfg.alpha, cfg.eval_episodes, eval_seed + step_index, cfg.eval_workers)
    return EvalRecord.from_stats(step_index, teacher_stats, student_stats, alpha_current)


def _log_eval(metrics: MetricsLog, record: EvalRecord, kind: str = "eval") -> None:
    metrics.append(
        kind,
        record.step,
        alpha_current=record.alpha_current,
        teacher={
            "return_mean": record.teacher_return_mean,
            "return_std": record.teacher_return_std,
            "average_reward": record.teacher_average_reward,
        },
        student={
            "return_mean": record.student_return_mean,
            "return_std": record.student_return_std,
            "average_reward": record.student_average_reward,
            "episode_length_mean": record.episode_length_mean,
        },
    )


def _make_reward(cfg: ExperimentConfig, input_dim: int, action_dim: int, rng: np.random.Generator) -> RewardModel:
    return make_reward_model(
        input_dim,
        action_dim,
        rng,
        hidden=cfg.hidden,
        activation=cfg.activation,
        eta=cfg.irl_eta,
        psi_coeff=cfg.psi_coeff,
        output_bound=cfg.output_bound,
    )


def _single_loop(
    cfg: ExperimentConfig,
    reward_source: RewardSource | None,
    demos: ExpertBuffer | None,
    output_dir: Path | None,
) -> TrainResult:
    """Shared trainer; ``reward_source=None`` learns teacher and student rewards from ``demos``."""

    spec = cfg.env_spec
    streams = _Streams.from_seed(cfg.seed)
    teacher, student = build_agents(cfg, streams.init)

    teacher_reward: RewardModel | None = None
    student_reward: RewardModel | None = None
    updates_rewards = reward_source is None
    if updates_rewards:
        teacher_reward = _make_reward(cfg, spec.state_dim, spec.action_dim, streams.reward_init)
        student_reward = _make_reward(cfg, spec.obs_dim, spec.action_dim, streams.reward_init)
        reward_source = LearnedRewardSource(teacher_reward)
    elif isinstance(reward_source, LearnedRewardSource):
        teacher_reward = reward_source.model
    if updates_rewards and (demos is None or len(demos) == 0):
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "Reward learning needs a nonempty expert buffer.")

    metrics = MetricsLog(Path(output_dir) / "metrics.jsonl" if output_dir is not None else None)
    counters = InteractionCounters()
    buffer = ReplayBuffer.for_env(spec, capacity=cfg.buffer_capacity)
    schedule = cfg.curriculum_schedule
    renoise = schedule.shape == "linear" and schedule.ramp_steps > 0
    result = TrainResult(teacher=teacher, student=student, metrics=metrics, counters=counters)
    result.teacher_reward = teacher_reward
    result.student_reward = student_reward

    state = reset(spec, streams.env)
    for k in range(cfg.total_steps):
        alpha_k = curriculum_alpha(schedule, k)
        if k < cfg.warmup_steps:
            action = random_action(spec, streams.env)
        else:
            action = act(teacher, state.s, deterministic=False, rng=streams.env)
        next_state, reward = step(spec, state, action)
        counters.teacher_env_steps += 1

        buffer.push(
            Transition(
                s=state.s,
                o=observe(state.s, alpha_k, streams.env),
                a=np.clip(action, spec.action_low, spec.action_high),
                r=reward,
                s_next=next_state.s,
                o_next=observe(next_state.s, alpha_k, streams.env),
                done=next_state.terminated,
                alpha_at_collection=alpha_k,
            )
        )
        state = reset(spec, streams.env) if next_state.done else next_state

        if k >= cfg.warmup_steps:
            batch = sample_minibatch(buffer, cfg.batch_size, streams.sample, student_alpha=alpha_k if renoise else None)
            if not isinstance(reward_source, EnvRewardSource):
                batch = batch.with_rewards(reward_source.rewards(batch))
            try:
                critic_loss = critic_td_update(teacher, batch)
                actor_loss = actor_pmd_update(teacher, batch)
                polyak_update(teacher.critics)
                report = student_update(student, teacher, batch)
                reward_objectives = None
                if updates_rewards:
                    expert = demos.sample(cfg.batch_size, streams.expert)
                    entropy = entropy_estimate(teacher.policy, batch.s, teacher.rng)
                    reward_objectives = (
                        teacher_reward_update(teacher_reward, expert, (batch.s, batch.a), entropy),
                        student_reward_update(student_reward, expert, (batch.o, batch.a)),
                    )
            except TeachLoopError as exc:
                if exc.code == ErrorCode.NUMERIC_ERROR:
                    _abort_checkpoint(
                        output_dir,
                        k,
                        {
                            "teacher": teacher,
                            "student": student,
                            "teacher_reward": teacher_reward,
                            "student_reward": student_reward,
                        },
                    )
                raise

            if (k - cfg.warmup_steps) % cfg.loss_log_interval == 0:
                metrics.append(
                    "loss",
                    k + 1,
                    teacher={"critic": critic_loss, "actor": actor_loss},
                    student=report.as_dict(),
                )
                if reward_objectives is not None:
                    metrics.append(
                        "reward",
                        k + 1,
                        teacher={"objective": reward_objectives[0]},
                        student={"objective": reward_objectives[1]},
                    )

        if (k + 1) % cfg.eval_interval == 0 or k + 1 == cfg.total_steps:
            record = _eval_point(cfg, spec, teacher, student, streams.eval_seed, k + 1, alpha_k)
            result.evals.append(record)
            _log_eval(metrics, record)
            if result.best_teacher_return is None or record.teacher_return_mean > result.best_teacher_return:
                result.best_teacher_return = record.teacher_return_mean
                result.best_teacher = teacher.snapshot()
            log.info(
                "step %d: teacher %.2f +/- %.2f, student %.2f +/- %.2f (alpha %.3f)",
                k + 1,
                record.teacher_return_mean,
                record.teacher_return_std,
                record.student_return_mean,
                record.student_return_std,
                alpha_k,
            )

    return result


def _require_algorithm(cfg: ExperimentConfig, expected: str) -> None:
    if cfg.algorithm != expected:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"train.algorithm: expected '{expected}' for this trainer, got '{cfg.algorithm}'.",
        )


def resolve_demonstrations(cfg: ExperimentConfig) -> ExpertBuffer:
    """Demonstrations from ``train.demo_path``, else fresh scripted-oracle rollouts."""

    spec = cfg.env_spec
    if cfg.demo_path:
        return load_demonstrations(cfg.demo_path, spec)
    demos, returns = collect_oracle_demonstrations(spec, cfg.demo_episodes, cfg.seed + 1)
    log.info("Generated %d oracle demonstration episodes (mean return %.2f)", cfg.demo_episodes, float(returns.mean()))
    return demos


def train_l2t_rl(cfg: ExperimentConfig, output_dir: Path | None = None, demos: ExpertBuffer | None = None) -> TrainResult:
    """Single-loop teacher-student RL; ``reward_source = imitation`` rewards closeness to demo states."""

    _require_algorithm(cfg, "l2t_rl")
    if cfg.reward_source == "imitation":
        demos = demos if demos is not None else resolve_demonstrations(cfg)
        demos.require_nonempty()
        source: RewardSource = ImitationRewardSource(demos.states)
    else:
        source = EnvRewardSource()
    return _single_loop(cfg, source, None, output_dir)


def train_l2t_irl(
    cfg: ExperimentConfig,
    demos: ExpertBuffer,
    output_dir: Path | None = None,
    fixed_reward: RewardSource | None = None,
) -> TrainResult:
    """Single loop with learned rewards; a ``fixed_reward`` source disables reward learning."""

    _require_algorithm(cfg, "l2t_irl")
    demos.require_nonempty()
    if fixed_reward is not None:
        if not fixed_reward.fixed:
            raise TeachLoopError(ErrorCode.CONTRACT_ERROR, "fixed_reward must be a source that is never updated.")
        return _single_loop(cfg, fixed_reward, demos, output_dir)
    return _single_loop(cfg, None, demos, output_dir)


def train_two_stage_bc(
    cfg: ExperimentConfig,
    frozen_teacher: TeacherAgent,
    output_dir: Path | None = None,
    student: StudentAgent | None = None,
) -> TrainResult:
    """Conventional second stage: the student gathers its own noisy experience.

    Every environment step here is charged to the student.
    """

    spec = cfg.env_spec
    streams = _Streams.from_seed(cfg.seed)
    _, fresh_student = build_agents(cfg, streams.init)
    # A caller-supplied student is copied so its own loss mode survives.
    student = fresh_student if student is None else student.snapshot()
    student.loss_mode = "bc_l1" if cfg.p_norm == 1 else "bc_l2"

    steps = cfg.baseline_steps or cfg.total_steps
    metrics = MetricsLog(Path(output_dir) / "metrics.jsonl" if output_dir is not None else None)
    counters = InteractionCounters()
    buffer = ReplayBuffer.for_env(spec, capacity=cfg.buffer_capacity)
    result = TrainResult(teacher=frozen_teacher, student=student, metrics=metrics, counters=counters)
    result.best_teacher = frozen_teacher

    teacher_stats = None
    state = reset(spec, streams.env)
    for k in range(steps):
        o = observe(state.s, cfg.alpha, streams.env)
        action = act_student(student, o, deterministic=False, rng=streams.env)
        next_state, reward = step(spec, state, action)
        counters.student_env_steps += 1
        buffer.push(
            Transition(
                s=state.s,
                o=o,
                a=action,
                r=reward,
                s_next=next_state.s,
                o_next=observe(next_state.s, cfg.alpha, streams.env),
                done=next_state.terminated,
                alpha_at_collection=cfg.alpha,
            )
        )
        state = reset(spec, streams.env) if next_state.done else next_state

        batch = sample_minibatch(buffer, cfg.batch_size, streams.sample)
        try:
            report = student_update(student, frozen_teacher, batch)
        except TeachLoopError as exc:
            if exc.code == ErrorCode.NUMERIC_ERROR:
                _abort_checkpoint(output_dir, k, {"student": student})
            raise
        if k % cfg.loss_log_interval == 0:
            metrics.append("loss", k + 1, student=report.as_dict())

        if (k + 1) % cfg.eval_interval == 0 or k + 1 == steps:
            if teacher_stats is None:
                teacher_stats = evaluate(frozen_teacher, spec, cfg.alpha, cfg.eval_episodes, streams.eval_seed, cfg.eval_workers)
            student_stats = evaluate(student, spec, cfg.alpha, cfg.eval_episodes, streams.eval_seed + k + 1, cfg.eval_workers)
            record = EvalRecord.from_stats(k + 1, teacher_stats, student_stats, cfg.alpha)
            result.evals.append(record)
            _log_eval(metrics, record, kind="baseline")

    return result


def ablation_verdict(series: Sequence[tuple[float, float]], tolerance: float = 0.0, max_inversions: int = 0) -> bool:
    """True when returns do not rise as alpha grows.

    Up to ``max_inversions`` rises strictly smaller than ``tolerance`` are forgiven.
    """

    if len(series) < 2:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "ablation_verdict needs at least two (alpha, return) points.")
    ordered = sorted(series, key=lambda point: point[0])
    inversions = 0
    for (_, current), (_, following) in zip(ordered[:-1], ordered[1:]):
        rise = following - current
        if rise <= 0.0:
            continue
        if rise < tolerance and inversions < max_inversions:
            inversions += 1
            continue
        return False
    return True


def variant_verdict(candidate: Sequence[float], reference: Sequence[float], strict: bool = False) -> bool:
    """Mean of ``candidate`` at least (or, with ``strict``, above) the mean of ``reference``."""

    if not candidate or not reference:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "variant_verdict needs returns for both variants.")
    lhs, rhs = float(np.mean(candidate)), float(np.mean(reference))
    return lhs > rhs if strict else lhs >= rhs


def spread_verdict(returns: dict[str, float], max_relative_gap: float = 0.15) -> bool:
    """All variants within ``max_relative_gap`` of each other, relative to the larger magnitude."""

    if len(returns) < 2:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "spread_verdict needs at least two variants.")
    values = list(returns.values())
    high, low = max(values), min(values)
    scale = max(abs(high), abs(low))
    if scale == 0.0:
        return True
    return (high - low) / scale <= max_relative_gap
