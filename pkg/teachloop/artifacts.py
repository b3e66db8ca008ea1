"""Run-directory artifacts: resolved config, provenance and agent checkpoints."""

from __future__ import annotations

import json
import logging
import subprocess
from pathlib import Path

import numpy as np

from .config import dump_config
from .errors import ErrorCode, TeachLoopError
from .irl import RewardModel
from .numcore import assign_tensors, load_checkpoint, save_checkpoint
from .orchestrator import ExperimentConfig, TrainResult, build_agents
from .student import StudentAgent
from .teacher import TeacherAgent

log = logging.getLogger(__name__)

ROLES = ("teacher", "student", "reward")


def git_revision(path: Path | str = ".") -> str:
    try:
        completed = subprocess.run(
            ["git", "-C", str(path), "describe", "--always", "--dirty"],
            check=True,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except (OSError, subprocess.CalledProcessError):
        return "unknown"
    return completed.stdout.strip() or "unknown"


def write_run_config(run_dir: Path, config: dict) -> Path:
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "config.resolved.toml"
    path.write_text(dump_config(config), encoding="utf-8")
    return path


def write_provenance(run_dir: Path, cfg: ExperimentConfig, version: str) -> Path:
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "provenance.json"
    payload = {
        "version": version,
        "revision": git_revision(),
        "seed": cfg.seed,
        "algorithm": cfg.algorithm,
        "env": cfg.env,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _metadata(cfg: ExperimentConfig, role: str, **extra) -> dict:
    return {
        "role": role,
        "env": cfg.env,
        "hidden": list(cfg.hidden),
        "activation": cfg.activation,
        **extra,
    }


def save_teacher(path: Path, teacher: TeacherAgent, cfg: ExperimentConfig, **extra) -> Path:
    return save_checkpoint(path, teacher.named_tensors(), _metadata(cfg, "teacher", updates=teacher.updates, **extra))


def save_student(path: Path, student: StudentAgent, cfg: ExperimentConfig, **extra) -> Path:
    return save_checkpoint(path, student.named_tensors(), _metadata(cfg, "student", updates=student.updates, **extra))


def save_reward(path: Path, model: RewardModel, cfg: ExperimentConfig, view: str) -> Path:
    return save_checkpoint(path, model.named_tensors(),_metadata(cfg, "reward", view=view, updates=model.updates))


def save_run_checkpoints(run_dir: Path, result: TrainResult, cfg: ExperimentConfig) -> dict[str, str]:
    """Final agents, the best teacher seen at evaluation, and any learned rewards."""

    written = {"student": save_student(run_dir / "student.ckpt", result.student, cfg)}
    if cfg.algorithm != "two_stage_bc":
        steps = result.counters.teacher_env_steps
        written["teacher"] = save_teacher(run_dir / "teacher.ckpt", result.teacher, cfg, teacher_env_steps=steps)
        if result.best_teacher is not None:
            written["best_teacher"] = save_teacher(
                run_dir / "best-teacher.ckpt",
                result.best_teacher,
                cfg,
                teacher_env_steps=steps,
                eval_return=result.best_teacher_return,
            )
    if result.teacher_reward is not None:
        written["teacher_reward"] = save_reward(run_dir / "reward-teacher.ckpt", result.teacher_reward, cfg, "state")
    if result.student_reward is not None:
        written["student_reward"] = save_reward(run_dir / "reward-student.ckpt", result.student_reward, cfg, "observation")
    return {name: str(path) for name, path in written.items()}


def _check_metadata(metadata: dict, cfg: ExperimentConfig, path: Path, role: str | None) -> str:
    found = metadata.get("role")
    if found not in ROLES:
        raise TeachLoopError(ErrorCode.PARSE_ERROR, f"Checkpoint {path} does not record an agent role.")
    if role is not None and found != role:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Checkpoint {path} holds a {found}, expected a {role}.")
    if metadata.get("env") != cfg.env:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"env.name: checkpoint {path} was trained on '{metadata.get('env')}', config selects '{cfg.env}'.",
        )
    return found


def load_agent(path: Path | str, cfg: ExperimentConfig, role: str | None = None) -> TeacherAgent | StudentAgent:
    """Rebuild a teacher or student with ``cfg``'s architecture and load its weights."""

    path = Path(path)
    values, metadata = load_checkpoint(path)
    found = _check_metadata(metadata, cfg, path, role)
    if found == "reward":
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Checkpoint {path} holds a reward model, not an agent.")

    teacher, student = build_agents(cfg, np.random.default_rng(cfg.seed))
    agent = teacher if found == "teacher" else student
    assign_tensors(agent.named_tensors(), values, source=str(path))
    agent.updates = int(metadata.get("updates", 0))
    log.debug("Loaded %s from %s", found, path)
    return agent


def load_teacher(path: Path | str, cfg: ExperimentConfig) -> TeacherAgent:
    return load_agent(path, cfg, role="teacher")


def checkpoint_metadata(path: Path | str) -> dict:
    _, metadata = load_checkpoint(path)
    return metadata
