"""End-to-end run orchestration shared by the CLI and the public API."""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from . import __version__
from .artifacts import (
    checkpoint_metadata,
    load_agent,
    load_teacher,
    save_run_checkpoints,
    write_provenance,
    write_run_config,
)
from .config import default_run_dir, experiment_config
from .errors import ErrorCode, TeachLoopError
from .metrics import best_returns, write_summary
from .orchestrator import (
    evaluate,
    resolve_demonstrations,
    train_l2t_irl,
    train_l2t_rl,
    train_two_stage_bc,
)

log = logging.getLogger(__name__)


def run_training(config: dict, run_dir: Path | None = None) -> dict:
    """Train the configured algorithm and write every run artifact.

    The resolved config and provenance land in ``run_dir`` before the first
    environment step; metrics stream during training; checkpoints and
    ``summary.json`` follow at the end.
    """

    cfg = experiment_config(config)
    run_dir = Path(run_dir) if run_dir is not None else default_run_dir(config)
    write_run_config(run_dir, config)
    write_provenance(run_dir, cfg, __version__)
    log.info("Run directory: %s", run_dir)

    started = time.perf_counter()
    prior_teacher_steps = 0
    if cfg.algorithm == "l2t_rl":
        result = train_l2t_rl(cfg, run_dir)
    elif cfg.algorithm == "l2t_irl":
        result = train_l2t_irl(cfg, resolve_demonstrations(cfg), run_dir)
    else:
        if not cfg.teacher_checkpoint:
            raise TeachLoopError(
                ErrorCode.CONFIG_ERROR,
                "baseline.teacher_checkpoint: two_stage_bc needs a trained teacher checkpoint.",
                hint="Train with algorithm = \"l2t_rl\" first and point this key at its best-teacher.ckpt.",
            )
        teacher = load_teacher(cfg.teacher_checkpoint, cfg)
        prior_teacher_steps = int(checkpoint_metadata(cfg.teacher_checkpoint).get("teacher_env_steps", 0))
        result = train_two_stage_bc(cfg, teacher, run_dir)
    elapsed = time.perf_counter() - started

    checkpoints = save_run_checkpoints(run_dir, result, cfg) if config["output"]["save_checkpoints"] else {}
    counters = result.counters
    summary = {
        "version": __version__,
        "algorithm": cfg.algorithm,
        "env": cfg.env,
        "seed": cfg.seed,
        "best_returns": best_returns(result.metrics.records),
        "env_steps": {
            **counters.as_dict(),
            "prior_teacher_env_steps": prior_teacher_steps,
            "total": counters.teacher_env_steps + counters.student_env_steps + prior_teacher_steps,
        },
        "elapsed_sec": round(elapsed, 2),
        "checkpoints": checkpoints,
    }
    write_summary(run_dir / "summary.json", summary)
    return {"run_dir": str(run_dir), "summary": summary, "result": result}


def run_evaluation(
    config: dict,
    checkpoint: Path | str,
    episodes: int | None = None,
    alpha: float | None = None,
    output_path: Path | None = None,
) -> dict:
    """Evaluate a saved teacher or student and save the report as JSON."""

    cfg = experiment_config(config)
    agent = load_agent(checkpoint, cfg)
    alpha = cfg.alpha if alpha is None else float(alpha)
    if alpha < 0.0:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Evaluation alpha must be >= 0, got {alpha}.")
    episodes = episodes or cfg.eval_episodes

    stats = evaluate(agent, cfg.env_spec, alpha, episodes, cfg.seed, cfg.eval_workers)
    report = {
        "checkpoint": str(checkpoint),
        "agent": "teacher" if agent.view == "state" else "student",
        "env": cfg.env,
        "alpha": alpha,
        "episodes": episodes,
        "seed": cfg.seed,
        **stats.as_dict(),
        "returns": list(stats.returns),
    }
    output_path = Path(output_path) if output_path is not None else Path(checkpoint).with_suffix(".eval.json")
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report["output"] = str(output_path)
    return report
