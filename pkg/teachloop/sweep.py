"""Ablation sweeps over alpha, loss_mode or curriculum, with trend verdicts."""

from __future__ import annotations

import copy
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import write_provenance, write_run_config
from .config import SWEEP_PARAMETERS, experiment_config
from .errors import ErrorCode, TeachLoopError
from .orchestrator import (
    ablation_verdict,
    resolve_demonstrations,
    spread_verdict,
    train_l2t_irl,
    train_l2t_rl,
    variant_verdict,
)

log = logging.getLogger(__name__)

_SWEEP_KEYS = {
    "alpha": ("noise", "alpha"),
    "loss_mode": ("student", "loss_mode"),
    "curriculum": ("noise", "curriculum"),
}


def patch_config(config: dict, parameter: str, value, seed: int) -> dict:
    if parameter not in SWEEP_PARAMETERS:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"sweep.parameter: '{parameter}' is not one of {'|'.join(SWEEP_PARAMETERS)}.",
        )
    patched = copy.deepcopy(config)
    table, key = _SWEEP_KEYS[parameter]
    patched[table][key] = float(value) if parameter == "alpha" else str(value)
    patched["train"]["seed"] = int(seed)
    return patched


def run_single(config: dict, output_dir: str | None = None) -> dict:
    """Train one configuration and report its final evaluation."""

    cfg = experiment_config(config)
    if cfg.total_steps < 1:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "train.total_steps: sweep runs need at least one step.")
    if cfg.algorithm not in ("l2t_rl", "l2t_irl"):
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"train.algorithm: sweeps run single-loop trainers only, got '{cfg.algorithm}'.",
        )
    run_dir = Path(output_dir) if output_dir else None
    if run_dir is not None:
        write_run_config(run_dir, config)
        write_provenance(run_dir, cfg, __version__)

    if cfg.algorithm == "l2t_rl":
        result = train_l2t_rl(cfg, run_dir)
    else:
        result = train_l2t_irl(cfg, resolve_demonstrations(cfg), run_dir)

    final = result.evals[-1]
    return {
        "teacher_return": final.teacher_return_mean,
        "student_return": final.student_return_mean,
        **result.counters.as_dict(),
    }


def _run_task(task: tuple[dict, str | None]) -> dict:
    config, output_dir = task
    return run_single(config, output_dir)


def _verdict(parameter: str, means: list[dict], runs: list[dict]) -> tuple[str, bool]:
    if parameter == "alpha":
        if len(means) < 2:
            return "monotone", True
        pooled = float(np.sqrt(np.mean([row["student_return_std"] ** 2 for row in means])))
        series = [(float(row["value"]), row["student_return_mean"]) for row in means]
        return "monotone", ablation_verdict(series, tolerance=pooled, max_inversions=1)

    if parameter == "loss_mode":
        if len(means) < 2:
            return "spread", True
        return "spread", spread_verdict({str(row["value"]): row["student_return_mean"] for row in means})

    by_value: dict[str, list[float]] = {}
    for run in runs:
        by_value.setdefault(str(run["value"]), []).append(run["student_return"])
    if "linear" not in by_value or "constant" not in by_value:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            "sweep.values: a curriculum sweep needs both 'linear' and 'constant'.",
        )
    return "paired", variant_verdict(by_value["linear"], by_value["constant"])


def run_sweep(
    config: dict,
    parameter: str | None = None,
    values: list | None = None,
    seeds: list[int] | None = None,
    workers: int | None = None,
    output_dir: Path | None = None,
) -> dict:
    """Train every (value, seed) pair and summarize the student returns per value.

    Unset arguments fall back to the ``[sweep]`` table of ``config``.
    """

    sweep = config["sweep"]
    parameter = parameter or sweep["parameter"]
    values = list(values if values is not None else sweep["values"])
    seeds = [int(seed) for seed in (seeds if seeds is not None else sweep["seeds"])]
    workers = int(workers or sweep["workers"])
    if not values or not seeds:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "sweep.values and sweep.seeds must be non-empty.")

    tasks = []
    labels = []
    for value in values:
        for seed in seeds:
            patched = patch_config(config, parameter, value, seed)
            # Validate every point before the first run starts.
            experiment_config(patched)
            run_dir = str(Path(output_dir) / f"{parameter}-{value}-seed{seed}") if output_dir is not None else None
            tasks.append((patched, run_dir))
            labels.append((value, seed))

    started = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = []
        for (value, seed), task in zip(labels, tasks):
            log.info("Sweep %s=%s seed=%d", parameter, value, seed)
            outcomes.append(_run_task(task))

    runs = [{"value": value, "seed": seed, **outcome} for (value, seed), outcome in zip(labels, outcomes)]
    means = []
    for value in values:
        returns = np.array([run["student_return"] for run in runs if run["value"] == value])
        means.append(
            {
                "value": value,
                "student_return_mean": float(returns.mean()),
                "student_return_std": float(returns.std()),
                "samples": int(returns.size),
            }
        )

    kind, passed = _verdict(parameter, means, runs)
    return {
        "parameter": parameter,
        "values": values,
        "seeds": seeds,
        "runs": runs,
        "means": means,
        "verdict_kind": kind,
        "verdict": passed,
        "teacher_env_steps": sum(run["teacher_env_steps"] for run in runs),
        "student_env_steps": sum(run["student_env_steps"] for run in runs),
        "elapsed_sec": round(time.perf_counter() - started, 2),
    }
