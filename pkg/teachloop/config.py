"""Configuration loading, override and merge logic for teachloop."""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Iterable

from .errors import ErrorCode, TeachLoopError
from .orchestrator import ExperimentConfig
from .presets import resolve_preset

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - fallback for older runtimes
    import tomli as tomllib  # type: ignore


OUTPUT_ROOT_ENV = "TEACHLOOP_OUTPUT_ROOT"
SWEEP_PARAMETERS = ("alpha", "loss_mode", "curriculum")

# Empty strings and 0 stand in for "unset" so that every value is TOML-representable.
DEFAULT_CONFIG = {
    "env": {
        "name": "pendulum",
        "horizon": 0,
        "gamma": 0.99,
    },
    "noise": {
        "alpha": 0.4,
        "curriculum": "linear",
        "ramp_fraction": 0.3,
    },
    "train": {
        "algorithm": "l2t_rl",
        "total_steps": 100_000,
        "warmup_steps": 1000,
        "batch_size": 256,
        "buffer_capacity": 1_000_000,
        "eval_interval": 5000,
        "eval_episodes": 5,
        "eval_workers": 1,
        "loss_log_interval": 1,
        "seed": 0,
        "reward_source": "env",
        "demo_path": "",
    },
    "network": {
        "hidden": [64, 64],
        "activation": "tanh",
    },
    "teacher": {
        "actor_lr": 3e-4,
        "critic_lr": 3e-4,
        "tau": 0.005,
        "entropy_temp": 0.2,
    },
    "student": {
        "loss_mode": "combined",
        "p_norm": 1,
        "lr": 3e-4,
        "log_std_weight": 0.0,
        "entropy_temp": 0.2,
    },
    "irl": {
        "psi_coeff": 0.1,
        "eta": 3e-4,
        "output_bound": 10.0,
        "demo_episodes": 5,
    },
    "baseline": {
        "student_steps": 0,
        "teacher_checkpoint": "",
    },
    "sweep": {
        "parameter": "alpha",
        "values": [0.1, 0.2, 0.3, 0.4],
        "seeds": [0, 1, 2],
        "workers": 1,
    },
    "output": {
        "dir": "",
        "save_checkpoints": True,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    """Merge override into base recursively, ignoring None values."""

    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base


def _load_toml(path: Path) -> dict:
    if not path.exists():
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"Config file not found: {path}",
        )

    try:
        with path.open("rb") as handle:
            payload = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"Failed to parse config file: {path}",
            hint=str(exc),
        ) from exc

    return payload


def _check_known_keys(payload: dict, source: str, reference: dict = DEFAULT_CONFIG, prefix: str = "") -> None:
    for key, value in payload.items():
        dotted = f"{prefix}{key}"
        if key not in reference:
            raise TeachLoopError(
                ErrorCode.CONFIG_ERROR,
                f"{dotted}: unknown key in {source}.",
            )
        if isinstance(reference[key], dict):
            if not isinstance(value, dict):
                raise TeachLoopError(ErrorCode.CONFIG_ERROR, f"{dotted}: expected a table in {source}.")
            _check_known_keys(value, source, reference[key], prefix=f"{dotted}.")


def _coerce_types(config: dict) -> None:
    for table, defaults in DEFAULT_CONFIG.items():
        for key, default in defaults.items():
            value = config[table][key]
            dotted = f"{table}.{key}"
            if isinstance(default, bool):
                ok = isinstance(value, bool)
            elif isinstance(default, int):
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif isinstance(default, float):
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
                if ok:
                    value = float(value)
            elif isinstance(default, str):
                ok = isinstance(value, str)
            else:
                ok = isinstance(value, list)
            if not ok:
                raise TeachLoopError(
                    ErrorCode.CONFIG_ERROR,
                    f"{dotted}: expected {type(default).__name__}, got {type(value).__name__} ({value!r}).",
                )
            config[table][key] = value


def _bare_key_tables(key: str) -> list[str]:
    return [table for table, values in DEFAULT_CONFIG.items() if key in values]


def _parse_value(raw: str):
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def parse_override(item: str) -> dict:
    """Turn ``key=value`` into a nested patch; bare keys must name a single table."""

    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"Invalid override '{item}'.",
            hint="Use key=value, for example noise.alpha=0.1.",
        )

    if "." in key:
        table, _, name = key.partition(".")
        if table not in DEFAULT_CONFIG or name not in DEFAULT_CONFIG[table]:
            raise TeachLoopError(ErrorCode.CONFIG_ERROR, f"{key}: unknown key in overrides.")
    else:
        tables = _bare_key_tables(key)
        if not tables:
            raise TeachLoopError(ErrorCode.CONFIG_ERROR, f"{key}: unknown key in overrides.")
        if len(tables) > 1:
            options = ", ".join(f"{table}.{key}" for table in tables)
            raise TeachLoopError(
                ErrorCode.CONFIG_ERROR,
                f"{key}: ambiguous override key.",
                hint=f"Use one of: {options}.",
            )
        table, name = tables[0], key

    return {table: {name: _parse_value(raw.strip())}}


def load_resolved_config(
    config_path: Path | str | None = None,
    overrides: Iterable[str] = (),
    preset: str | None = None,
) -> dict:
    """Resolve configuration: defaults, then preset, then file, then overrides."""

    config = copy.deepcopy(DEFAULT_CONFIG)

    if preset:
        payload = resolve_preset(preset)
        if payload is None:
            raise TeachLoopError(
                ErrorCode.CONFIG_ERROR,
                f"Unknown preset '{preset}'.",
                hint="Run `teachloop presets` to list available presets.",
            )
        payload.pop("description", None)
        _check_known_keys(payload, f"preset '{preset}'")
        _deep_merge(config, payload)

    if config_path is not None:
        path = Path(config_path)
        payload = _load_toml(path)
        _check_known_keys(payload, str(path))
        _deep_merge(config, payload)

    for item in overrides:
        _deep_merge(config, parse_override(item))

    _coerce_types(config)
    _validate_config(config)
    return config


def experiment_config(config: dict) -> ExperimentConfig:
    env, noise, train = config["env"], config["noise"], config["train"]
    teacher, student, irl, baseline = config["teacher"], config["student"], config["irl"], config["baseline"]
    return ExperimentConfig(
        env=env["name"],
        horizon=env["horizon"] or None,
        gamma=env["gamma"],
        alpha=noise["alpha"],
        curriculum=noise["curriculum"],
        ramp_fraction=noise["ramp_fraction"],
        algorithm=train["algorithm"],
        total_steps=train["total_steps"],
        warmup_steps=train["warmup_steps"],
        batch_size=train["batch_size"],
        buffer_capacity=train["buffer_capacity"],
        eval_interval=train["eval_interval"],
        eval_episodes=train["eval_episodes"],
        eval_workers=train["eval_workers"],
        loss_log_interval=train["loss_log_interval"],
        seed=train["seed"],
        reward_source=train["reward_source"],
        demo_path=train["demo_path"] or None,
        hidden=tuple(int(width) for width in config["network"]["hidden"]),
        activation=config["network"]["activation"],
        actor_lr=teacher["actor_lr"],
        critic_lr=teacher["critic_lr"],
        tau=teacher["tau"],
        teacher_entropy_temp=teacher["entropy_temp"],
        loss_mode=student["loss_mode"],
        p_norm=student["p_norm"],
        student_lr=student["lr"],
        log_std_weight=student["log_std_weight"],
        student_entropy_temp=student["entropy_temp"],
        psi_coeff=irl["psi_coeff"],
        irl_eta=irl["eta"],
        output_bound=irl["output_bound"],
        demo_episodes=irl["demo_episodes"],
        baseline_steps=baseline["student_steps"],
        teacher_checkpoint=baseline["teacher_checkpoint"] or None,
    )


def parse_config(
    config_path: Path | str | None = None,
    overrides: Iterable[str] = (),
    preset: str | None = None,
) -> ExperimentConfig:
    return experiment_config(load_resolved_config(config_path, overrides, preset))


def _validate_config(config: dict) -> None:
    if config["env"]["horizon"] < 0:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "env.horizon: must be >= 0 (0 keeps the environment default).")

    hidden = config["network"]["hidden"]
    if not all(isinstance(width, int) and not isinstance(width, bool) for width in hidden):
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "network.hidden: entries must be integers.")

    sweep = config["sweep"]
    if sweep["parameter"] not in SWEEP_PARAMETERS:
        raise TeachLoopError(
            ErrorCode.CONFIG_ERROR,
            f"sweep.parameter: '{sweep['parameter']}' is not one of {'|'.join(SWEEP_PARAMETERS)}.",
        )
    if not sweep["values"]:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "sweep.values: must be a non-empty list.")
    if not sweep["seeds"] or not all(isinstance(seed, int) and not isinstance(seed, bool) for seed in sweep["seeds"]):
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "sweep.seeds: must be a non-empty list of integers.")
    if sweep["workers"] < 1:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, "sweep.workers: must be >= 1.")

    # ExperimentConfig carries the remaining range and enum checks.
    experiment_config(config)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    return "[" + ", ".join(_format_value(item) for item in value) + "]"


def dump_config(config: dict) -> str:
    """Render a resolved config as TOML that parses back to the same dict."""

    lines: list[str] = []
    for table, defaults in DEFAULT_CONFIG.items():
        if lines:
            lines.append("")
        lines.append(f"[{table}]")
        for key in defaults:
            lines.append(f"{key} = {_format_value(config[table][key])}")
    return "\n".join(lines) + "\n"


def get_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def default_run_dir(config: dict) -> Path:
    explicit = config["output"]["dir"]
    if explicit:
        return Path(explicit)
    train = config["train"]
    return get_output_root() / f"{train['algorithm']}-{config['env']['name']}-seed{train['seed']}"
