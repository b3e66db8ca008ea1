"""Preset profiles for common teacher-student runs."""

from __future__ import annotations

from copy import deepcopy

PRESETS: dict[str, dict] = {
    "smoke": {
        "description": "Tiny pendulum run that finishes in seconds; wiring check only.",
        "env": {"name": "pendulum", "horizon": 50},
        "train": {
            "total_steps": 400,
            "warmup_steps": 100,
            "batch_size": 32,
            "eval_interval": 200,
            "eval_episodes": 2,
        },
        "network": {"hidden": [16, 16]},
    },
    "pendulum": {
        "description": "Pendulum swing-up with alpha = 0.4 and a linear noise curriculum.",
        "env": {"name": "pendulum"},
        "noise": {"alpha": 0.4, "curriculum": "linear", "ramp_fraction": 0.3},
        "train": {"total_steps": 100_000, "warmup_steps": 1000, "batch_size": 256},
    },
    "cartpole": {
        "description": "Continuous cart-pole balancing with early termination.",
        "env": {"name": "cartpole_continuous"},
        "noise": {"alpha": 0.2},
        "train": {"total_steps": 50_000, "warmup_steps": 1000, "eval_interval": 2500},
    },
    "pointmass": {
        "description": "Planar point mass driven to the origin; fast sanity environment.",
        "env": {"name": "pointmass"},
        "noise": {"alpha": 0.3},
        "train": {"total_steps": 20_000, "warmup_steps": 500, "eval_interval": 2000},
        "network": {"hidden": [32, 32]},
    },
    "irl-pendulum": {
        "description": "Pendulum with learned teacher and student rewards from oracle demonstrations.",
        "env": {"name": "pendulum"},
        "noise": {"alpha": 0.4},
        "train": {"algorithm": "l2t_irl", "total_steps": 100_000, "warmup_steps": 1000},
        "irl": {"psi_coeff": 0.1, "demo_episodes": 10},
    },
}


def list_presets() -> list[tuple[str, str]]:
    rows = []
    for name in sorted(PRESETS):
        rows.append((name, PRESETS[name].get("description", "")))
    return rows


def resolve_preset(name: str | None) -> dict | None:
    if not name:
        return None
    preset = PRESETS.get(name)
    if not preset:
        return None
    return deepcopy(preset)
