"""teachloop CLI."""

from __future__ import annotations

import json
import logging
import sys
import traceback
from pathlib import Path

import click

from . import __version__
from .config import experiment_config, get_output_root, load_resolved_config
from .errors import ErrorCode, TeachLoopError
from .metrics import export_csv
from .orchestrator import collect_oracle_demonstrations
from .pipeline import run_evaluation, run_training
from .presets import list_presets
from .replay import save_demonstrations
from .sweep import run_sweep


def _config_options(func):
    """Shared --config / --preset / --set options."""

    func = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override one config key, e.g. --set noise.alpha=0.1. Repeatable; applied last.",
    )(func)
    func = click.option("--preset", type=str, default=None, help="Named partial config; see `teachloop presets`.")(func)
    func = click.option(
        "--config",
        "config_path",
        type=click.Path(dir_okay=False),
        default=None,
        help="TOML config file.",
    )(func)
    return func


def _print_next_step(command: str) -> None:
    click.echo(f"Next: {command}")


def _fmt_return(value) -> str:
    return "n/a" if value is None else f"{value:.2f}"


@click.group(help="teachloop - single-loop teacher-student reinforcement learning lab.")
@click.version_option(version=__version__)
@click.option("--debug", is_flag=True, default=False, help="Verbose logging and tracebacks on failure.")
def cli(debug: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command("train")
@_config_options
@click.option("--output-dir", type=click.Path(file_okay=False), default=None, help="Run directory.")
@click.option("--json", "as_json", is_flag=True, default=False)
def train_command(config_path: str | None, preset: str | None, overrides: tuple[str, ...], output_dir: str | None, as_json: bool) -> None:
    """Train teacher and student; writes metrics, checkpoints and summary.json."""

    config = load_resolved_config(config_path, overrides, preset)
    outcome = run_training(config, Path(output_dir) if output_dir else None)
    summary = outcome["summary"]

    if as_json:
        click.echo(json.dumps(summary, indent=2, sort_keys=True))
        return

    best = summary["best_returns"]
    steps = summary["env_steps"]
    click.echo(f"Run directory: {outcome['run_dir']}")
    click.echo(f"Algorithm: {summary['algorithm']} on {summary['env']} (seed {summary['seed']})")
    click.echo(
        f"Best return: teacher={_fmt_return(best['teacher'])} "
        f"student={_fmt_return(best['student'])} baseline={_fmt_return(best['baseline'])}"
    )
    click.echo(
        f"Env steps: teacher={steps['teacher_env_steps']} student={steps['student_env_steps']} "
        f"total={steps['total']}"
    )
    click.echo(f"Elapsed: {summary['elapsed_sec']}s")
    if "student" in summary["checkpoints"]:
        _print_next_step(f"teachloop eval {summary['checkpoints']['student']}")


@cli.command("eval")
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@_config_options
@click.option("--episodes", type=click.IntRange(min=1), default=None)
@click.option("--alpha", type=float, default=None, help="Observation noise level; defaults to noise.alpha.")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Where to save the JSON report.")
@click.option("--json", "as_json", is_flag=True, default=False)
def eval_command(
    checkpoint: str,
    config_path: str | None,
    preset: str | None,
    overrides: tuple[str, ...],
    episodes: int | None,
    alpha: float | None,
    output: str | None,
    as_json: bool,
) -> None:
    """Evaluate a saved teacher or student with deterministic actions."""

    config = load_resolved_config(config_path, overrides, preset)
    report = run_evaluation(config, checkpoint, episodes=episodes, alpha=alpha, output_path=Path(output) if output else None)

    if as_json:
        click.echo(json.dumps(report, indent=2, sort_keys=True))
        return

    click.echo(f"Agent: {report['agent']} on {report['env']} (alpha {report['alpha']})")
    click.echo(f"Return: {report['return_mean']:.2f} +/- {report['return_std']:.2f} over {report['episodes']} episodes")
    click.echo(f"Average reward: {report['average_reward']:.4f}  Episode length: {report['length_mean']:.1f}")
    click.echo(f"Saved: {report['output']}")


@cli.command("sweep")
@_config_options
@click.option("--parameter", type=click.Choice(["alpha", "loss_mode", "curriculum"]), default=None)
@click.option("--values", "values_raw", type=str, default=None, help="Comma-separated values; defaults to sweep.values.")
@click.option("--seeds", "seeds_raw", type=str, default=None, help="Comma-separated seeds; defaults to sweep.seeds.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Parallel training processes.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def sweep_command(
    config_path: str | None,
    preset: str | None,
    overrides: tuple[str, ...],
    parameter: str | None,
    values_raw: str | None,
    seeds_raw: str | None,
    workers: int | None,
    output_dir: str | None,
    as_json: bool,
) -> None:
    """Train across alpha, loss_mode or curriculum values and emit the trend verdict."""

    config = load_resolved_config(config_path, overrides, preset)
    parameter = parameter or config["sweep"]["parameter"]
    values = _parse_values(values_raw, parameter)
    seeds = _parse_seeds(seeds_raw)
    root = Path(output_dir) if output_dir else get_output_root() / f"sweep-{parameter}"

    result = run_sweep(config, parameter, values, seeds, workers=workers, output_dir=root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    if as_json:
        click.echo(json.dumps(result, indent=2, sort_keys=True))
        return

    click.echo(f"Sweep over {parameter} with seeds {result['seeds']}")
    for row in result["means"]:
        click.echo(
            f"- {parameter}={row['value']} student_return={row['student_return_mean']:.2f} "
            f"+/- {row['student_return_std']:.2f} (n={row['samples']})"
        )
    status = "PASS" if result["verdict"] else "FAIL"
    click.echo(f"Verdict ({result['verdict_kind']}): {status}")
    click.echo(f"Env steps: teacher={result['teacher_env_steps']} student={result['student_env_steps']}")
    click.echo(f"Elapsed: {result['elapsed_sec']}s")


def _parse_values(raw: str | None, parameter: str) -> list | None:
    if not raw:
        return None
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if parameter != "alpha":
        return items
    try:
        return [float(item) for item in items]
    except ValueError as exc:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, f"sweep.values: alpha values must be numbers, got '{raw}'.") from exc


def _parse_seeds(raw: str | None) -> list[int] | None:
    if not raw:
        return None
    try:
        return [int(item.strip()) for item in raw.split(",") if item.strip()]
    except ValueError as exc:
        raise TeachLoopError(ErrorCode.CONFIG_ERROR, f"sweep.seeds: seeds must be integers, got '{raw}'.") from exc


@cli.command("export")
@click.argument("metrics_path", type=click.Path(dir_okay=False))
@click.argument("csv_path", type=click.Path(dir_okay=False), required=False)
def export_command(metrics_path: str, csv_path: str | None) -> None:
    """Convert a metrics.jsonl log to long-format CSV (step,agent,metric,value)."""

    target = Path(csv_path) if csv_path else Path(metrics_path).with_suffix(".csv")
    rows = export_csv(metrics_path, target)
    click.echo(f"Wrote {rows} rows to {target}")


@cli.command("gen-demos")
@click.argument("output", type=click.Path(dir_okay=False))
@_config_options
@click.option("--episodes", type=click.IntRange(min=1), default=None, help="Defaults to irl.demo_episodes.")
@click.option("--seed", type=int, default=None, help="Defaults to train.seed + 1.")
def gen_demos_command(
    output: str,
    config_path: str | None,
    preset: str | None,
    overrides: tuple[str, ...],
    episodes: int | None,
    seed: int | None,
) -> None:
    """Roll out the scripted oracle and save the episodes as a demonstration file."""

    cfg = experiment_config(load_resolved_config(config_path, overrides, preset))
    episodes = episodes or cfg.demo_episodes
    seed = cfg.seed + 1 if seed is None else seed
    demos, returns = collect_oracle_demonstrations(cfg.env_spec, episodes, seed)
    path = save_demonstrations(output, demos)
    click.echo(f"Wrote {episodes} episodes ({len(demos)} steps) to {path}")
    click.echo(f"Mean oracle return: {float(returns.mean()):.2f}")
    _print_next_step(f"teachloop train --set algorithm=l2t_irl --set train.demo_path={path}")


@cli.command("presets")
def presets_command() -> None:
    """List available presets."""

    for name, description in list_presets():
        click.echo(f"{name:<14} {description}")


def main() -> None:
    """Entry point used by console script."""

    argv = sys.argv[1:]
    debug = "--debug" in argv

    try:
        cli.main(args=argv, prog_name="teachloop", standalone_mode=False)
    except TeachLoopError as exc:
        print(str(exc), file=sys.stderr)
        if debug:
            traceback.print_exc()
        raise SystemExit(exc.code.exit_status)
    except click.ClickException as exc:
        exc.show()
        raise SystemExit(exc.exit_code)
    except click.exceptions.Abort:
        print("Aborted.", file=sys.stderr)
        raise SystemExit(1)
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - last resort
        print(f"[{ErrorCode.RUNTIME_ERROR.value}] Unexpected failure: {exc}", file=sys.stderr)
        traceback.print_exc()
        raise SystemExit(ErrorCode.RUNTIME_ERROR.exit_status)


if __name__ == "__main__":
    main()
