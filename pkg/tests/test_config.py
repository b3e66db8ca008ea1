from pathlib import Path

import pytest

from teachloop.config import (
    DEFAULT_CONFIG,
    OUTPUT_ROOT_ENV,
    default_run_dir,
    dump_config,
    experiment_config,
    load_resolved_config,
    parse_config,
    parse_override,
)
from teachloop.errors import ErrorCode, TeachLoopError
from teachloop.presets import PRESETS, list_presets, resolve_preset


def test_defaults_resolve_to_an_experiment():
    config = load_resolved_config()
    assert config["noise"]["alpha"] == 0.4
    assert config["network"]["hidden"] == [64, 64]

    cfg = experiment_config(config)
    assert cfg.env == "pendulum"
    assert cfg.horizon is None
    assert cfg.demo_path is None
    assert cfg.teacher_checkpoint is None
    assert cfg.hidden == (64, 64)
    assert cfg.env_spec.horizon == 200


def test_overrides_accept_dotted_and_unique_bare_keys():
    cfg = parse_config(overrides=["noise.alpha=0.1", "total_steps=5000", "hidden=[32]", "loss_mode=kl"])
    assert cfg.alpha == 0.1
    assert cfg.total_steps == 5000
    assert cfg.hidden == (32,)
    assert cfg.loss_mode == "kl"


def test_integer_values_are_accepted_for_float_keys():
    config = load_resolved_config(overrides=["noise.alpha=1"])
    assert config["noise"]["alpha"] == 1.0
    assert isinstance(config["noise"]["alpha"], float)


def test_ambiguous_bare_key_lists_the_options():
    with pytest.raises(TeachLoopError) as exc:
        parse_override("entropy_temp=0.1")
    assert exc.value.code == ErrorCode.CONFIG_ERROR
    assert "teacher.entropy_temp" in exc.value.hint
    assert "student.entropy_temp" in exc.value.hint


@pytest.mark.parametrize(
    ("override", "prefix"),
    [
        ("noise.alpha=-1", "noise.alpha:"),
        ("noise.beta=1", "noise.beta:"),
        ("train.total_steps=ten", "train.total_steps:"),
        ("student.loss_mode=dagger", "student.loss_mode:"),
        ("env.name=mountaincar", "env.name:"),
        ("sweep.parameter=gamma", "sweep.parameter:"),
        ("network.hidden=[16, 0]", "network.hidden:"),
    ],
)
def test_bad_values_name_their_key(override, prefix):
    with pytest.raises(TeachLoopError) as exc:
        load_resolved_config(overrides=[override])
    assert exc.value.code == ErrorCode.CONFIG_ERROR
    assert exc.value.message.startswith(prefix)


def test_override_needs_an_equals_sign():
    with pytest.raises(TeachLoopError) as exc:
        parse_override("noise.alpha")
    assert exc.value.code == ErrorCode.CONFIG_ERROR


def test_file_layer_sits_between_preset_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('[noise]\nalpha = 0.25\n\n[train]\ntotal_steps = 300\n', encoding="utf-8")

    config = load_resolved_config(path, overrides=["train.total_steps=200"], preset="smoke")
    assert config["noise"]["alpha"] == 0.25
    assert config["train"]["total_steps"] == 200
    assert config["train"]["batch_size"] == 32
    assert config["env"]["horizon"] == 50


def test_unknown_keys_in_files_are_rejected(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[noise]\nbeta = 1\n", encoding="utf-8")
    with pytest.raises(TeachLoopError) as exc:
        load_resolved_config(path)
    assert exc.value.message.startswith("noise.beta: unknown key")


def test_missing_and_malformed_files_are_config_errors(tmp_path):
    with pytest.raises(TeachLoopError) as exc:
        load_resolved_config(tmp_path / "absent.toml")
    assert exc.value.code == ErrorCode.CONFIG_ERROR

    path = tmp_path / "broken.toml"
    path.write_text("[noise\nalpha = ", encoding="utf-8")
    with pytest.raises(TeachLoopError) as exc:
        load_resolved_config(path)
    assert exc.value.code == ErrorCode.CONFIG_ERROR
    assert exc.value.hint


def test_dumped_config_loads_back_unchanged(tmp_path):
    config = load_resolved_config(preset="irl-pendulum", overrides=["noise.alpha=0.15", "train.demo_path=demos/pend.csv"])
    path = tmp_path / "config.resolved.toml"
    path.write_text(dump_config(config), encoding="utf-8")

    assert load_resolved_config(path) == config
    assert list(DEFAULT_CONFIG) == [line[1:-1] for line in dump_config(config).splitlines() if line.startswith("[")]


def test_unknown_preset_is_a_config_error():
    with pytest.raises(TeachLoopError) as exc:
        load_resolved_config(preset="atari")
    assert exc.value.code == ErrorCode.CONFIG_ERROR


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_resolves(name):
    cfg = parse_config(preset=name)
    assert cfg.env in {"pendulum", "cartpole_continuous", "pointmass"}


def test_preset_helpers():
    names = [name for name, _ in list_presets()]
    assert names == sorted(PRESETS)
    assert resolve_preset(None) is None
    assert resolve_preset("missing") is None

    copy = resolve_preset("smoke")
    copy["train"]["total_steps"] = 1
    assert PRESETS["smoke"]["train"]["total_steps"] == 400


def test_default_run_dir(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    config = load_resolved_config(overrides=["train.seed=7"])
    assert default_run_dir(config) == Path(tmp_path) / "l2t_rl-pendulum-seed7"

    config = load_resolved_config(overrides=["output.dir=elsewhere"])
    assert default_run_dir(config) == Path("elsewhere")
