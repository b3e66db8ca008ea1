"""teachloop public API."""

from __future__ import annotations

__version__ = "0.4.0"
__all__ = ["train", "evaluate_checkpoint", "__version__"]


def _pipeline():
    from . import pipeline  # noqa: PLC0415  (lazy, keeps the CLI fast)
    return pipeline


def _config():
    from . import config  # noqa: PLC0415
    return config


def train(config_path=None, overrides=(), preset=None, output_dir=None):
    """Resolve a configuration, train it and return the run summary."""

    resolved = _config().load_resolved_config(config_path, overrides, preset)
    return _pipeline().run_training(resolved, output_dir)


def evaluate_checkpoint(checkpoint, config_path=None, overrides=(), preset=None, episodes=None, alpha=None):
    """Evaluate a saved teacher or student checkpoint."""

    resolved = _config().load_resolved_config(config_path, overrides, preset)
    return _pipeline().run_evaluation(resolved, checkpoint, episodes=episodes, alpha=alpha)
