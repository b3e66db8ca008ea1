"""Versioned binary checkpoints for named float64 tensors.

Layout: one JSON header line (``format_version``, tensor names and shapes,
free-form metadata) followed by the row-major little-endian float64 values of
each tensor in header order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ErrorCode, TeachLoopError
from .tensor import Tensor

FORMAT_VERSION = 1
MAGIC = "teachloop-checkpoint"


def save_checkpoint(path: Path | str, tensors: dict[str, Tensor | np.ndarray], metadata: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    arrays = {name: np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64) for name, t in tensors.items()}
    header = {
        "magic": MAGIC,
        "format_version": FORMAT_VERSION,
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()],
        "metadata": metadata or {},
    }

    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as handle:
        handle.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for arr in arrays.values():
            handle.write(np.ascontiguousarray(arr).astype("<f8").tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path: Path | str) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Checkpoint not found: {path}")

    with path.open("rb") as handle:
        raw_header = handle.readline()
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"Checkpoint header is not valid JSON: {path}",
                hint=str(exc),
            ) from exc

        if header.get("magic") != MAGIC:
            raise TeachLoopError(ErrorCode.PARSE_ERROR, f"Not a teachloop checkpoint: {path}")
        if header.get("format_version") != FORMAT_VERSION:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"Unsupported checkpoint format_version {header.get('format_version')} in {path}.",
            )

        tensors: dict[str, np.ndarray] = {}
        for entry in header.get("tensors", []):
            shape = tuple(int(d) for d in entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            payload = handle.read(8 * count)
            if len(payload) != 8 * count:
                raise TeachLoopError(
                    ErrorCode.PARSE_ERROR,
                    f"Checkpoint truncated while reading tensor '{entry['name']}' in {path}.",
                )
            tensors[entry["name"]] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)

        if handle.read(1):
            raise TeachLoopError(ErrorCode.PARSE_ERROR, f"Trailing bytes after last tensor in {path}.")

    return tensors, dict(header.get("metadata", {}))


def assign_tensors(targets: dict[str, Tensor], values: dict[str, np.ndarray], source: str = "checkpoint") -> None:
    """Copy loaded arrays into live parameters, checking names and shapes."""

    missing = sorted(set(targets) - set(values))
    if missing:
        raise TeachLoopError(
            ErrorCode.INVALID_INPUT,
            f"{source} is missing tensors: {', '.join(missing[:5])}",
        )
    for name, tensor in targets.items():
        arr = values[name]
        if arr.shape != tensor.shape:
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"{source} tensor '{name}' has shape {arr.shape}, expected {tensor.shape}.",
            )
        tensor.data = np.array(arr, dtype=np.float64, copy=True)
