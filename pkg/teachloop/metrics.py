"""Newline-delimited JSON metrics log, CSV export and run summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import ErrorCode, TeachLoopError

CSV_HEADER = ["step", "agent", "metric", "value"]
RECORD_KINDS = {"eval", "loss", "reward", "baseline"}


class MetricsLog:
    """Append-only record list, mirrored line by line to ``path`` when given.

    Records hold no wall-clock fields, so identical runs produce identical files.
    """

    def __init__(self, path: Path | str | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def __len__(self) -> int:
        return len(self.records)

    def append(self, kind: str, step: int, **fields) -> dict:
        if kind not in RECORD_KINDS:
            raise TeachLoopError(ErrorCode.CONTRACT_ERROR, f"Unknown metrics record kind '{kind}'.")
        record = {"kind": kind, "step": int(step), **fields}
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=True) + "\n")
                handle.flush()
        return record

    def of_kind(self, kind: str) -> list[dict]:
        return [record for record in self.records if record["kind"] == kind]

    def lines(self) -> list[str]:
        return [json.dumps(record, sort_keys=True, ensure_ascii=True) for record in self.records]


def read_metrics(path: Path | str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Metrics file not found: {path}")

    records: list[dict] = []
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            item = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"{path}: line {number}: invalid JSON record.",
                hint=str(exc),
            ) from exc
        if not isinstance(item, dict) or "step" not in item:
            raise TeachLoopError(ErrorCode.PARSE_ERROR, f"{path}: line {number}: record without a step.")
        records.append(item)
    return records


def flatten_record(record: dict) -> list[tuple[int, str, str, float]]:
    """Long-format rows; nested tables name the agent, top-level scalars go to ``run``."""

    step = int(record["step"])
    rows: list[tuple[int, str, str, float]] = []
    for key in sorted(record):
        if key in {"kind", "step"}:
            continue
        value = record[key]
        if isinstance(value, dict):
            for metric in sorted(value):
                if _is_number(value[metric]):
                    rows.append((step, key, metric, float(value[metric])))
        elif _is_number(value):
            rows.append((step, "run", key, float(value)))
    return rows


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def export_csv(metrics_path: Path | str, csv_path: Path | str) -> int:
    records = read_metrics(metrics_path)
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)

    count = 0
    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for record in records:
            for step, agent, metric, value in flatten_record(record):
                writer.writerow([step, agent, metric, repr(value)])
                count += 1
    return count


def best_returns(records: list[dict]) -> dict[str, float | None]:
    """Highest recorded mean evaluation return per agent."""

    best: dict[str, float | None] = {"teacher": None, "student": None, "baseline": None}
    for record in records:
        kind = record.get("kind")
        if kind not in {"eval", "baseline"}:
            continue
        for agent in ("teacher", "student"):
            stats = record.get(agent)
            if not isinstance(stats, dict) or "return_mean" not in stats:
                continue
            slot = "baseline" if kind == "baseline" and agent == "student" else agent
            value = float(stats["return_mean"])
            if best[slot] is None or value > best[slot]:
                best[slot] = value
    return best


def write_summary(path: Path | str, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
