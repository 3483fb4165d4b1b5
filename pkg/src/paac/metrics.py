"""Append-only JSON-lines metrics and CSV export for plotting."""
from __future__ import annotations

import csv
import json
from pathlib import Path

METRICS_FILE = "metrics.jsonl"
PHASES = ("env_interaction", "forward_select", "learning")
TIMESTEPS_PER_EPOCH = 1_000_000

# stable CSV column order
COLUMNS = (
    "update", "timestep", "epoch", "wall_time", "update_time", "mean_return", "max_return",
    "episodes", "policy_loss", "value_loss", "entropy", "grad_norm", "lr", "timesteps_per_sec",
    *(f"phase_{p}" for p in PHASES), "epsilon", "eval_return", "eval_discounted",
    "param_version",
)


class MetricsWriter:
    """One JSON object per line; each record goes out in a single write call."""

    def __init__(self, path, flush_every: int = 1):
        self.path = Path(path)
        self.flush_every = flush_every
        self._fh = open(self.path, "w", encoding="utf-8")
        self._pending = 0

    def write(self, record) -> None:
        data = record.to_dict() if hasattr(record, "to_dict") else dict(record)
        self._fh.write(json.dumps(data, sort_keys=True) + "\n")
        self._pending += 1
        if self._pending >= self.flush_every:
            self.flush()

    def flush(self) -> None:
        self._fh.flush()
        self._pending = 0

    def close(self) -> None:
        if not self._fh.closed:
            self.flush()
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    """Parse every complete line; a trailing line without newline (a write in flight) is skipped."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    complete = lines[:-1]  # the last element is "" or a torn tail
    return [json.loads(line) for line in complete if line.strip()]


def flatten(record: dict) -> dict:
    row = {k: record.get(k) for k in COLUMNS if not k.startswith("phase_") and k != "epoch"}
    row["epoch"] = record["timestep"] / TIMESTEPS_PER_EPOCH
    phases = record.get("phases") or {}
    for p in PHASES:
        row[f"phase_{p}"] = phases.get(p)
    return {k: row[k] for k in COLUMNS}


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row[c] is None else row[c] for c in columns])


def metrics_export(run_dir) -> dict[str, Path]:
    """Write metrics.csv plus score-vs-epoch and score-vs-time tables next to the metrics file."""
    run_dir = Path(run_dir)
    src = run_dir / METRICS_FILE
    if not src.is_file():
        raise FileNotFoundError(f"no {METRICS_FILE} in {run_dir}")
    rows = [flatten(r) for r in read_metrics(src)]
    out = {
        "metrics": run_dir / "metrics.csv",
        "by_epoch": run_dir / "score_vs_epoch.csv",
        "by_time": run_dir / "score_vs_time.csv",
    }
    _write_csv(out["metrics"], COLUMNS, rows)
    _write_csv(out["by_epoch"], ("epoch", "timestep", "mean_return", "eval_return"), rows)
    _write_csv(out["by_time"], ("wall_time", "timestep", "mean_return", "eval_return"), rows)
    return out
