"""Per-sample metrics records and the study report (CSV, summary JSON, boxplots)."""

import csv
import json
import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from segviz.core.errors import ConfigError

logger = logging.getLogger(__name__)

CSV_HEADER = ["experiment", "model", "task", "sample_id", "dice"]
METRICS_NAME = "metrics.csv"
SUMMARY_NAME = "summary.json"


@dataclass(frozen=True)
class MetricsRecord:
    """Dice of one model on one test sample for one task."""

    experiment: str
    model: str  # baseline_<task> or segviz
    task: str
    sample_id: int
    dice: float

    def __post_init__(self):
        if not 0.0 <= self.dice <= 1.0:
            raise ValueError(f"dice {self.dice} outside [0, 1]")


def arm_label(model: str) -> str:
    """Row label family of a model column: ``SegViz`` or ``Baseline``."""
    return "SegViz" if model == "segviz" else "Baseline"


@dataclass(frozen=True)
class ReportFiles:
    metrics: Path
    summary: Path
    boxplots: dict[str, Path]


def write_records(path: Path, records: Iterable[MetricsRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.experiment, r.model, r.task, r.sample_id, repr(float(r.dice))])
    return path


def read_records(path: Path) -> list[MetricsRecord]:
    """Parse a metrics CSV written by ``write_records``."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(CSV_HEADER)}")
        return [
            MetricsRecord(
                experiment=row["experiment"],
                model=row["model"],
                task=row["task"],
                sample_id=int(row["sample_id"]),
                dice=float(row["dice"]),
            )
            for row in reader
        ]


def _groups(records: Iterable[MetricsRecord]) -> dict[tuple[str, str], list[float]]:
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in records:
        groups[(r.model, r.task)].append(r.dice)
    return groups


def summarize(records: Sequence[MetricsRecord]) -> dict[str, dict[str, float]]:
    """Statistics per (model, task), keyed like ``"SegViz spleen"`` / ``"Baseline liver"``."""
    summary = {}
    for (model, task), values in sorted(_groups(records).items(), key=lambda kv: kv[0][::-1]):
        label = f"{arm_label(model)} {task}"
        if label in summary:
            label = f"{model} {task}"
        dice = np.asarray(values, dtype=np.float64)
        summary[label] = {
            "model": model,
            "task": task,
            "n": int(dice.size),
            "mean": float(dice.mean()),
            "std": float(dice.std()),
            "median": float(np.median(dice)),
            "min": float(dice.min()),
            "max": float(dice.max()),
        }
    return summary


def plot_task_boxplot(path: Path, task: str, series: dict[str, list[float]]) -> Path:
    """Baseline vs SegViz dice distributions of one task (whiskers at 1.5 IQR)."""
    labels = sorted(series, key=lambda m: (m == "segviz", m))
    with mpl.rc_context({"svg.hashsalt": "segviz", "svg.fonttype": "none"}):
        fig = Figure(figsize=(4, 4))
        ax = fig.subplots()
        ax.boxplot([series[m] for m in labels], whis=1.5, showfliers=True)
        ax.set_xticks(range(1, len(labels) + 1), labels=labels)
        ax.set_ylabel("Dice")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(f"{task}: per-sample dice")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def emit_report(records: Sequence[MetricsRecord], output_dir: Path) -> ReportFiles:
    """Write metrics.csv, summary.json and one boxplot_<task>.svg per task."""
    if not records:
        raise ValueError("cannot build a report from zero records")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    metrics = write_records(output_dir / METRICS_NAME, records)
    summary_path = output_dir / SUMMARY_NAME
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summarize(records), f, indent=2)

    by_task: dict[str, dict[str, list[float]]] = defaultdict(dict)
    for (model, task), values in _groups(records).items():
        by_task[task][model] = values
    boxplots = {
        task: plot_task_boxplot(output_dir / f"boxplot_{task}.svg", task, series)
        for task, series in sorted(by_task.items())
    }

    for label, stats in summarize(records).items():
        logger.info(f"{label}: mean dice {stats['mean']:.4f} (n={stats['n']})")
    return ReportFiles(metrics=metrics, summary=summary_path, boxplots=boxplots)
