"""Study arms: per-task baselines, the SegViz federation, evaluation and the report."""

import csv
import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from segviz.core.errors import ConfigError
from segviz.fed import (
    FederationResult,
    RoundMetrics,
    build_trainer,
    run_federation,
    save_snapshot,
)
from segviz.harness.config import ExperimentConfig
from segviz.harness.report import METRICS_NAME, MetricsRecord, emit_report, write_records
from segviz.nn import ModelConfig, ParamSnapshot, apply_snapshot, build_model, extract_snapshot
from segviz.optim import evaluate_samples
from segviz.synthdata import NodeDataset, Sample, load_or_generate

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = "snapshot.sgvz"
ROUNDS_NAME = "rounds.csv"
SEGVIZ = "segviz"
REPORT_DIR = "report"

StudyData = tuple[list[NodeDataset], list[Sample]]


@dataclass
class ArmResult:
    """Outcome of one study arm."""

    name: str
    snapshot: ParamSnapshot
    records: list[MetricsRecord]
    directory: Path
    rounds: list[RoundMetrics] = field(default_factory=list)


def baseline_name(task: str) -> str:
    return f"baseline_{task}"


def prepare_data(config: ExperimentConfig) -> StudyData:
    """Node datasets (one per model task) and the shared external test set."""
    return load_or_generate(config.data, config.model.tasks)


def evaluate_model(
    snapshot: ParamSnapshot,
    model_config: ModelConfig,
    test_set: Sequence[Sample],
    task: str,
    class_id: int,
    threshold: float = 0.5,
) -> list[float]:
    """Per-sample dice of ``snapshot``'s ``task`` head on full test volumes."""
    if task not in snapshot.tasks():
        raise ConfigError(f"snapshot has no head for task {task!r}")
    model = build_model(model_config.with_tasks([task]), seed=0)
    apply_snapshot(model, snapshot)
    return evaluate_samples(model, test_set, task, class_id, threshold)


def _records(
    config: ExperimentConfig, name: str, task: str, test_set: Sequence[Sample], scores: list[float]
) -> list[MetricsRecord]:
    return [
        MetricsRecord(
            experiment=config.name, model=name, task=task, sample_id=s.sample_id, dice=d
        )
        for s, d in zip(test_set, scores)
    ]


def _node_for(nodes: Sequence[NodeDataset], task: str) -> NodeDataset:
    for node in nodes:
        if node.task == task:
            return node
    raise ConfigError(f"task {task!r} is not configured; tasks: {[n.task for n in nodes]}")


def run_baseline(config: ExperimentConfig, task: str, data: StudyData | None = None) -> ArmResult:
    """Train a single-head model centrally on ``task``'s node and score it on the test set.

    Args:
        config: Experiment configuration.
        task: Task whose node dataset is used.
        data: Pre-built datasets; generated (or loaded from cache) when omitted.

    Returns:
        The trained snapshot and one record per test sample.
    """
    if task not in config.model.tasks:
        raise ConfigError(f"task {task!r} is not in model.tasks {config.model.tasks}")
    nodes, test_set = data or prepare_data(config)
    node = _node_for(nodes, task)
    name = baseline_name(task)
    epochs = config.train.baseline_epochs

    started = time.time()
    trainer = build_trainer(node, config.model, config.train, epochs, config.seed)
    trainer.train(epochs)
    snapshot = extract_snapshot(trainer.model)
    logger.info(f"{name}: {epochs} epochs in {time.time() - started:.1f}s")

    scores = evaluate_model(
        snapshot, config.model, test_set, task, config.class_of(task), config.eval.threshold
    )
    directory = config.output_dir / name
    save_snapshot(directory / SNAPSHOT_NAME, snapshot, round=epochs)
    records = _records(config, name, task, test_set, scores)
    write_records(directory / METRICS_NAME, records)
    return ArmResult(name=name, snapshot=snapshot, records=records, directory=directory)


def write_rounds(path: Path, rounds: Sequence[RoundMetrics]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "node_id", "task", "train_loss", "val_dice"])
        for m in rounds:
            writer.writerow([m.round, m.node_id, m.task, repr(m.train_loss), repr(m.val_dice)])
    return path


def run_segviz(config: ExperimentConfig, data: StudyData | None = None) -> ArmResult:
    """Run the federation and score the global model's every head on the test set."""
    if len(config.model.tasks) < 2:
        raise ConfigError(f"SegViz needs at least two nodes, model.tasks is {config.model.tasks}")
    nodes, test_set = data or prepare_data(config)
    fed_config = config.fed.model_copy(update={"seed": config.seed})

    started = time.time()
    result: FederationResult = run_federation(fed_config, nodes, config.model, config.train)
    logger.info(f"{SEGVIZ}: {fed_config.rounds} rounds in {time.time() - started:.1f}s")

    records = []
    for task in config.model.tasks:
        scores = evaluate_model(
            result.snapshot,
            config.model,
            test_set,
            task,
            config.class_of(task),
            config.eval.threshold,
        )
        records.extend(_records(config, SEGVIZ, task, test_set, scores))

    directory = config.output_dir / SEGVIZ
    save_snapshot(directory / SNAPSHOT_NAME, result.snapshot, round=fed_config.rounds)
    write_rounds(directory / ROUNDS_NAME, result.metrics)
    write_records(directory / METRICS_NAME, records)
    return ArmResult(
        name=SEGVIZ,
        snapshot=result.snapshot,
        records=records,
        directory=directory,
        rounds=result.metrics,
    )


def run_study(config: ExperimentConfig) -> list[MetricsRecord]:
    """Both baselines, the federation and the report over one shared dataset."""
    data = prepare_data(config)
    records: list[MetricsRecord] = []
    for task in config.model.tasks:
        records.extend(run_baseline(config, task, data).records)
    records.extend(run_segviz(config, data).records)
    emit_report(records, config.output_dir / REPORT_DIR)
    return records
