"""Study orchestration: configuration, baselines, the SegViz arm and reporting."""

from segviz.harness.config import EvalConfig, ExperimentConfig, load_config, parse_config_text
from segviz.harness.experiments import (
    ArmResult,
    evaluate_model,
    prepare_data,
    run_baseline,
    run_segviz,
    run_study,
    write_rounds,
)
from segviz.harness.report import (
    MetricsRecord,
    ReportFiles,
    emit_report,
    read_records,
    summarize,
    write_records,
)

__all__ = [
    "ArmResult",
    "EvalConfig",
    "ExperimentConfig",
    "MetricsRecord",
    "ReportFiles",
    "emit_report",
    "evaluate_model",
    "load_config",
    "parse_config_text",
    "prepare_data",
    "read_records",
    "run_baseline",
    "run_segviz",
    "run_study",
    "summarize",
    "write_records",
    "write_rounds",
]
