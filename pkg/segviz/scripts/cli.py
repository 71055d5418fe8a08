#!/usr/bin/env python3
"""Command-line entry point for data generation, study arms and distributed runs."""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from segviz.core.config import settings
from segviz.core.errors import ConfigError, ProtocolError, SegVizError, TransportError
from segviz.fed import (
    FederationClient,
    FederationServer,
    Hello,
    NodeSpec,
    load_snapshot,
    open_transport,
    save_snapshot,
)
from segviz.harness import (
    emit_report,
    evaluate_model,
    load_config,
    prepare_data,
    read_records,
    run_baseline,
    run_segviz,
    run_study,
    write_records,
    write_rounds,
)
from segviz.harness.config import ExperimentConfig
from segviz.harness.experiments import REPORT_DIR, SEGVIZ, SNAPSHOT_NAME
from segviz.harness.report import METRICS_NAME, MetricsRecord, summarize
from segviz.synthdata import export_dataset

logger = logging.getLogger("segviz.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_TRANSPORT = 4


def _print_summary(records: list[MetricsRecord]) -> None:
    print("=== Dice on the external test set ===")
    for label, stats in summarize(records).items():
        print(
            f"  {label:<20} mean {stats['mean']:.4f}  std {stats['std']:.4f}  "
            f"median {stats['median']:.4f}  (n={stats['n']})"
        )


def cmd_gen_data(config: ExperimentConfig, args: argparse.Namespace) -> None:
    nodes, test_set = prepare_data(config)
    directory = config.data.cache_dir or config.output_dir / "data"
    export_dataset(directory, config.data, nodes, test_set)
    print("=== Dataset ===")
    for node in nodes:
        print(
            f"  node {node.node_id} ({node.task}): {len(node.train)} train, "
            f"{len(node.validation)} validation"
        )
    print(f"  test: {len(test_set)} fully annotated samples")
    print(f"Written to {directory}")


def cmd_run_baseline(config: ExperimentConfig, args: argparse.Namespace) -> None:
    result = run_baseline(config, args.task)
    _print_summary(result.records)
    print(f"Outputs in {result.directory}")


def cmd_run_segviz(config: ExperimentConfig, args: argparse.Namespace) -> None:
    result = run_segviz(config)
    _print_summary(result.records)
    print(f"Outputs in {result.directory}")


def cmd_run_study(config: ExperimentConfig, args: argparse.Namespace) -> None:
    records = run_study(config)
    _print_summary(records)
    print(f"Report in {config.output_dir / REPORT_DIR}")


async def _serve(config: ExperimentConfig, listen: str) -> None:
    nodes = [NodeSpec(node_id=i, task=t) for i, t in enumerate(config.model.tasks)]
    fed_config = config.fed.model_copy(update={"seed": config.seed})
    server = FederationServer(fed_config, config.model, nodes)
    listener = await open_transport("tcp", "server", listen)
    print(f"Serving {len(nodes)} nodes on {listener.address}")
    snapshot = await server.serve(listener)
    path = save_snapshot(
        config.output_dir / SEGVIZ / SNAPSHOT_NAME, snapshot, round=fed_config.rounds
    )
    print(f"Global snapshot written to {path}")


def cmd_serve(config: ExperimentConfig, args: argparse.Namespace) -> None:
    asyncio.run(_serve(config, args.listen or config.fed.listen))


async def _client(config: ExperimentConfig, connect: str, node_id: int) -> None:
    nodes, _ = prepare_data(config)
    dataset = next((n for n in nodes if n.node_id == node_id), None)
    if dataset is None:
        raise ConfigError(f"no node {node_id}; nodes are {[n.node_id for n in nodes]}")
    fed_config = config.fed.model_copy(update={"seed": config.seed})
    client = FederationClient(dataset, config.model, config.train, fed_config)
    hello: Hello = client.hello
    channel = await open_transport("tcp", "client", connect, hello=hello)
    metrics = await client.run(channel)
    path = write_rounds(config.output_dir / SEGVIZ / f"rounds_node{node_id}.csv", metrics)
    print(f"Node {node_id} finished {len(metrics)} rounds; log written to {path}")


def cmd_client(config: ExperimentConfig, args: argparse.Namespace) -> None:
    asyncio.run(_client(config, args.connect, args.node_id))


def cmd_eval(config: ExperimentConfig, args: argparse.Namespace) -> None:
    snapshot = load_snapshot(args.snapshot)
    _, test_set = prepare_data(config)
    records = []
    for task in config.model.tasks:
        if task not in snapshot.tasks():
            continue
        scores = evaluate_model(
            snapshot, config.model, test_set, task, config.class_of(task), config.eval.threshold
        )
        records.extend(
            MetricsRecord(config.name, args.name, task, s.sample_id, d)
            for s, d in zip(test_set, scores)
        )
    if not records:
        raise ConfigError(f"{args.snapshot} has no head for any of {config.model.tasks}")
    path = write_records(config.output_dir / args.name / METRICS_NAME, records)
    _print_summary(records)
    print(f"Metrics written to {path}")


def cmd_report(config: ExperimentConfig, args: argparse.Namespace) -> None:
    records = []
    for path in sorted(config.output_dir.glob(f"*/{METRICS_NAME}")):
        if path.parent.name != REPORT_DIR:
            records.extend(read_records(path))
    if not records:
        raise ConfigError(f"no {METRICS_NAME} files under {config.output_dir}")
    files = emit_report(records, config.output_dir / REPORT_DIR)
    _print_summary(records)
    print(f"Report written to {files.summary.parent}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segviz",
        description="Federated multi-task segmentation on synthetic phantoms",
    )
    parser.add_argument("--config", type=Path, help="Config file (default: shipped desk config)")
    parser.add_argument("--seed", type=int, help="Training seed (overrides 'seed')")
    parser.add_argument("--out", type=Path, help="Output directory (overrides 'output_dir')")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Config override, applied after the file (repeatable)",
    )
    parser.add_argument("--transport", choices=["inproc", "tcp"], help="Federation transport")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", help="Generate and export the node datasets and test set")
    baseline = sub.add_parser("run-baseline", help="Train and evaluate one per-task baseline")
    baseline.add_argument("--task", required=True, help="Task to train")
    sub.add_parser("run-segviz", help="Run the federation and evaluate the global model")
    sub.add_parser("run-study", help="Both baselines, SegViz and the report")
    serve = sub.add_parser("serve", help="Run the federation server over TCP")
    serve.add_argument("--listen", help="host:port to bind (default: fed.listen)")
    client = sub.add_parser("client", help="Run one federation client over TCP")
    client.add_argument("--connect", required=True, help="Server host:port")
    client.add_argument("--node-id", type=int, required=True, help="Node id (task position)")
    evaluate = sub.add_parser("eval", help="Score a saved snapshot on the test set")
    evaluate.add_argument("--snapshot", type=Path, required=True, help="Snapshot (.sgvz) file")
    evaluate.add_argument("--name", required=True, help="Model column / output subdirectory")
    sub.add_parser("report", help="Build the report from every metrics.csv under --out")
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "run-baseline": cmd_run_baseline,
    "run-segviz": cmd_run_segviz,
    "run-study": cmd_run_study,
    "serve": cmd_serve,
    "client": cmd_client,
    "eval": cmd_eval,
    "report": cmd_report,
}


def _overrides(args: argparse.Namespace) -> list[str]:
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(str(args.out))}")
    if args.transport is not None:
        overrides.append(f"fed.transport={args.transport}")
    return overrides


def main(argv: list[str] | None = None) -> int:
    """Main entry point for CLI."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config, _overrides(args))
        COMMANDS[args.command](config, args)
    except ConfigError as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except (TransportError, ProtocolError) as e:
        logger.error(f"transport error: {e}")
        return EXIT_TRANSPORT
    except (SegVizError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
