"""Tests for the study arms on the tiny config."""

import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from segviz.core.config import settings
from segviz.core.errors import ConfigError
from segviz.fed import load_snapshot
from segviz.nn import build_model, extract_snapshot
from segviz.harness import (
    evaluate_model,
    load_config,
    prepare_data,
    read_records,
    run_baseline,
    run_segviz,
    run_study,
)
from segviz.harness.experiments import REPORT_DIR, ROUNDS_NAME, SNAPSHOT_NAME
from segviz.harness.report import METRICS_NAME, SUMMARY_NAME


@pytest.fixture
def config(tiny_config_file, tmp_path):
    out = json.dumps(str(tmp_path / "runs"))
    return load_config(tiny_config_file, [f"output_dir={out}"])


@pytest.fixture
def data(config):
    return prepare_data(config)


class TestBaseline:
    """Test the per-task centralized arm."""

    def test_outputs(self, config, data):
        result = run_baseline(config, "spleen", data)
        assert result.name == "baseline_spleen"
        assert result.snapshot.tasks() == {"spleen"}
        assert [r.sample_id for r in result.records] == [s.sample_id for s in data[1]]
        assert all(r.task == "spleen" and r.experiment == "tiny" for r in result.records)
        assert load_snapshot(result.directory / SNAPSHOT_NAME) == result.snapshot
        assert read_records(result.directory / METRICS_NAME) == result.records

    def test_unknown_task(self, config, data):
        with pytest.raises(ConfigError):
            run_baseline(config, "kidney", data)

    def test_deterministic(self, config, data):
        a = run_baseline(config, "liver", data)
        b = run_baseline(config, "liver", data)
        assert a.snapshot == b.snapshot
        assert a.records == b.records

    def test_untrained_model_is_still_scored(self, tiny_config_file, tmp_path):
        out = json.dumps(str(tmp_path / "runs"))
        config = load_config(tiny_config_file, [f"output_dir={out}", "train.baseline_epochs=0"])
        result = run_baseline(config, "liver")
        assert len(result.records) == config.data.test_size
        assert all(0.0 <= r.dice <= 1.0 for r in result.records)
        assert len(read_records(result.directory / METRICS_NAME)) == config.data.test_size


class TestSegViz:
    """Test the federated arm."""

    def test_outputs(self, config, data):
        result = run_segviz(config, data)
        assert result.snapshot.tasks() == {"liver", "spleen"}
        assert len(result.records) == 2 * config.data.test_size
        assert {r.model for r in result.records} == {"segviz"}
        assert load_snapshot(result.directory / SNAPSHOT_NAME) == result.snapshot

        with open(result.directory / ROUNDS_NAME, newline="") as f:
            rows = list(csv.DictReader(f))
        assert [(r["round"], r["node_id"], r["task"]) for r in rows] == [
            ("0", "0", "liver"),
            ("0", "1", "spleen"),
        ]

    def test_output_files_are_reproducible(self, tiny_config_file, tmp_path):
        written = []
        for run in ("first", "second"):
            out = json.dumps(str(tmp_path / run))
            result = run_segviz(load_config(tiny_config_file, [f"output_dir={out}"]))
            written.append(
                (
                    (result.directory / METRICS_NAME).read_bytes(),
                    (result.directory / ROUNDS_NAME).read_bytes(),
                )
            )
        assert written[0] == written[1]

    def test_needs_two_tasks(self, tiny_config_file, tmp_path):
        config = load_config(
            tiny_config_file,
            [
                f"output_dir={json.dumps(str(tmp_path))}",
                "model.tasks=[liver]",
                "data.task_classes={liver: 1}",
                "data.node_sizes={liver: 4}",
            ],
        )
        with pytest.raises(ConfigError):
            run_segviz(config)


def crafted_snapshot(model_config, task, copy_input):
    """Head logit is ``x - 0.5`` through skip projections and center taps, or a constant -0.5.

    Every convolution is zeroed and batch norm stays at its identity init, so in
    eval mode only the hand-set taps carry signal.
    """
    model = build_model(model_config.with_tasks([task]), seed=0)
    params = model.parameters
    for name, p in params.items():
        if ".norm" not in name:
            p.tensor.data[...] = 0.0
    params[f"head.{task}.classifier.bias"].tensor.data[0] = -0.5
    if copy_input:
        center = model_config.kernel_size // 2
        params["encoder.0.res0.skip.weight"].tensor.data[0, 0, 0, 0] = 1.0
        params["decoder.0.res0.skip.weight"].tensor.data[0, 0, 0, 0] = 1.0
        params[f"head.{task}.conv.weight"].tensor.data[0, 0, center, center] = 1.0
        params[f"head.{task}.classifier.weight"].tensor.data[0, 0, 0, 0] = 1.0
    return extract_snapshot(model)


class TestEvaluateModel:
    """Test scoring of a snapshot on full volumes."""

    def test_oracle_scores_one(self, config, data):
        class_id = config.class_of("liver")
        samples = [
            replace(s, image=s.mask(class_id)[np.newaxis].astype(np.float32)) for s in data[1]
        ]
        snapshot = crafted_snapshot(config.model, "liver", copy_input=True)
        scores = evaluate_model(snapshot, config.model, samples, "liver", class_id)
        assert scores == [1.0] * len(samples)

    def test_background_predictor_scores_zero(self, config, data):
        class_id = config.class_of("spleen")
        snapshot = crafted_snapshot(config.model, "spleen", copy_input=False)
        scores = evaluate_model(snapshot, config.model, data[1], "spleen", class_id)
        for sample, score in zip(data[1], scores):
            assert score == (0.0 if sample.mask(class_id).any() else 1.0)

    def test_missing_head(self, config, data):
        snapshot = run_baseline(config, "liver", data).snapshot
        with pytest.raises(ConfigError):
            evaluate_model(snapshot, config.model, data[1], "spleen", class_id=2)


class TestStudy:
    """Test the whole study on the tiny config."""

    def test_report(self, config):
        records = run_study(config)
        assert {r.model for r in records} == {"baseline_liver", "baseline_spleen", "segviz"}
        assert len(records) == 4 * config.data.test_size

        report = config.output_dir / REPORT_DIR
        assert read_records(report / METRICS_NAME) == records
        summary = json.loads((report / SUMMARY_NAME).read_text())
        labels = {"Baseline liver", "Baseline spleen", "SegViz liver", "SegViz spleen"}
        assert set(summary) == labels
        assert (report / "boxplot_liver.svg").exists()
        assert (report / "boxplot_spleen.svg").exists()

        by_label = {}
        for r in read_records(report / METRICS_NAME):
            arm = "SegViz" if r.model == "segviz" else "Baseline"
            by_label.setdefault(f"{arm} {r.task}", []).append(r.dice)
        assert set(by_label) == labels
        for label, values in by_label.items():
            assert summary[label]["mean"] == pytest.approx(sum(values) / len(values), abs=1e-9)


@pytest.mark.slow
class TestDeskStudy:
    """The shipped desk config: both arms reach 0.80 dice and stay within 0.05."""

    def test_segviz_matches_baselines(self, tmp_path):
        out = json.dumps(str(tmp_path / "desk"))
        config = load_config(settings.default_config, [f"output_dir={out}"])
        records = run_study(config)
        means = {}
        for label, stats in json.loads(
            (config.output_dir / REPORT_DIR / SUMMARY_NAME).read_text()
        ).items():
            means[label] = stats["mean"]
        assert len(records) == 4 * config.data.test_size
        for task in config.model.tasks:
            baseline, segviz = means[f"Baseline {task}"], means[f"SegViz {task}"]
            assert baseline >= 0.80
            assert segviz >= 0.80
            assert abs(segviz - baseline) <= 0.05
