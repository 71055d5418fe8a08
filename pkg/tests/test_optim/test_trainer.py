"""Tests for the local training loop and evaluation."""

import math

import numpy as np
import pytest

from segviz.core.errors import ConfigError, TrainingError
from segviz.nn import build_model, extract_snapshot
from segviz.optim import CosineSchedule, LocalTrainer, evaluate_samples
from segviz.synthdata import mask_annotations


@pytest.fixture
def liver_node(tiny_nodes):
    nodes, _ = tiny_nodes
    return nodes[0]


@pytest.fixture
def trainer(liver_node, tiny_model, tiny_train):
    """Single-head trainer annealed over three epochs."""
    model = build_model(tiny_model.with_tasks(["liver"]), seed=0)
    schedule = CosineSchedule(base_lr=tiny_train.base_lr, t_max=3)
    return LocalTrainer(model, liver_node, tiny_train, schedule, seed=0)


class TestLocalTrainer:
    """Test epochs, schedule position and determinism."""

    def test_epoch_advances_schedule(self, trainer, tiny_train):
        first = trainer.train_epoch()
        second = trainer.train_epoch()
        assert (first.epoch, second.epoch) == (0, 1)
        assert first.lr == pytest.approx(tiny_train.base_lr)
        assert second.lr == pytest.approx(tiny_train.base_lr * 0.75)
        assert trainer.epoch == 2
        assert 0.0 <= first.train_loss <= 1.0

    def test_steps_cover_all_patches(self, trainer, liver_node, tiny_train):
        result = trainer.train_epoch()
        patches = len(liver_node.train) * tiny_train.patches_per_volume
        assert result.steps == math.ceil(patches / tiny_train.batch_size)

    def test_steps_per_epoch(self, liver_node, tiny_model, tiny_train):
        train = tiny_train.model_copy(update={"steps_per_epoch": 5})
        model = build_model(tiny_model.with_tasks(["liver"]), seed=0)
        trainer = LocalTrainer(model, liver_node, train, CosineSchedule(t_max=1), seed=0)
        assert trainer.train_epoch().steps == 5

    def test_past_schedule_end(self, trainer):
        trainer.train(3)
        with pytest.raises(TrainingError):
            trainer.train_epoch()

    def test_zero_epochs_leave_model(self, trainer):
        before = extract_snapshot(trainer.model)
        assert trainer.train(0) == []
        assert extract_snapshot(trainer.model) == before

    def test_training_changes_weights(self, trainer):
        before = extract_snapshot(trainer.model)
        trainer.train(1)
        assert extract_snapshot(trainer.model) != before

    def test_same_seed_is_bit_identical(self, liver_node, tiny_model, tiny_train):
        snapshots = []
        for _ in range(2):
            model = build_model(tiny_model.with_tasks(["liver"]), seed=3)
            trainer = LocalTrainer(model, liver_node, tiny_train, CosineSchedule(t_max=2), seed=3)
            trainer.train(2)
            snapshots.append(extract_snapshot(model))
        assert snapshots[0] == snapshots[1]

    def test_validate_returns_mean_dice(self, trainer):
        score = trainer.validate()
        assert 0.0 <= score <= 1.0

    def test_validate_empty_split(self, trainer):
        trainer.dataset.validation = []
        assert math.isnan(trainer.validate())

    def test_unannotated_node_rejected(self, liver_node, tiny_model, tiny_train):
        """A sample whose labels miss the node's class cannot be trained on."""
        liver_node.train[0] = mask_annotations(liver_node.train[0], keep={2})
        model = build_model(tiny_model.with_tasks(["liver"]), seed=0)
        with pytest.raises(ConfigError):
            LocalTrainer(model, liver_node, tiny_train, CosineSchedule(), seed=0)

    def test_patch_rank_mismatch(self, liver_node, tiny_model, tiny_train):
        train = tiny_train.model_copy(update={"patch_size": [8, 8, 8]})
        model = build_model(tiny_model.with_tasks(["liver"]), seed=0)
        with pytest.raises(ConfigError):
            LocalTrainer(model, liver_node, train, CosineSchedule(), seed=0)

    def test_empty_training_split(self, liver_node, tiny_model, tiny_train):
        liver_node.train = []
        model = build_model(tiny_model.with_tasks(["liver"]), seed=0)
        with pytest.raises(ConfigError):
            LocalTrainer(model, liver_node, tiny_train, CosineSchedule(), seed=0)

    def test_other_head_untouched(self, liver_node, tiny_model, tiny_train):
        """Training the liver head leaves the spleen head bit-identical."""
        model = build_model(tiny_model, seed=0)
        before = extract_snapshot(model).task("spleen")
        LocalTrainer(model, liver_node, tiny_train, CosineSchedule(t_max=1), seed=0).train(1)
        after = extract_snapshot(model)
        assert after.task("spleen") == before
        initial = extract_snapshot(build_model(tiny_model, 0))
        assert after.representation() != initial.representation()


class TestEvaluateSamples:
    """Test full-volume evaluation."""

    def test_one_score_per_sample(self, tiny_nodes, tiny_model):
        _, test_set = tiny_nodes
        model = build_model(tiny_model, seed=0)
        scores = evaluate_samples(model, test_set, "spleen", class_id=2)
        assert len(scores) == len(test_set)
        assert all(0.0 <= s <= 1.0 for s in scores)

    def test_leaves_running_stats(self, tiny_nodes, tiny_model):
        _, test_set = tiny_nodes
        model = build_model(tiny_model, seed=0)
        before = extract_snapshot(model)
        evaluate_samples(model, test_set, "liver", class_id=1)
        assert extract_snapshot(model) == before

    def test_requires_annotation(self, tiny_nodes, tiny_model):
        nodes, _ = tiny_nodes
        model = build_model(tiny_model, seed=0)
        with pytest.raises(ConfigError):
            evaluate_samples(model, nodes[0].validation, "spleen", class_id=2)

    def test_matches_manual_dice(self, tiny_nodes, tiny_model):
        """A model forced to predict background scores 0 on non-empty masks."""
        _, test_set = tiny_nodes
        model = build_model(tiny_model, seed=0)
        model.parameters["head.liver.classifier.bias"].tensor.data[...] = -1e4
        model.parameters["head.liver.classifier.weight"].tensor.data[...] = 0.0
        scores = evaluate_samples(model, test_set, "liver", class_id=1)
        assert scores == [0.0] * len(test_set)
        assert all(np.any(s.mask(1)) for s in test_set)
