"""Tests for experiment configuration files and overrides."""

import json
from pathlib import Path

import pytest

from segviz.core.config import settings
from segviz.core.errors import ConfigError
from segviz.harness import ExperimentConfig, load_config, parse_config_text


class TestParseConfigText:
    """Test the flat key = value format."""

    def test_nested_keys(self):
        tree = parse_config_text(
            "# comment\n\nseed = 3\nmodel.channels = [4, 8]\ndata.task_classes = {a: 1}\n"
        )
        assert tree == {
            "seed": 3,
            "model": {"channels": [4, 8]},
            "data": {"task_classes": {"a": 1}},
        }

    def test_dict_entry_key(self):
        tree = parse_config_text("data.task_classes.liver = 1")
        assert tree == {"data": {"task_classes": {"liver": 1}}}

    def test_duplicate_key_names_both_lines(self):
        with pytest.raises(ConfigError, match=r"x.conf:3: 'seed' already set on line 1"):
            parse_config_text("seed = 1\n\nseed = 2\n", "x.conf")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="foo.bar"):
            parse_config_text("foo.bar = 1")

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("model.width = 3")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":1:"):
            parse_config_text("seed 3")

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            parse_config_text("model.channels = [1, 2")

    def test_conflicting_keys(self):
        with pytest.raises(ConfigError):
            parse_config_text("fed = 1\nfed.rounds = 2")


class TestLoadConfig:
    """Test loading, overrides and cross-field validation."""

    def test_shipped_desk_config(self):
        config = load_config()
        assert config.name == "desk"
        assert config.model.channels == [8, 16, 32]
        assert config.data.node_sizes == {"liver": 200, "spleen": 60}
        assert config.fed.total_local_epochs == config.train.baseline_epochs == 80
        assert config.fed.listen == "127.0.0.1:7461"

    def test_shipped_full_scale_config(self):
        config = load_config(settings.config_dir / "full.conf")
        assert config.model.spatial_dims == 3
        assert config.model.channels == [16, 32, 64, 128, 256]
        assert config.fed.rounds == 1000

    def test_overrides(self, tiny_config_file):
        config = load_config(tiny_config_file, ["train.batch_size=4", "seed = 9"])
        assert config.train.batch_size == 4
        assert config.seed == 9
        assert config.fed.seed == 9

    def test_override_may_repeat_file_key(self, tiny_config_file, tmp_path):
        out = json.dumps(str(tmp_path / "runs"))
        config = load_config(tiny_config_file, [f"output_dir={out}", "name=again"])
        assert config.output_dir == Path(tmp_path / "runs")
        assert config.name == "again"

    def test_unknown_override(self, tiny_config_file):
        with pytest.raises(ConfigError, match="override 1"):
            load_config(tiny_config_file, ["foo.bar=1"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.conf")

    def test_task_mismatch(self, tiny_config_file):
        with pytest.raises(ConfigError, match="model.tasks"):
            load_config(tiny_config_file, ["model.tasks=[liver]"])

    def test_patch_not_divisible(self, tiny_config_file):
        with pytest.raises(ConfigError):
            load_config(tiny_config_file, ["train.patch_size=[7, 7]"])

    def test_patch_larger_than_volume(self, tiny_config_file):
        with pytest.raises(ConfigError):
            load_config(tiny_config_file, ["train.patch_size=[32, 32]"])

    def test_rank_mismatch(self, tiny_config_file):
        with pytest.raises(ConfigError):
            load_config(tiny_config_file, ["model.spatial_dims=3"])

    def test_separate_federation_seed(self, tiny_config_file):
        with pytest.raises(ConfigError, match="fed.seed"):
            load_config(tiny_config_file, ["fed.seed=5"])

    def test_node_for_unknown_task(self, tiny_config_file):
        with pytest.raises(ConfigError):
            load_config(tiny_config_file, ["fed.nodes=[{node_id: 0, task: kidney}]"])

    def test_field_errors_are_listed(self, tiny_config_file):
        with pytest.raises(ConfigError, match="train.batch_size"):
            load_config(tiny_config_file, ["train.batch_size=0"])


class TestExperimentConfig:
    def test_class_of(self):
        assert ExperimentConfig().class_of("spleen") == 2
