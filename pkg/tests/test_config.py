"""Tests for configuration loading and validation."""

from pathlib import Path

import pytest
import yaml

from certsmooth.config import RunConfig, config_hash, config_seeds, load_config, validate_config
from certsmooth.errors import ConfigurationError

REPO_CONFIG = Path(__file__).parent.parent / "config.yaml"


def _write(tmp_path: Path, data: dict) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestLoadConfig:

    def test_repository_config_is_valid(self, monkeypatch):
        monkeypatch.delenv("CERTSMOOTH_SEED", raising=False)
        config = load_config(REPO_CONFIG)
        assert validate_config(config) == []
        assert config.smoothing.n0 == 100
        assert config.smoothing.alpha == 0.001
        assert config.base.train.lr_step == 20

    def test_defaults_fill_missing_sections(self, tmp_path):
        config = load_config(_write(tmp_path, {"smoothing": {"sigma": 0.5}}))
        assert config.smoothing.sigma == 0.5
        assert config.data.k == 4
        assert config.surrogate.network.train.batch_size == 128

    def test_unknown_keys_rejected(self, tmp_path):
        path = _write(tmp_path, {"smoothing": {"sigma": 0.5, "sigmaa": 1.0}, "extra": 1})
        with pytest.raises(ConfigurationError) as info:
            load_config(path)
        assert "smoothing.sigmaa" in str(info.value)
        assert "extra" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.yaml")

    def test_env_expansion(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CERTSMOOTH_TEST_ROOT", "/scratch")
        config = load_config(_write(tmp_path, {"paths": {"workdir": "${CERTSMOOTH_TEST_ROOT}/run"}}))
        assert config.paths.workdir == "/scratch/run"

    def test_seed_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CERTSMOOTH_SEED", "42")
        config = load_config(_write(tmp_path, {"data": {"seed": 1}}))
        assert set(config_seeds(config).values()) == {42}

    def test_bad_seed_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CERTSMOOTH_SEED", "abc")
        with pytest.raises(ConfigurationError):
            load_config(_write(tmp_path, {}))


class TestValidateConfig:

    def test_defaults_are_valid(self):
        assert validate_config(RunConfig()) == []

    def test_reports_every_issue(self):
        config = RunConfig()
        config.smoothing.n = 10
        config.smoothing.alpha = 1.5
        config.data.generator = "spirals"
        config.bench.n_sweep = [1000, 100]
        config.variance.resamples = 1
        issues = validate_config(config)
        assert len(issues) == 5
        assert any("n >= n0" in issue for issue in issues)

    def test_bad_training_settings(self):
        config = RunConfig()
        config.surrogate.network.train.adam_beta1 = 1.0
        config.base.hidden = [64, 0]
        issues = validate_config(config)
        assert any("surrogate.network.train.adam_beta1" in issue for issue in issues)
        assert any("base.hidden" in issue for issue in issues)


class TestConfigHash:

    def test_ignores_paths_and_threads(self):
        a, b = RunConfig(), RunConfig()
        b.paths.workdir = "elsewhere"
        b.runtime.threads = 8
        assert config_hash(a) == config_hash(b)

    def test_changes_with_semantic_fields(self):
        a, b = RunConfig(), RunConfig()
        b.smoothing.sigma = 0.5
        assert config_hash(a) != config_hash(b)
        c = RunConfig()
        c.surrogate.network.hidden = [32, 32]
        assert config_hash(a) != config_hash(c)
