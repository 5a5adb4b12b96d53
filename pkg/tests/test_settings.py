import pytest

from errors import ConfigError
from settings import ConfigLoader


def test_load_from_env_file(env_file, service_config):
    assert ConfigLoader.load_config(env_file) == service_config


def test_environment_overrides_env_file(env_file, monkeypatch):
    monkeypatch.setenv("ADSLITE_LISTEN", "0.0.0.0:9000")
    monkeypatch.setenv("ADSLITE_BASE_URL", "https://ads.example/")
    config = ConfigLoader.load_config(env_file)
    assert config.listen_address == ("0.0.0.0", 9000)
    assert config.base_url == "https://ads.example"


def test_defaults_without_env_file(tmp_path):
    config = ConfigLoader.load_config(str(tmp_path / "absent.env"))
    assert config.corpus_path == "data/corpus.jsonl"
    assert config.listen_address == ("127.0.0.1", 8086)
    assert config.library_seed is None
    assert config.default_digest_days == 10
    assert config.affiliation_bias_threshold == 0.9


@pytest.mark.parametrize("key,value", [
    ("ADSLITE_LISTEN", "localhost:http"),
    ("ADSLITE_LIBRARY_SEED", "seven"),
    ("ADSLITE_DIGEST_DAYS", "ten"),
    ("ADSLITE_AFFIL_BIAS_THRESHOLD", "high"),
])
def test_invalid_values_raise_config_error(env_file, monkeypatch, key, value):
    monkeypatch.setenv(key, value)
    with pytest.raises(ConfigError):
        ConfigLoader.load_config(env_file)


def test_validate_accepts_complete_config(service_config):
    assert ConfigLoader.missing_paths(service_config) == []
    assert ConfigLoader.validate_config(service_config) is service_config


def test_validate_reports_missing_paths(env_file, monkeypatch, tmp_path):
    monkeypatch.setenv("ADSLITE_CORPUS_PATH", str(tmp_path / "nowhere.jsonl"))
    monkeypatch.setenv("ADSLITE_PROFILES_PATH", str(tmp_path / "no" / "dir" / "profiles.jsonl"))
    config = ConfigLoader.load_config(env_file)
    with pytest.raises(ConfigError) as excinfo:
        ConfigLoader.validate_config(config)
    assert "corpus:" in excinfo.value.detail
    assert "profiles:" in excinfo.value.detail
    assert "synonyms:" not in excinfo.value.detail
