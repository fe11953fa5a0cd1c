import pytest

from ditreg.config import ConfigError, PipelineConfig, load_config, parse_config_text


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.layers, cfg.depth, cfg.d_model, cfg.heads, cfg.k) == (3, 6, 64, 4, 20)
    assert (cfg.lam, cfg.k_s, cfg.tau, cfg.temperature) == (30.0, 10, 0.5, 0.1)
    assert cfg.mink_k == 10


def test_text_roundtrip(tmp_path):
    cfg = PipelineConfig(lam=12.5, no_gmcce=True, mode="partial_low")
    path = tmp_path / "c.txt"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg


def test_overrides_beat_file_and_env_sets_seed(tmp_path, monkeypatch):
    path = tmp_path / "c.txt"
    path.write_text("lam = 10  # comment\nseed = 3\n")
    monkeypatch.setenv("DIT_SEED", "7")
    cfg = load_config(path, {"lam": 20.0, "tau": "0.25"})
    assert (cfg.lam, cfg.tau, cfg.seed) == (20.0, 0.25, 7)


def test_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError):
        parse_config_text("bogus = 1")
    with pytest.raises(ConfigError):
        parse_config_text("no_pse = maybe")
    with pytest.raises(ConfigError):
        parse_config_text("just a line")
    with pytest.raises(ConfigError):
        PipelineConfig(tau=1.5)
    with pytest.raises(ConfigError):
        PipelineConfig(d_model=63)


def test_shallow_wide_width():
    cfg = PipelineConfig(shallow_wide=True)
    assert (cfg.pft_depth, cfg.pft_width) == (1, 160)
