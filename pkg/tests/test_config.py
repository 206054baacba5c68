import dataclasses

import pytest

from windowbench.config import ConfigError, from_dict, load_config, resolve

BASE = {"seed": 1}


def test_seed_is_mandatory_and_integer():
    with pytest.raises(ConfigError, match="seed"):
        from_dict({})
    with pytest.raises(ConfigError):
        from_dict({"seed": "7"})
    with pytest.raises(ConfigError):
        from_dict({"seed": True})


def test_unknown_sections_and_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config sections"):
        from_dict({"seed": 1, "plots": {}})
    with pytest.raises(ConfigError, match=r"\[sweep\] unknown keys: colour"):
        from_dict({"seed": 1, "sweep": {"colour": "red"}})
    with pytest.raises(ConfigError, match=r"\[synth\]"):
        from_dict({"seed": 1, "synth": {"text_signal_band": [0, 90]}})


def test_lists_become_tuples_and_seed_flows_to_synth():
    cfg = from_dict({"seed": 11, "sweep": {"windows": ["0", "3"]}})
    assert cfg.sweep.windows == ("0", "3") and cfg.synth.seed == 11
    assert cfg.with_seed(12).synth.seed == 12
    pinned = from_dict({"seed": 11, "synth": {"seed": 5}})
    assert pinned.synth.seed == 5


def test_digest_tracks_content():
    a, b = from_dict(BASE), from_dict(BASE)
    assert a.digest() == b.digest()
    assert a.digest() != dataclasses.replace(a, seed=2).digest()
    assert from_dict(a.to_dict()).digest() == a.digest()


def test_load_config_paths_and_errors(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('seed = 4\n[paths]\ncorpus = "data/corpus"\n')
    cfg = load_config(p)
    assert resolve(cfg, cfg.paths.corpus) == tmp_path / "data" / "corpus"
    assert str(resolve(cfg, "/abs")) == "/abs"
    with pytest.raises(ConfigError, match="missing.toml"):
        load_config(tmp_path / "missing.toml")
    p.write_text("seed = \n")
    with pytest.raises(ConfigError, match="c.toml"):
        load_config(p)


def test_shipped_configs_load():
    from pathlib import Path

    for p in sorted((Path(__file__).parents[1] / "configs").glob("*.toml")):
        cfg = load_config(p)
        assert cfg.seed is not None
