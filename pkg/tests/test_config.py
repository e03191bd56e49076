import json

import pytest

from dibskit.config import (
    DEFAULTS,
    PROFILES,
    ConfigError,
    config_hash,
    deep_merge,
    load_config,
    manifest,
    validate,
)


def test_defaults_are_valid():
    validate(DEFAULTS)
    for name in PROFILES:
        cfg = load_config(overrides={"profile": name})
        assert cfg["profile"] == name


def test_profiles_carry_table_values():
    assert load_config(overrides={"profile": "bge-d20"})["inference"]["alpha_slope"] == 2.0
    lin = load_config(overrides={"profile": "lingauss-d20"})["inference"]
    assert (lin["alpha_slope"], lin["gamma_z"], lin["gamma_theta"]) == (0.2, 5.0, 500.0)
    nl = load_config(overrides={"profile": "nonlin-d50"})["inference"]
    assert (nl["alpha_slope"], nl["gamma_z"], nl["gamma_theta"]) == (0.01, 15.0, 2000.0)


def test_negative_bandwidth_names_field(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("inference:\n  gamma_z: -1.0\n")
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert any(e.startswith("inference.gamma_z") for e in err.value.errors)


def test_every_violation_listed(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("inference:\n  gamma_z: -1.0\n  n_particles: 0\nbogus: 1\n")
    with pytest.raises(ConfigError) as err:
        load_config(p)
    text = "\n".join(err.value.errors)
    assert "inference.gamma_z" in text and "inference.n_particles" in text and "bogus" in text


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="kernel_width"):
        load_config(overrides={"inference": {"kernel_width": 3}})


def test_unknown_profile():
    with pytest.raises(ConfigError, match="profile"):
        load_config(overrides={"profile": "nope"})


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.yaml"):
        load_config(tmp_path / "missing.yaml")


def test_user_values_override_profile(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("profile: bge-d20\ninference:\n  gamma_z: 7.5\n")
    cfg = load_config(p)
    assert cfg["inference"]["gamma_z"] == 7.5 and cfg["inference"]["alpha_slope"] == 2.0


def test_manifest_round_trip(tmp_path):
    cfg = load_config(overrides={"seed": 5})
    man = manifest(cfg, "infer")
    assert man["config_sha256"] == config_hash(cfg) and man["seed"] == 5
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(man))
    assert load_config(p) == cfg


def test_deep_merge_does_not_mutate():
    base = {"a": {"b": 1}}
    out = deep_merge(base, {"a": {"c": 2}})
    assert out == {"a": {"b": 1, "c": 2}} and base == {"a": {"b": 1}}
