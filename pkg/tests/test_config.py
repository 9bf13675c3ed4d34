import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swimrheo.config import DEFAULTS, PRESETS, parse_config, resolve
from swimrheo.errors import ConfigError, ParameterRangeError


def write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_is_fully_defaulted(tmp_path):
    cfg = parse_config(write(tmp_path, "mode: sweep\npreset: fig1\n"))
    assert cfg.mode == "sweep"
    assert cfg.params.N == 200
    assert cfg.params.phi == pytest.approx(0.02)
    assert cfg.params.gamma == 0.1
    assert cfg.sweep["parameter"] == "B"
    assert cfg.seeds == DEFAULTS["seeds"]
    assert cfg.kinetic == DEFAULTS["kinetic"]
    assert cfg.quadrature.measure == "area"
    assert cfg.ibm["duration"] == PRESETS["fig1"]["ibm"]["duration"]


def test_explicit_keys_override_preset(tmp_path):
    cfg = parse_config(write(tmp_path, "mode: sweep\npreset: fig2\nparams: {gamma: 0.5}\nseeds: {count: 3}\n"))
    assert cfg.params.gamma == 0.5
    assert cfg.params.B == 0.2
    assert cfg.seeds["count"] == 3
    assert cfg.seeds["master"] == DEFAULTS["seeds"]["master"]


def test_out_of_range_B_names_the_key(tmp_path):
    with pytest.raises(ParameterRangeError) as info:
        parse_config(write(tmp_path, "mode: asymptotic\nparams: {B: 1.5}\n"))
    assert info.value.key == "B"
    assert "B" in str(info.value)


def test_out_of_range_sweep_value_names_the_key():
    with pytest.raises(ParameterRangeError) as info:
        resolve({"mode": "sweep", "sweep": {"parameter": "gamma", "values": [0.1, -1.0]}})
    assert info.value.key == "gamma"


def test_two_axis_sweep_is_a_schema_error():
    with pytest.raises(ConfigError) as info:
        resolve({"mode": "sweep", "sweep": {"parameter": ["B", "phi"], "values": [0.1]}})
    assert info.value.key == "sweep.parameter"
    with pytest.raises(ConfigError) as info:
        resolve({"mode": "sweep", "sweep": {"parameter": "B", "values": [0.1], "also": "phi"}})
    assert info.value.key == "sweep.also"


@pytest.mark.parametrize("data, key", [
    ({"mode": "kinetic", "colour": 1}, "colour"),
    ({"mode": "kinetic", "params": {"Bee": 0.1}}, "params.Bee"),
    ({"mode": "kinetic", "ibm": {"durtion": 3}}, "ibm.durtion"),
    ({"mode": "kinetic", "density": {"kind": "gaussian", "sigma_x": 1, "radius": 2}}, "density.radius"),
])
def test_unknown_keys_are_errors_naming_the_key(data, key):
    with pytest.raises(ConfigError) as info:
        resolve(data)
    assert info.value.key == key
    assert key in str(info.value)


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "absent.yaml")
    with pytest.raises(ConfigError, match="YAML"):
        parse_config(write(tmp_path, "mode: [unclosed\n"))


def test_distinct_messages_per_category(tmp_path):
    messages = set()
    for data in ({"mode": "nonsense"}, {"mode": "kinetic", "zz": 1}, {"mode": "kinetic", "params": {"B": 2.0}}):
        with pytest.raises(ConfigError) as info:
            resolve(data)
        messages.add(str(info.value))
    assert len(messages) == 3


def test_phi_and_L_are_exclusive():
    with pytest.raises(ConfigError):
        resolve({"mode": "kinetic", "params": {"L": 5.0, "phi": 0.02}})


def test_sweep_mode_needs_sweep_section():
    with pytest.raises(ConfigError) as info:
        resolve({"mode": "sweep"})
    assert info.value.key == "sweep"


def test_config_hash_tracks_content():
    a = resolve({"mode": "asymptotic", "params": {"B": 0.1}})
    b = resolve({"mode": "asymptotic", "params": {"B": 0.1}})
    c = resolve({"mode": "asymptotic", "params": {"B": 0.2}})
    assert a.config_hash == b.config_hash != c.config_hash
    json.loads(json.dumps(a.raw, default=str))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.999), st.floats(0.0, 10.0))
def test_valid_ranges_round_trip(B, gamma):
    cfg = resolve({"mode": "asymptotic", "params": {"B": B, "gamma": gamma}})
    assert cfg.params.B == B and cfg.params.gamma == gamma
