import json

import numpy as np
import pytest

from eplab import ConfigError, Grid, Variant
from eplab.config import build_background, initial_fields, load, loads, normalize, set_param


def test_defaults_filled():
    cfg = normalize({"scenario": "pde", "nu": 0.5})
    assert cfg["solver"] == "lagrangian" and cfg["particles"] == 1024 and cfg["nu"] == 0.5
    assert cfg["background"]["kind"] == "constant"


@pytest.mark.parametrize("missing", ["scenario", "nu"])
def test_required_keys(missing):
    raw = {"scenario": "pde", "nu": 1.0}
    del raw[missing]
    with pytest.raises(ConfigError, match=missing):
        normalize(raw)


def test_dotted_and_nested_are_equivalent():
    a = normalize({"scenario": "pde", "nu": 1, "initial.rho.amplitude": 0.1, "background.envelope.r1": 0.2})
    b = normalize({"scenario": "pde", "nu": 1, "initial": {"rho": {"amplitude": 0.1}},
                   "background": {"envelope": {"r1": 0.2}}})
    assert a == b


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="initial.rho.amplitud"):
        normalize({"scenario": "pde", "nu": 1, "initial.rho.amplitud": 0.1})


@pytest.mark.parametrize("key,value", [
    ("nu", -1.0), ("grid", 7), ("particles", 32), ("dt", 0.0), ("solver", "spectral"),
    ("background.kind", "ramp"), ("nu", True), ("eulerian.speed", "fast"),
])
def test_invalid_values(key, value):
    with pytest.raises(ConfigError, match=key.split(".")[-1]):
        normalize({"scenario": "pde", "nu": 1.0, key: value})


def test_background_vacuum_rejected():
    with pytest.raises(ConfigError, match="background"):
        normalize({"scenario": "pde", "nu": 1, "background.kind": "general_decay",
                   "background.shape.amplitude": 2.0})


def test_phaseplane_rejects_boltzmann():
    with pytest.raises(ConfigError):
        normalize({"scenario": "phaseplane", "nu": 1, "background.kind": "boltzmann"})


def test_json_errors_report_position():
    with pytest.raises(ConfigError, match=r"cfg.json:2:\d+"):
        loads('{"scenario": "pde",\n "nu": }', "cfg.json")


def test_load_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"scenario": "pde", "nu": 2.0}))
    assert load(p)["nu"] == 2.0


def test_exponential_amplitude_folded_into_C1():
    cfg = normalize({"scenario": "pde", "nu": 1, "background.kind": "exponential_decay",
                     "background.shape.amplitude": 0.2, "background.envelope.r1": 0.5})
    p = build_background(cfg)
    assert p.variant is Variant.EXPONENTIAL_DECAY
    assert p.envelope.C1 == pytest.approx(0.2)
    assert p(0.0, 0.0) == pytest.approx(1.2)
    assert p.deviation_sup(2.0) == pytest.approx(0.2 * np.exp(-1.0))


def test_initial_fields_default_base_is_neutral():
    cfg = normalize({"scenario": "pde", "nu": 1, "background.cbar": 2.0, "grid": 32,
                     "initial.rho.amplitude": 0.1, "initial.u.amplitude": 0.05})
    rho, u = initial_fields(cfg)
    assert rho.mean() == pytest.approx(2.0, abs=1e-14)
    assert u.values[8] == pytest.approx(0.05 * np.sin(2 * np.pi * Grid(32).nodes[8]))


def test_set_param_paths():
    cfg = normalize({"scenario": "pde", "nu": 1})
    assert set_param(cfg, "nu", 2)["nu"] == 2.0
    assert set_param(cfg, "r1", 0.1)["background"]["envelope"]["r1"] == 0.1
    assert set_param(cfg, "amplitude", 0.3)["background"]["shape"]["amplitude"] == 0.3
    assert set_param(cfg, "cbar", 1.5)["background"]["cbar"] == 1.5
    with pytest.raises(ConfigError):
        set_param(cfg, "gamma", 1.0)
