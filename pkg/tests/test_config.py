import math

import pytest
from hypothesis import given, strategies as st

from santafe_lob.config import (ConfigError, ExperimentConfig, SweepSpec, dump_config, load_config,
                                parse_config_text, parse_pairs, preset_config)
from santafe_lob.params import PAPER, SeedSpec

TEXT = """
# desk run
sim.lambda = 1000
sim.mu = 0.1      # small mu
run.measure_time = 20000
sweep.mu_min = 0.1
sweep.mu_max = 100
sweep.points = 4
est.msd_tau1 = 5
est.msd_tau2 = 50
seed.master = 0x10
"""


def test_parse_example():
    cfg = parse_config_text(TEXT).validate()
    assert cfg.params.mu == 0.1 and cfg.measure_time == 20000.0
    assert cfg.sweep == SweepSpec(0.1, 100.0, 4)
    assert cfg.estimators.msd_range == (5.0, 50.0)
    assert cfg.seed == SeedSpec(16, 0)


def test_roundtrip_file(tmp_path):
    cfg = parse_config_text(TEXT)
    path = tmp_path / "c.txt"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


@given(mu=st.floats(0, 1e3), T=st.floats(0, 1e6), lam=st.floats(1e-3, 1e7), seed=st.integers(0, 2**64 - 1),
       points=st.integers(1, 50), thr=st.integers(1, 64), log=st.booleans(),
       step=st.none() | st.floats(1e-9, 1.0))
def test_roundtrip_property(mu, T, lam, seed, points, thr, log, step):
    cfg = parse_pairs({"sim.mu": repr(mu), "run.measure_time": repr(T), "sim.lambda": repr(lam),
                       "seed.master": str(seed), "sweep.mu_min": "0.5", "sweep.mu_max": "5",
                       "sweep.points": str(points), "run.threads": str(thr),
                       "run.event_log": str(log).lower()})
    if step is not None:
        cfg = parse_pairs({"theory.grid_step": repr(step)}, cfg)
    assert parse_config_text(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text,msg", [
    ("sim.nope = 1", "unknown key"),
    ("sim.mu = abc", "bad value"),
    ("sim.mu = 1\nsim.mu = 2", "duplicate"),
    ("sim.mu", "expected key"),
    ("sweep.points = 3", "sweep needs"),
    ("est.msd_tau1 = 3", "go together"),
    ("run.event_log = maybe", "bad value"),
])
def test_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config_text(text)


def test_validate_rejects():
    with pytest.raises(ConfigError):
        parse_config_text("run.measure_time = -1").validate()
    with pytest.raises(ConfigError):
        parse_config_text("run.threads = 0").validate()
    with pytest.raises(ConfigError):
        parse_config_text("sweep.mu_min = 10\nsweep.mu_max = 1\nsweep.points = 3").validate()


def test_sweep_grid_geometric():
    g = SweepSpec(0.1, 100.0, 4).grid()
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(100.0)
    assert all(math.isclose(g[i + 1] / g[i], 10.0) for i in range(3))


def test_presets():
    assert preset_config("paper").params == PAPER
    with pytest.raises(ConfigError):
        preset_config("huge")
    assert ExperimentConfig().validate().params.lam == 1000.0
