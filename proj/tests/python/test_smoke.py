import math

import pytest

import acfleet


def test_default_config_round_trips():
    cfg = acfleet.default_config()
    assert acfleet.resolve_config(cfg) == cfg
    assert len(acfleet.config_hash(cfg)) == 16
    assert acfleet.config_hash(cfg) == acfleet.config_hash()


def test_unknown_key_is_a_config_error():
    with pytest.raises(acfleet.ConfigError):
        acfleet.resolve_config({"seeed": 2})
    with pytest.raises(acfleet.ConfigError):
        acfleet.resolve_config("{not json")
    assert issubclass(acfleet.ConfigError, acfleet.AcfleetError)


def test_case_config_applies_conditions():
    c1 = acfleet.case_config(1)
    c3 = acfleet.case_config(3)
    assert c1 != c3
    with pytest.raises(acfleet.ConfigError):
        acfleet.case_config(11)


def test_cycle_durations():
    r = acfleet.cycle_durations(25.0, water_heat=600.0)
    assert r["on_time"] > 0 and r["off_time"] > 0
    assert r["period"] == pytest.approx(r["on_time"] + r["off_time"])
    assert abs(r["heat_injected"] - r["heat_removed"]) < 0.01 * r["heat_injected"]
    with pytest.raises(acfleet.NeverOnError):
        acfleet.cycle_durations(20.0, water_heat=0.0, fixed_heat=0.0)


def test_calibration_hits_its_slope():
    fit = acfleet.calibrate()
    assert fit["loss_factor"] >= 1.0
    assert fit["slope_check"] == pytest.approx(0.0136, rel=1e-3)


def test_metrics():
    assert acfleet.nrmse([100.0] * 50, [110.0] * 50) == pytest.approx(0.10)
    t, v = acfleet.synthetic_trace(duration=1200.0)
    ref = [1e6 * (1 + 0.2 * x) for x in v]
    s = acfleet.pjm_score(ref, ref)
    assert s["composite"] == pytest.approx(1.0)
    assert len(t) == len(v)


def test_short_experiment():
    cfg = acfleet.case_config(1)
    cfg["timing"]["duration"] = 600
    r = acfleet.run_experiment(cfg, series=True)
    assert 0 < r["nrmse"] < 0.1
    assert len(r["reference"]) == len(r["achieved"]) > 0
    assert math.isfinite(r["baseline_w"]) and r["baseline_w"] > 0
    again = acfleet.run_experiment(cfg)
    assert again["nrmse"] == r["nrmse"]


def test_validation_presets_listed():
    assert "exp1" in acfleet.validation_presets()
