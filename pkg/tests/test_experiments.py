import json
import math

import numpy as np
import pytest

from d2dcast.experiments import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    read_results,
    run_scenario,
    scenario_b,
    write_results,
)

from conftest import G01


def _rows(rows, metric, estimator):
    return {r.K: r for r in rows if r.metric == metric and r.estimator == estimator}


@pytest.fixture(scope="module")
def sweep_a():
    cfg = ExperimentConfig(
        scenario="a",
        K_list=(10, 100, 1000),
        metrics=("multicast_rate", "outage_rate"),
        estimators=("baseline", "collapsed", "asymptotic"),
        trials=20_000,
        seed=4,
    )
    return run_scenario(cfg)


class TestScenarioA:
    def test_asymptotic_outage_is_K_free(self, sweep_a):
        r = _rows(sweep_a, "outage_rate", "asymptotic")
        assert r[10].value == r[100].value == r[1000].value
        assert r[10].s == pytest.approx(282.0464405528735, rel=1e-5)

    def test_baseline_outage_ratio(self, sweep_a):
        r = _rows(sweep_a, "outage_rate", "baseline")
        # s scales as 1/K, so s(1000) = s(100)/10 exactly.
        assert r[1000].s == pytest.approx(r[100].s / 10, rel=1e-12)
        assert r[1000].value / r[100].value == pytest.approx(0.20908239345524926, rel=1e-9)

    def test_baseline_multicast_is_K_free(self, sweep_a):
        r = _rows(sweep_a, "multicast_rate", "baseline")
        assert r[10].value == r[100].value == r[1000].value
        assert r[10].value == pytest.approx(10.840348139161021, abs=1e-5)

    def test_collapsed_multicast_increases(self, sweep_a):
        r = _rows(sweep_a, "multicast_rate", "collapsed")
        assert r[10].value < r[100].value < r[1000].value

    def test_mc_outage_near_asymptote(self, sweep_a):
        mc = _rows(sweep_a, "outage_rate", "collapsed")
        asy = _rows(sweep_a, "outage_rate", "asymptotic")
        for K in (100, 1000):
            assert abs(mc[K].value / asy[K].value - 1) <= 0.10
            assert mc[K].stderr > 0

    def test_sorted(self, sweep_a):
        keys = [r.sort_key() for r in sweep_a]
        assert keys == sorted(keys)


def test_vs_s_rows_cover_grid():
    cfg = ExperimentConfig(scenario="b", K_list=(20,), s_list=(0.0, 10.0, 1e4), metrics=("rate_vs_s", "outage_vs_s"),
                           estimators=("baseline", "collapsed", "asymptotic"), trials=2000)
    rows = run_scenario(cfg)
    assert len(rows) == 2 * 3 * 3
    zero = [r for r in rows if r.s == 0.0]
    assert all(r.value == 0.0 for r in zero)
    # Baseline all-success is zero for any s > 0 once a class has no direct link.
    base = [r for r in rows if r.metric == "outage_vs_s" and r.estimator == "baseline" and r.s > 0]
    assert all(r.value == 1.0 for r in base)


def test_file_round_trip(tmp_path):
    cfg = ExperimentConfig(scenario="a", K_list=(10,), s_list=(1.0, 100.0), metrics=("rate_vs_s",),
                           estimators=("baseline", "collapsed"), trials=500, seed=1)
    rows = run_scenario(cfg)
    for fmt in ("csv", "json"):
        path = tmp_path / f"out.{fmt}"
        write_results(rows, path, fmt)
        assert read_results(path) == rows
    header = (tmp_path / "out.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_HEADER)


def test_runtime_column_is_zero_by_default():
    cfg = ExperimentConfig(scenario="a", K_list=(10,), metrics=("outage_rate",), estimators=("baseline",))
    assert run_scenario(cfg)[0].runtime_ms == 0.0
    timed = run_scenario(ExperimentConfig(scenario="a", K_list=(10,), metrics=("outage_rate",),
                                          estimators=("baseline",), record_runtime=True))
    assert timed[0].runtime_ms >= 0.0


def test_rerun_and_threads_are_byte_identical(tmp_path):
    cfg = ExperimentConfig(scenario="c", K_list=(12,), realizations=4, s_list=(1e-7, 1e-6),
                           metrics=("rate_vs_s", "outage_rate"), estimators=("baseline", "collapsed"), trials=2000, seed=9)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results(run_scenario(cfg), a)
    write_results(run_scenario(cfg, threads=4), b)
    assert a.read_bytes() == b.read_bytes()


def test_scenario_c_stderr_shrinks_with_realizations():
    base = dict(scenario="c", K_list=(20,), metrics=("outage_rate",), estimators=("baseline",), seed=3)
    few = run_scenario(ExperimentConfig(realizations=25, **base))[0]
    many = run_scenario(ExperimentConfig(realizations=100, **base))[0]
    # Four times the realizations should roughly halve the standard error.
    assert 1.0 < few.stderr / many.stderr < 4.0


def test_scenario_c_skips_class_formulas(caplog):
    cfg = ExperimentConfig(scenario="c", K_list=(10,), realizations=2, metrics=("multicast_rate",),
                           estimators=("baseline", "approx"))
    rows = run_scenario(cfg)
    assert {r.estimator for r in rows} == {"baseline"}
    assert "skipping" in caplog.text


class TestConfig:
    def test_db_markers(self):
        cfg = config_from_dict({
            "scenario": {"id": "b", "alpha": [0.5, 0.5],
                         "g": {"unit": "dB", "values": [[None, 46, None], [None, 23, 13], [None, 13, 23]]}},
            "K_list": [10],
        })
        assert cfg.model.g[0, 2] == 0.0
        assert cfg.model.g[0, 1] == pytest.approx(G01)
        assert np.array_equal(cfg.model.g, scenario_b().g)

    def test_zero_db_is_not_zero_gain(self):
        # 0 dB is unit gain; only -inf dB switches the link off.
        cfg = config_from_dict({
            "scenario": {"id": "b", "g": {"unit": "dB", "values": [["-inf", 46, 0], ["-inf", 23, 23], ["-inf", 23, 23]]}},
        })
        assert cfg.model.g[0, 2] == 1.0

    def test_rejects_unknown_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"scenario": "a", "trails": 10})

    @pytest.mark.parametrize("bad", [{"K_list": [100, 10]}, {"eps": 0}, {"metrics": ["nope"]}, {"trials": 0}])
    def test_rejects_bad_values(self, bad):
        with pytest.raises(ConfigError):
            config_from_dict({"scenario": "a", **bad})

    def test_load_errors_name_the_path(self, tmp_path):
        with pytest.raises(ConfigError, match="missing.json"):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        with pytest.raises(ConfigError, match="bad.json"):
            load_config(bad)

    def test_load_ok(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"scenario": {"id": "c", "radius_m": 100}, "K_list": [5], "realizations": 3}))
        cfg = load_config(p)
        assert cfg.geometric and cfg.radius_m == 100 and cfg.realizations == 3
