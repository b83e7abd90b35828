import math

import pytest

from sinrcast.coloring import load_overrides, log_n, make_profile
from sinrcast.errors import CalibrationFailed, InvalidInputError, TopologyParseError
from sinrcast.geometry import generate_topology, write_topology
from sinrcast.harness import (
    ExperimentConfig,
    base_coloring,
    calibrate_profile,
    fit_scaling,
    measure_hop_progress,
    run_trial,
    write_overrides,
)
from sinrcast.sinr import SinrParams


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(protocol="consensus", family="line-uniform", n=17,
                           topology_params={"spacing": 0.3}, topology_seed=4, alpha=3.5, gamma=1.0,
                           profile="theory", x=255, values="1,2,3", seeds=[3, 1, 4], out_dir="out",
                           wake="0:5, 3:inf", budget_mult=2.5)
    assert ExperimentConfig.loads(cfg.dumps()) == cfg
    path = tmp_path / "c.cfg"
    cfg.write(path)
    assert ExperimentConfig.read(path) == cfg
    assert ExperimentConfig.loads(ExperimentConfig().dumps()) == ExperimentConfig()


def test_config_rejects_unknown_protocol():
    with pytest.raises(InvalidInputError):
        ExperimentConfig(protocol="flood")
    with pytest.raises(InvalidInputError):
        ExperimentConfig.loads("[protocol\nname = x")


def test_run_trial_deterministic_and_replayed():
    cfg = ExperimentConfig(protocol="s-broadcast", n=60)
    a, ta = run_trial(cfg, 7)
    b, _ = run_trial(cfg, 7)
    assert a.trace_hash == b.trace_hash
    assert a.invariants["trace-replay"]
    c, _ = run_trial(cfg, 8)
    assert c.trace_hash != a.trace_hash


def test_run_trial_single_station_broadcast():
    summ, trace = run_trial(ExperimentConfig(protocol="nos-broadcast", n=1), 0)
    assert summ.success and summ.rounds == 0 and trace.transmit_count == 0


def test_run_trial_every_protocol():
    for proto in ("nos-broadcast", "s-broadcast", "wakeup-adhoc", "wakeup-colored", "consensus",
                  "leader-election", "coloring"):
        summ, _ = run_trial(ExperimentConfig(protocol=proto, n=25, wake="single"), 2)
        assert summ.success, proto


def test_invalid_topology_file(tmp_path):
    path = tmp_path / "bad.topo"
    path.write_text("#space=line epsilon=0.5\n0, 0\n1\n")
    with pytest.raises(TopologyParseError, match="line 3"):
        run_trial(ExperimentConfig(topology_file=str(path)), 0)


def test_topology_file_trial(tmp_path):
    topo = generate_topology("line-uniform", 12, {"spacing": 0.3})
    path = tmp_path / "l.topo"
    write_topology(topo, path)
    summ, _ = run_trial(ExperimentConfig(topology_file=str(path), n=999), 0)
    assert summ.success and len(summ.first_informed) == 12


def test_fit_scaling_planted_slope():
    data = [(D, 8 * D, 7 * D * log_n(8 * D) ** 2) for D in (4, 8, 16, 32) for _ in range(3)]
    rep = fit_scaling(data, "nos")
    assert rep.slope == pytest.approx(7.0)
    assert rep.intercept == pytest.approx(0.0, abs=1e-6)
    assert rep.r2 == pytest.approx(1.0)
    assert rep.loo_ratio == pytest.approx(1.0)


def test_fit_scaling_constant_rounds():
    rep = fit_scaling([(D, 8 * D, 50.0) for D in (4, 8, 16, 32)], "sb")
    assert abs(rep.slope) < 1e-9


def test_fit_scaling_needs_three_diameters():
    with pytest.raises(InvalidInputError):
        fit_scaling([(4, 32, 10), (8, 64, 20)], "sb")
    with pytest.raises(InvalidInputError):
        fit_scaling([(4, 32, 10)], "quadratic")


def test_calibrate_one_point_grid():
    base = load_overrides()
    ov, log = calibrate_profile(ns=(50,), seeds=2, grid={"c_eps": [32.0]})
    assert ov == base and len(log) == 1
    with pytest.raises(CalibrationFailed) as info:
        calibrate_profile(ns=(50,), seeds=2, grid={"c_eps": [2.0]})
    assert info.value.best.overrides["c_eps"] == 2.0


def test_write_overrides_round_trip(tmp_path):
    path = tmp_path / "o.cfg"
    write_overrides({"c_eps": 12.5, "C1": 1.0}, path)
    assert load_overrides(path) == {"c_eps": 12.5, "C1": 1.0}
    prof = make_profile("file", SinrParams(), 2.0, 50, path)
    assert prof.c_eps == 12.5 and prof.mode == "tuned"


def test_hop_progress_meets_calibrated_rate():
    params = SinrParams()
    topo = generate_topology("uniform-square", 100, {"side": 2.0}, seed=1)
    prof = make_profile("tuned", params, 2.0, 100)
    colors = base_coloring(topo, params, prof, 1)
    rep = measure_hop_progress(topo, params, prof, colors, 0, 1, rounds=10_000)
    assert rep.ci[0] >= rep.p_hat
    assert rep.ci[0] <= rep.frequency <= rep.ci[1]


@pytest.mark.parametrize("family,params,seed,station", [
    ("uniform-square", {"side": math.sqrt(8)}, 0, 199),
    ("uniform-square", {"side": math.sqrt(8)}, 2, 0),
    ("line-uniform", {"spacing": 0.05}, 1, 100),
])
def test_hop_progress_across_layouts(family, params, seed, station):
    p = SinrParams()
    topo = generate_topology(family, 200, params, seed=seed)
    prof = make_profile("tuned", p, topo.space.gamma, 200)
    colors = base_coloring(topo, p, prof, seed)
    rep = measure_hop_progress(topo, p, prof, colors, station, seed, rounds=50_000)
    assert rep.ci[0] >= rep.p_hat
