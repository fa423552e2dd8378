import math

import numpy as np
import pytest

from sampler import (
    AllSingularError,
    CandidateGrid,
    ConfigError,
    FimBank,
    NoiseSpec,
    PRESETS,
    Scenario,
    SignalModel,
    build_bank,
    compare_methods,
    crlb_rmse_curve,
    exhaustive_design,
    preset_config,
    random_baseline,
    run_scenario,
    uniform_decimation,
)
from sampler.bench import clusters
from sampler.designer import selection_objective


def small_config(**over):
    cfg = {
        "name": "small",
        "model": {"kind": "damped_1d", "K": 1},
        "theta": [1.0, 0.2, 0.05, 0.5],
        "grid": {"dims": 1, "sizes": [30], "start": 1},
        "noise": {"variance": 0.1},
        "design": {"gamma_sweep": [6, 9, 12]},
        "eval": {"seed": 4},
    }
    for k, v in over.items():
        cfg[k] = {**cfg.get(k, {}), **v} if isinstance(v, dict) else v
    return cfg


def bank(N=8):
    return build_bank(SignalModel("damped_1d", 1), [1, 0.2, 0.05, 0.5], CandidateGrid.uniform(N, start=1),
                      NoiseSpec(0.1))


# ----------------------------------------------------------------------- baselines


def test_random_baseline_single_trial_is_a_valid_subset():
    b = bank(20)
    res = random_baseline([b], 5, 1, seed=3)
    assert res.indices.size == 5 and np.all(np.diff(res.indices) > 0)
    assert res.objective == pytest.approx(selection_objective([b], res.indices, np.ones(4)))
    again = random_baseline([b], 5, 1, seed=3)
    np.testing.assert_array_equal(res.indices, again.indices)


def test_random_baseline_finds_exhaustive_optimum():
    # 28 subsets; 2000 uniform draws miss a given one with probability < 1e-30
    b = bank(8)
    with pytest.raises(AllSingularError):
        random_baseline([b], 1, 50, seed=0)
    idx, val = exhaustive_design([b], 4)
    res = random_baseline([b], 4, 2000, seed=1, chunk=97)
    assert res.objective == pytest.approx(val, rel=1e-12)
    np.testing.assert_array_equal(res.indices, idx)


def test_random_baseline_counts_singular_draws():
    fims = np.zeros((10, 1, 1))
    fims[0, 0, 0] = 1.0
    res = random_baseline([FimBank(fims)], 1, 200, seed=2)
    assert res.indices.tolist() == [0]
    assert 0 < res.n_singular < 200


def test_uniform_decimation():
    g = CandidateGrid.uniform(50)
    np.testing.assert_array_equal(uniform_decimation(g, 5), [0, 12, 24, 37, 49])
    np.testing.assert_array_equal(uniform_decimation(g, 50), np.arange(50))
    g2 = CandidateGrid.uniform([10, 10])
    sel = uniform_decimation(g2, 9)
    assert sel.size == 9
    assert sorted(set(sel // 10)) == [0, 4, 9] or len(set(sel // 10)) >= 3
    with pytest.raises(ConfigError):
        uniform_decimation(g, 0)


def test_clusters():
    assert clusters([0, 1, 2, 3, 20, 21, 22]) == [[0, 1, 2, 3], [20, 21, 22]]
    assert clusters([5, 1, 11], gap=5) == [[1, 5], [11]]
    assert clusters([]) == []


# ----------------------------------------------------------------------- scenarios


def test_presets_build():
    for name in PRESETS:
        s = Scenario.from_config(preset_config(name))
        assert s.grid.size >= 50 or name == "fig9_12"
    cfg = preset_config("fig1", beta=0.05)
    assert cfg["theta"][2] == 0.05 and cfg["name"] == "fig1_beta0.05"
    assert PRESETS["fig1"]["theta"][2] == 0.1  # presets are not mutated
    with pytest.raises(ConfigError):
        preset_config("nope")


def test_scenario_validation():
    with pytest.raises(ConfigError):
        Scenario.from_config(small_config(design={"gamma": 3, "gamma_sweep": [3]}))
    with pytest.raises(ConfigError):
        Scenario.from_config(small_config(design={"gamma_sweep": [4], "psi": [1, 1]}))
    with pytest.raises(ConfigError):
        Scenario.from_config(small_config(grid={"dims": 2, "sizes": [30]}))
    with pytest.raises(ConfigError):
        Scenario.from_config(small_config(eval={"subsets": {"x": [7]}}))


def test_report_rows_and_columns():
    s = Scenario.from_config(small_config())
    rep = run_scenario(s)
    assert len(rep) == 3
    assert rep.column("M") == [6, 9, 12]
    for row in rep.rows:
        assert row["objective"] == pytest.approx(sum(row[f"crlb_worst_{n}"] for n in s.model.param_names))
        assert row["objective"] >= row["relaxed_objective"] * (1 - 1e-6)  # within the duality gap
    assert all(t["seconds_design"] > 0 for t in rep.timings)
    assert "wall clock" in rep.summary()


def test_report_is_byte_deterministic():
    cfg = small_config(eval={"trials": 20, "baseline_trials": 50, "uniform": True,
                             "estimation_grid": {"width": 3, "points": 5}})
    a = run_scenario(Scenario.from_config(cfg)).to_csv()
    b = run_scenario(Scenario.from_config(cfg)).to_csv()
    assert a == b
    assert "seconds" not in a
    assert a.count("\r\n") == 4
    timed = run_scenario(Scenario.from_config(cfg)).to_csv(include_timings=True)
    assert "seconds_design" in timed.splitlines()[0]


def test_budget_sweep_is_monotone():
    rep = run_scenario(Scenario.from_config(small_config(design={"gamma_sweep": [5, 7, 9, 11, 13, 15]})))
    rel = rep.column("relaxed_objective")
    assert all(b <= a * (1 + 1e-6) for a, b in zip(rel, rel[1:]))


def test_fig2_sizes_increase():
    rep = run_scenario(Scenario.from_config(preset_config("fig2")))
    sizes = rep.column("M")
    assert sizes == sorted(sizes) and len(set(sizes)) == 3
    for row in rep.rows:
        assert row["solver_status"] == "optimal"


def test_noiseless_scenario_reports_zero_bounds():
    s = Scenario.from_config(small_config(noise={"variance": 0.0}, eval={"trials": 3, "uniform": True,
                                          "estimation_grid": {"points": 3}}))
    rep = run_scenario(s)
    assert all(v == 0 for v in rep.column("objective"))
    assert all(v < 1e-12 for v in rep.column("rmse_freq"))
    assert all(v == 0 for v in rep.column("uniform_objective"))


def test_theta_grid_and_offgrid_truth():
    cfg = small_config(theta_grid={"param": "damp1", "lower": 0.05, "delta": 0.02, "count": 4},
                       eval={"trials": 10, "estimation_grid": {"width": 3, "points": 7}})
    s = Scenario.from_config(cfg)
    assert len(s.param_grid()) == 4
    rep = run_scenario(s)
    for row in rep.rows:
        assert row["crlb_worst_damp1"] > row["crlb_best_damp1"]
        assert math.isfinite(row["rmse_damp"])


def test_compare_methods_rows():
    s = Scenario.from_config(small_config(eval={"baseline_trials": 200}))
    rep = compare_methods(s)
    assert len(rep) == 9
    assert rep.column("method")[:3] == ["design", "random", "uniform"]
    with pytest.raises(ConfigError):
        compare_methods(Scenario.from_config(small_config()))


def test_rmse_curve_needs_trials():
    with pytest.raises(ConfigError):
        crlb_rmse_curve(Scenario.from_config(small_config(eval={"trials": 99})))
    s = Scenario.from_config(small_config(design={"gamma_sweep": [12]},
                                          eval={"trials": 100, "estimation_grid": {"points": 7}}))
    rep = crlb_rmse_curve(s)
    assert len(rep) == 1 and "rmse_freq" in rep.columns


def test_reweight_and_cutoff_configs():
    s = Scenario.from_config(small_config(design={"gamma_sweep": [9], "reweight": {"max_iter": 3},
                                                  "rounding": {"rule": "cutoff", "xi": 0.5}}))
    rep = run_scenario(s)
    assert rep.rows[0]["M"] >= 1
    with pytest.raises(ConfigError):
        run_scenario(Scenario.from_config(small_config(design={"gamma_sweep": [9],
                                                               "rounding": {"rule": "cutoff"}})))


def test_infeasible_caps_name_the_sweep_point():
    from sampler import InfeasibleError

    s = Scenario.from_config(small_config(design={"gamma_sweep": [6], "caps": [1e-12, None, None, None]}))
    with pytest.raises(InfeasibleError, match="gamma 6"):
        run_scenario(s)
