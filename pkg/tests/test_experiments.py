import json

import numpy as np
import pytest

from partsync.dynamics import Trajectory
from partsync.experiments import (KEEP_RATIO, ExperimentReport, fig3_clean, fit_window,
                                  newton_polish, notglobal_network, notglobal_states,
                                  plateau_value, recovered_beta, refine_equilibrium,
                                  reproduce_figure, robustness_sweep, run_experiment,
                                  s0_state, scalar_sine_flow, sweep_network, sweep_trial,
                                  verify_example_nocon, verify_example_rn_family)
from partsync.liegroup import is_rotation
from partsync.network import gradient_norm


def synthetic(values, field="f_o"):
    traj = Trajectory("PartialState")
    for t, v in enumerate(values):
        d = {"f_s": 1.0, "f_o": 1.0, "f_oe": 1.0, "dist_cs": 0.0, "ortho_err": 0.0}
        d[field] = v
        traj.append(float(t), np.eye(3), d)
    return traj


def test_plateau_value():
    flat = plateau_value(synthetic([1.0] * 50 + [2e-4] * 50), "f_o")
    assert flat["settled"] and flat["value"] == 2e-4
    falling = plateau_value(synthetic(np.exp(-np.arange(100.0))), "f_o")
    assert not falling["settled"]


def test_fit_window():
    traj = synthetic(10.0 ** -np.arange(0, 30.0))
    assert fit_window(traj) == (2.0, 24.0)
    assert fit_window(synthetic([1.0] * 10)) is None


def test_nocon_metrics():
    rep = verify_example_nocon()
    m = rep.metrics
    assert rep.passed
    assert m["f_o"] == 0.0 and m["f_s"] == 12.0
    assert m["triangle"] == "CaseB" and not m["condition_A"] and m["condition_B"]
    assert m["verdict"] == "ExpStable"


def test_refinement_finds_equilibrium():
    net = notglobal_network()
    Q0 = notglobal_states(-0.0558)
    assert gradient_norm(Q0, net) > 1e-2
    Q, grad, _ = refine_equilibrium(Q0, net)
    assert grad < 1e-10
    assert all(is_rotation(q) for q in Q)
    beta, off = recovered_beta(Q)
    assert abs(abs(beta) - 0.01565) < 1e-4 and off < 1e-6


@pytest.mark.parametrize("cd,consensus", [((1.0, 1.0), False), ((0.0, 0.0), True)])
def test_rn_family(cd, consensus):
    rep = verify_example_rn_family(0.0, 0.0, *cd)
    assert rep.passed
    assert (rep.metrics["dist_to_consensus"] < 1e-12) == consensus
    assert rep.metrics["rank_Lg"] == 4


def test_rn_family_precondition_flag():
    rep = verify_example_rn_family(theta=np.pi / 4, phi=np.pi / 4)
    assert not rep.metrics["preconditions_hold"]
    assert "injective" not in rep.checks


def test_s0_flow_helpers():
    y, z = np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])
    R = s0_state(y, z, 0.4)
    assert is_rotation(R)
    assert np.isclose(y @ R @ z, np.sin(0.4)) and np.allclose(R @ np.cross(y, z), np.cross(y, z))
    t = np.linspace(0, 5, 101)
    th = scalar_sine_flow(1.0, t, 0.5)
    assert np.allclose(np.gradient(th, t, edge_order=2), -0.5 * np.sin(th), atol=2e-3)


def test_report_save_and_json(tmp_path):
    rep = fig3_clean(seed=1, T=10.0, long_horizon=0)
    folder = rep.save(str(tmp_path))
    assert folder.endswith("fig3_clean_1")
    data = json.loads((tmp_path / "fig3_clean_1" / "report.json").read_text())
    assert set(data) >= {"name", "seed", "metrics", "checks", "passed", "csv_paths"}
    assert len(data["csv_paths"]) == 2


def test_experiments_are_deterministic(tmp_path):
    paths = []
    for run in ("a", "b"):
        rep = run_experiment("fig3_clean", 3, T=5.0, long_horizon=0)
        rep.save(str(tmp_path / run))
        paths.append(tmp_path / run / "fig3_clean_3")
    for name in ("generic.csv", "relative.csv"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()


def test_unknown_names():
    with pytest.raises(KeyError):
        reproduce_figure("fig9")
    with pytest.raises(KeyError):
        run_experiment("nothing")
    with pytest.raises(KeyError):
        sweep_network("C")


def test_newton_polish_declines_far_from_equilibrium():
    net = sweep_network("B")
    ei, ej = net.edge_arrays
    Q = np.array([np.eye(3), np.diag([1.0, -1.0, -1.0]), np.diag([-1.0, 1.0, -1.0])])
    Q = Q @ np.array([[1.0, 0, 0], [0, np.cos(0.3), -np.sin(0.3)], [0, np.sin(0.3), np.cos(0.3)]])
    assert newton_polish(Q, ei, ej, net.projectors()) is None


def test_sweep_trial_case_b():
    r = sweep_trial(sweep_network("B"), 1e-3, np.random.SeedSequence([0, 0, 0]))
    assert r["status"] == "converged" and r["gradient"] < 1e-12
    assert r["reaches_zero"] and r["f_oe"] < KEEP_RATIO * 1e-6
    assert 1e-5 < r["dist"] < 1e-1


def test_small_sweep_case_b():
    rep = robustness_sweep("B", eps_list=(1e-4, 1e-3, 1e-2), trials=4, workers=1)
    assert rep.metrics["discarded_fraction"] == 0.0
    assert 0.85 <= rep.metrics["slope"] <= 1.15


def test_report_passed_property():
    rep = ExperimentReport("x", checks={"a": True, "b": np.bool_(False)})
    assert not rep.passed
    assert rep.to_json()["checks"] == {"a": True, "b": False}
