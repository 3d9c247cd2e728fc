import json
import os

import numpy as np
import pytest
from scipy.linalg import expm

from partsync.cli import main
from partsync.config import (ConfigError, graph_from_dict, initial_states, load_json,
                             network_from_dict, network_to_dict, scenario_from_dict)
from partsync.network import generalized_laplacian

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def cfg(name):
    return os.path.join(CONFIGS, name)


def write(tmp_path, obj, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def two_agent(**flow):
    base = {"kind": "FullState", "T": 1.0, "h": 0.01}
    base.update(flow)
    return {"network": {"graph": {"k": 2, "edges": [[1, 2]]}, "n": 3, "refs": [[0, 0, 1]]},
            "flow": base, "init": {"mode": "haar", "seed": 1}}


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_validate(name):
    obj = load_json(cfg(name))
    if "flow" in obj:
        scenario_from_dict(obj)
    else:
        network_from_dict(obj)


def test_network_round_trip():
    net = network_from_dict(load_json(cfg("notglobal.json")))
    again = network_from_dict(network_to_dict(net))
    assert again.graph == net.graph and np.array_equal(again.refs, net.refs)


def test_refs_follow_listed_edge_order():
    obj = {"graph": {"k": 3, "edges": [[2, 3], [1, 2]]}, "n": 3,
           "refs": [[0, 1, 0], [1, 0, 0]]}
    net = network_from_dict(obj)
    assert np.array_equal(net.ref(1, 2), [0, 1, 0])
    assert np.array_equal(net.ref(0, 1), [1, 0, 0])


@pytest.mark.parametrize("obj", [
    {"graph": {"k": 2, "edges": [[1, 2]]}, "n": 3},
    {"graph": {"k": 2, "edges": [[1, 3]]}, "n": 3, "refs": [[1, 0, 0]]},
    {"graph": {"k": 2, "edges": [[1, 2]]}, "n": 3, "refs": [[1, 0, 0], [0, 1, 0]]},
    {"graph": {"k": 2, "edges": [[1, 2]]}, "n": 3, "refs": [[2, 0, 0]]},
    {"graph": {"k": 2, "edges": [[1, 2]]}, "n": "3", "refs": [[1, 0, 0]]},
])
def test_invalid_networks(obj):
    with pytest.raises(ConfigError):
        network_from_dict(obj)


def test_graph_from_any_level():
    obj = load_json(cfg("two_agent.json"))
    assert graph_from_dict(obj) == graph_from_dict(obj["network"]["graph"])


def test_init_modes():
    net = network_from_dict(load_json(cfg("nocon.json")))
    X = initial_states(net, {"mode": "consensus", "seed": 3})
    assert np.allclose(X, X[0])
    X = initial_states(net, {"mode": "near_consensus", "spread": 0.1})
    assert X.shape == (3, 3, 3)
    with pytest.raises(ConfigError):
        initial_states(net, {"mode": "gaussian"})
    with pytest.raises(ConfigError):
        initial_states(net, {"mode": "explicit", "states": [[1.0]]})


def test_scenario_overrides():
    net, spec, X0, _ = scenario_from_dict(two_agent(), seed=5, horizon=3.0, step=0.1)
    assert spec.T == 3.0 and spec.h == 0.1
    _, _, X1, _ = scenario_from_dict(two_agent(), seed=5)
    assert np.array_equal(X0, X1)


def test_analyze_nocon(capsys, tmp_path):
    assert main(["analyze", "--config", cfg("nocon.json"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "injective" in out and "CaseB" in out
    rep = json.loads((tmp_path / "analyze.json").read_text())
    assert rep["injectivity"]["injective"]
    assert not rep["condition_A"]["holds"]
    assert rep["triangles"][0]["class"] == "CaseB"


def test_analyze_notglobal_and_fig6(capsys):
    assert main(["analyze", "--config", cfg("notglobal.json")]) == 0
    line = [r for r in capsys.readouterr().out.splitlines() if r.startswith("condition_A")][0]
    assert line.split()[1] == "yes"
    assert main(["analyze", "--config", cfg("fig6a.json")]) == 0
    assert "single vertex" in capsys.readouterr().out
    assert main(["analyze", "--config", cfg("fig6b.json")]) == 0
    assert "vertices remain" in capsys.readouterr().out


def test_collapse_command(capsys):
    assert main(["collapse", "--config", cfg("fig6a.json")]) == 0
    assert capsys.readouterr().out.strip().endswith("single vertex")


def test_simulate_two_agent(tmp_path, capsys):
    assert main(["simulate", "--config", cfg("two_agent.json"), "--out", str(tmp_path),
                 "--emit-gnuplot"]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["final"]["f_o"] < 1e-10
    assert (tmp_path / "trajectory.csv").exists() and (tmp_path / "trajectory.gp").exists()


def test_simulate_from_consensus_keeps_output_cost_zero(tmp_path):
    obj = two_agent(kind="PartialState", T=2.0, record_every=10)
    obj["init"] = {"mode": "consensus", "seed": 0}
    assert main(["simulate", "--config", write(tmp_path, obj), "--out", str(tmp_path)]) == 0
    data = np.genfromtxt(tmp_path / "trajectory.csv", delimiter=",", names=True)
    assert np.all(data["f_o"] == 0.0)


def test_simulate_rn_matches_exponential(tmp_path):
    obj = load_json(cfg("rn_family.json"))
    assert main(["simulate", "--config", cfg("rn_family.json"), "--out", str(tmp_path)]) == 0
    net, spec, x0, _ = scenario_from_dict(obj)
    data = np.genfromtxt(tmp_path / "trajectory.csv", delimiter=",", names=True)
    L = generalized_laplacian(net)
    for t, g in zip(data["t"], data["f_o"]):
        x = (expm(-L * t) @ x0.ravel()).reshape(x0.shape)
        ei, ej = net.edge_arrays
        g_ref = 0.5 * np.sum(np.einsum("ea,ea->e", x[ei] - x[ej], net.refs) ** 2)
        assert abs(g - g_ref) < 1e-8


def test_exit_code_config_error(tmp_path, capsys):
    bad = two_agent()
    bad["flow"]["kind"] = "Sideways"
    assert main(["simulate", "--config", write(tmp_path, bad)]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["experiment", "nope"]) == 2
    assert main(["experiment", "nocon", "--horizon", "3"]) == 2


def test_exit_code_capacity(tmp_path, capsys):
    k = 21
    obj = {"graph": {"k": k, "edges": [[i, i + 1] for i in range(1, k)]}, "n": 3,
           "refs": [[1, 0, 0] if i % 2 else [0, 1, 0] for i in range(k - 1)]}
    assert main(["analyze", "--config", write(tmp_path, obj)]) == 3
    assert "capacity" in capsys.readouterr().err


def test_exit_code_numeric_keeps_partial_csv(tmp_path):
    obj = two_agent(T=100.0, h=5.0, record_every=1)
    obj["network"] = {"graph": {"k": 4, "edges": [[1, 2], [1, 3], [1, 4], [2, 3], [2, 4], [3, 4]]},
                      "n": 3, "refs": [[1, 0, 0]] * 6}
    assert main(["simulate", "--config", write(tmp_path, obj), "--out", str(tmp_path)]) == 4
    assert (tmp_path / "trajectory.csv").exists()
    assert "error" in json.loads((tmp_path / "summary.json").read_text())


def test_experiment_exit_codes(tmp_path, capsys):
    assert main(["experiment", "nocon", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "nocon_0" / "report.json").exists()
    # too short a horizon for the small gain to synchronize
    assert main(["experiment", "fig4", "--horizon", "2", "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out
