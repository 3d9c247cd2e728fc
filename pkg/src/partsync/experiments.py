"""Scripted scenarios with machine-checkable verdicts.

Every function returns an :class:`ExperimentReport` holding the parameters,
scalar metrics, named boolean checks and the trajectories it produced.
``report.save(out)`` writes ``<out>/<name>_<seed>/report.json`` plus one CSV
per trajectory. All randomness flows from the ``seed`` argument.
"""
import functools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from . import kernels
from .dynamics import (FlowSpec, cost_full, cost_partial, cost_rn,
                       dist_to_consensus, estimate_decay_rate, integrate, perturb_states)
from .graph import FIG6A, FIG6B, Graph, collapse_analysis
from .liegroup import exp_skew, hat, random_rotation, rotation_about_axis, vee
from .network import (NetworkConfig, TimeVaryingRefs, check_condition_A,
                      check_condition_B, check_cut_condition, check_injectivity,
                      check_persistent_excitation, classify_equilibrium, edge_reference,
                      generalized_laplacian, generic_refs, gradient_norm, numerical_rank,
                      partial_gradient, random_unit_vectors, relative_position_refs,
                      sample_perturbations, so3_triangle_class)

PLATEAU_RTOL = 1e-4
PLATEAU_WINDOW = 0.1
FIT_WINDOW = (1e-24, 1e-2)
SWEEP_EPS = tuple(np.logspace(-5, -2, 7))
SWEEP_BANDS = {"A": (0.35, 0.65), "B": (0.85, 1.15)}
# limits with f_oe below KEEP_RATIO * eps^2 count as zeros of the perturbed cost
KEEP_RATIO = 1e-6


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


@dataclass
class ExperimentReport:
    name: str
    seed: int = None
    parameters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    csv_paths: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self):
        return all(bool(v) for v in self.checks.values())

    def to_json(self):
        return _jsonable({"name": self.name, "seed": self.seed, "parameters": self.parameters,
                          "metrics": self.metrics, "checks": self.checks,
                          "passed": self.passed, "csv_paths": self.csv_paths,
                          "runtime_s": self.runtime})

    def save(self, out):
        """Write CSVs and ``report.json`` under ``out``; returns the directory."""
        folder = os.path.join(out, f"{self.name}_{self.seed}")
        os.makedirs(folder, exist_ok=True)
        self.csv_paths = []
        for label, traj in self.trajectories.items():
            path = os.path.join(folder, f"{label}.csv")
            traj.to_csv(path)
            self.csv_paths.append(path)
        with open(os.path.join(folder, "report.json"), "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
        return folder


def _timed(fn):
    @functools.wraps(fn)
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.runtime = time.perf_counter() - t0
        return rep
    return run


def plateau_value(traj, field, rtol=PLATEAU_RTOL, window=PLATEAU_WINDOW):
    """Final value of ``field`` and whether it settled.

    Settled means the relative spread over the trailing ``window`` fraction of
    the horizon is below ``rtol``.
    """
    t = traj.column("t")
    y = traj.column(field)
    tail = y[t >= t[-1] - window * (t[-1] - t[0])]
    ref = max(abs(tail[-1]), np.finfo(float).tiny)
    change = float((tail.max() - tail.min()) / ref)
    return {"value": float(y[-1]), "relative_change": change, "settled": change < rtol}


def fit_window(traj, field="f_o", lo=FIT_WINDOW[0], hi=FIT_WINDOW[1]):
    """Time window from the first sample below ``hi`` to the last one above ``lo``."""
    t = traj.column("t")
    y = traj.column(field)
    below = np.flatnonzero(y <= hi)
    if len(below) == 0:
        return None
    start = t[below[0]]
    above = np.flatnonzero((y >= lo) & (t >= start))
    end = t[above[-1]] if len(above) else start
    return (float(start), float(end))


# ---------------------------------------------------------------- examples

def nocon_network():
    G = Graph.complete(3)
    return NetworkConfig.from_vectors(G, {(0, 1): [1, 0, 0], (1, 2): [0, 1, 0],
                                          (0, 2): [0, 0, 1]})


@_timed
def verify_example_nocon():
    """Three agents with axis references synchronized in output but not in state."""
    net = nocon_network()
    Q = np.array([np.diag([1.0, 1, 1]), np.diag([1.0, -1, -1]), np.diag([-1.0, -1, 1])])
    f_o = cost_partial(Q, net)
    f_s = cost_full(Q, net)
    grad = gradient_norm(Q, net)
    inj = check_injectivity(net)
    cls = classify_equilibrium(Q, net)
    rep = ExperimentReport("nocon")
    rep.parameters = {"refs": net.refs, "states": Q}
    rep.metrics = {
        "f_o": f_o, "f_s": f_s, "gradient_norm": grad, "injective": inj["injective"],
        "cut_condition": check_cut_condition(net)["holds"],
        "condition_A": check_condition_A(net)["holds"],
        "condition_B": check_condition_B(net)["holds"],
        "triangle": so3_triangle_class(*net.refs),
        "verdict": cls["verdict"], "restricted_spectrum": cls["restricted_spectrum"],
    }
    rep.checks = {"f_o_zero": f_o == 0.0, "gradient_below_1e-12": grad < 1e-12,
                  "injective": inj["injective"], "f_s_above_1": f_s > 1.0}
    return rep


def notglobal_network(alpha=0.04):
    """Seven agents, all-to-all, references chosen by ``(i - j) mod 7``."""
    G = Graph.complete(7)
    tilted = [np.sin(alpha), 0.0, np.cos(alpha)]
    refs = []
    for i, j in G.edges:
        d = (i - j) % 7
        refs.append([0.0, 1.0, 0.0] if d in (1, 6) else ([0.0, 0.0, 1.0] if d in (3, 4) else tilted))
    return NetworkConfig(G, 3, np.array(refs))


def printed_qz(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def printed_qy(beta):
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def notglobal_states(beta):
    return np.array([printed_qy(beta) @ printed_qz(i * 2 * np.pi / 7) for i in range(1, 8)])


def refine_equilibrium(states, net, tol=1e-10, max_iter=20000):
    """Riemannian gradient descent on the output cost with Armijo backtracking.

    Steps are ``Q_i exp(s U_i)`` along the body-frame descent directions.
    Returns the states, final gradient norm and iteration count.
    """
    Q = np.array(states, dtype=float)
    f = cost_partial(Q, net)
    s = 1.0
    for it in range(max_iter):
        U = partial_gradient(Q, net)
        g2 = float(np.sum(U * U))
        if np.sqrt(g2) < tol:
            return Q, np.sqrt(g2), it
        while True:
            Qn = np.array([Qi @ exp_skew(s * Ui) for Qi, Ui in zip(Q, U)])
            fn = cost_partial(Qn, net)
            if fn <= f - 1e-4 * s * g2 or s < 1e-12:
                break
            s *= 0.5
        Q, f = Qn, fn
        s = min(2.0 * s, 4.0)
    return Q, gradient_norm(Q, net), max_iter


def recovered_beta(states):
    """Tilt of the rotation axis of ``Q_1 Q_2^T`` away from e_z, in the x-z plane."""
    R = states[0] @ states[1].T
    w = vee(0.5 * (R - R.T))
    w = w / np.linalg.norm(w) * np.sign(w[2])
    return float(np.arctan2(w[0], w[2])), float(abs(w[1]))


@_timed
def verify_example_notglobal(refine=True, alpha=0.04, beta=-0.0558):
    """Stable equilibrium outside state synchronization on a full-rank network."""
    net = notglobal_network(alpha)
    L = generalized_laplacian(net)
    rank = numerical_rank(L)
    Q0 = notglobal_states(beta)
    rep = ExperimentReport("notglobal")
    rep.parameters = {"alpha": alpha, "beta": beta, "refine": refine}
    grad_raw = gradient_norm(Q0, net)
    Q, grad, iters = (refine_equilibrium(Q0, net) if refine else (Q0, grad_raw, 0))
    eq = classify_equilibrium(Q, net)
    cs = classify_equilibrium(np.array([np.eye(3)] * 7), net)
    b, off_plane = recovered_beta(Q)
    rep.metrics = {
        "rank_Lg": rank, "required_rank": 3 * 6, "gradient_raw": grad_raw,
        "gradient_refined": grad, "refine_iterations": iters,
        "beta_recovered": b, "axis_off_plane": off_plane,
        "f_s": cost_full(Q, net), "f_o": cost_partial(Q, net),
        "verdict_equilibrium": eq["verdict"], "min_eig_equilibrium": eq["restricted_spectrum"][0],
        "verdict_cs": cs["verdict"], "min_eig_cs": cs["restricted_spectrum"][0],
        "condition_A": check_condition_A(net)["holds"],
    }
    rep.checks = {"rank_18": rank == 18, "verdict_equilibrium_expstable": eq["verdict"] == "ExpStable",
                  "verdict_cs_expstable": cs["verdict"] == "ExpStable",
                  "f_s_far_from_zero": rep.metrics["f_s"] > 1.0}
    if refine:
        rep.checks["gradient_below_1e-10"] = grad < 1e-10
    return rep


def rn_family_network(theta, phi):
    G = Graph(4, ((0, 1), (0, 3), (1, 2), (2, 3)))
    vec = {(0, 1): [1.0, 0.0], (0, 3): [0.0, 1.0], (1, 2): [np.cos(theta), np.sin(theta)],
           (2, 3): [np.cos(phi), np.sin(phi)]}
    return NetworkConfig.from_vectors(G, vec, 2, space="Rn")


def rn_family_states(a, b, c, d, theta, phi):
    return np.array([[a, b], [a, d + (c - a) / np.tan(theta)], [c, d],
                     [c + (d - b) * np.tan(phi), b]])


@_timed
def verify_example_rn_family(a=0.0, b=0.0, c=1.0, d=1.0, theta=np.pi / 4, phi=np.pi / 3):
    """Four agents in the plane whose outputs agree along a family of unequal states.

    The construction needs ``theta, phi`` away from multiples of pi/2 and
    ``y23 != +-y34``; when those hold each vertex sees two independent
    references and injectivity is checked as well.
    """
    net = rn_family_network(theta, phi)
    generic = bool(min(abs(np.sin(2 * theta)), abs(np.sin(2 * phi))) > 1e-9
                   and abs(np.sin(theta - phi)) > 1e-9)
    x = rn_family_states(a, b, c, d, theta, phi)
    g_o = cost_rn(x, net)
    spread = dist_to_consensus(x)
    rank = numerical_rank(generalized_laplacian(net))
    consensus_expected = (c, d) == (a, b)
    rep = ExperimentReport("rn_family")
    rep.parameters = {"a": a, "b": b, "c": c, "d": d, "theta": theta, "phi": phi}
    injective = check_injectivity(net)["injective"]
    rep.metrics = {"g_o": g_o, "dist_to_consensus": spread, "rank_Lg": rank,
                   "injective": injective, "preconditions_hold": generic}
    rep.checks = {"g_o_zero": g_o < 1e-24, "rank_below_6": rank < 6,
                  "consensus_iff_equal": (spread < 1e-12) == consensus_expected}
    if generic:
        rep.checks["injective"] = injective
    return rep


# ---------------------------------------------------------------- figures

def _haar_states(k, rng, n=3):
    return np.array([random_rotation(n, rng) for _ in range(k)])


def _record_every(T, h, samples=1000):
    return max(1, int(round(T / h / samples)))


@_timed
def fig3_clean(seed=0, T=200.0, h=0.02, long_horizon=1e4, backend=None):
    """Six agents, all-to-all: generic versus relative-position references."""
    rng = np.random.default_rng(seed)
    G = Graph.complete(6)
    gen = generic_refs(G, 3, rng)
    rel, anchors = relative_position_refs(G, 3, rng)
    Q0 = _haar_states(6, rng)
    rep = ExperimentReport("fig3_clean", seed)
    rep.parameters = {"T": T, "h": h, "long_horizon": long_horizon, "anchors": anchors}
    spec = FlowSpec("PartialState", T, h, record_every=_record_every(T, h))
    for label, net in (("generic", gen), ("relative", rel)):
        traj = integrate(Q0, net, spec, backend=backend)
        rep.trajectories[label] = traj
        win = fit_window(traj)
        fit = estimate_decay_rate(traj, "f_o", win) if win else {"slope": np.nan, "r2": np.nan}
        rep.metrics[f"{label}_f_o_T"] = traj.f_o[-1]
        rep.metrics[f"{label}_f_s_T"] = traj.f_s[-1]
        rep.metrics[f"{label}_fit_window"] = win
        rep.metrics[f"{label}_rate"] = fit["slope"]
        rep.metrics[f"{label}_r2"] = fit["r2"]
        rep.metrics[f"{label}_condition_A"] = check_condition_A(net)["holds"]
        rep.metrics[f"{label}_condition_B"] = check_condition_B(net)["holds"]
    if long_horizon:
        spec_long = FlowSpec("PartialState", long_horizon, h,
                             record_every=_record_every(long_horizon, h))
        traj = integrate(Q0, rel, spec_long, backend=backend)
        rep.trajectories["relative_long"] = traj
        rep.metrics["relative_f_o_long"] = traj.f_o[-1]
        rep.metrics["relative_long_tail_rate"] = estimate_decay_rate(
            traj, "f_o", (0.5 * long_horizon, long_horizon))["slope"]
    m = rep.metrics
    rep.checks = {
        "generic_r2_above_0.99": m["generic_r2"] > 0.99,
        "generic_f_o_below_1e-12": m["generic_f_o_T"] < 1e-12,
        "relative_f_o_above_1e-8": m["relative_f_o_T"] > 1e-8,
        "relative_r2_below_0.99": not (m["relative_r2"] > 0.99),
        "generic_condition_B": m["generic_condition_B"],
        "relative_conditions_fail": not (m["relative_condition_A"] or m["relative_condition_B"]),
    }
    return rep


@_timed
def fig3_noisy(seed=0, T=5000.0, h=0.05, error=0.01, backend=None):
    """The fig3_clean networks with fixed measurement errors ``||E_ij - I||_F = error``."""
    rng = np.random.default_rng(seed)
    G = Graph.complete(6)
    gen = generic_refs(G, 3, rng)
    rel, _ = relative_position_refs(G, 3, rng)
    Q0 = _haar_states(6, rng)
    rep = ExperimentReport("fig3_noisy", seed)
    rep.parameters = {"T": T, "h": h, "error": error}
    for label, net in (("generic", gen), ("relative", rel)):
        E = sample_perturbations(G, error, rng, 1.0, 1.0)
        spec = FlowSpec("Perturbed", T, h, record_every=_record_every(T, h), perturbations=E)
        traj = integrate(Q0, net, spec, backend=backend)
        rep.trajectories[label] = traj
        pl = plateau_value(traj, "f_oe")
        fs = plateau_value(traj, "f_s")
        rep.metrics[f"{label}_f_oe_plateau"] = pl["value"]
        rep.metrics[f"{label}_f_oe_settled"] = pl["settled"]
        rep.metrics[f"{label}_f_s_plateau"] = fs["value"]
        rep.checks[f"{label}_plateau_in_band"] = pl["settled"] and 1e-4 <= pl["value"] <= 1e-3
    rep.checks["relative_f_s_exceeds_generic"] = (
        rep.metrics["relative_f_s_plateau"] > rep.metrics["generic_f_s_plateau"])
    return rep


def fig4_generator(rng, agents=6):
    """Quasi-periodic anchors: two harmonics, amplitudes 0.2-0.4, 0.05-0.08 Hz."""
    return TimeVaryingRefs.random(agents, 3, rng, harmonics=2, amplitude=(0.2, 0.4),
                                  frequency=(0.05, 0.08))


@_timed
def fig4(seed=0, T=500.0, gains=((0.1, 0.1), (10.0, 0.01)), backend=None):
    """Time-varying relative-position references at a small and a large gain.

    ``gains`` pairs each gain with its time step.
    """
    rng = np.random.default_rng(seed)
    G = Graph.complete(6)
    tv = fig4_generator(rng)
    Q0 = _haar_states(6, rng)
    net = NetworkConfig(G, 3, time_varying=tv)
    rep = ExperimentReport("fig4", seed)
    rep.parameters = {"T": T, "gains": gains, "generator": tv.to_json()}
    for eps, h in gains:
        spec = FlowSpec("PartialStateTV", T, h, eps, record_every=_record_every(T, h, 500))
        traj = integrate(Q0, net, spec, backend=backend)
        rep.trajectories[f"eps_{eps:g}"] = traj
        rep.metrics[f"eps_{eps:g}_f_s_T"] = traj.f_s[-1]
        rep.metrics[f"eps_{eps:g}_f_s_min"] = float(np.min(traj.f_s))
    lo, hi = (f"eps_{g[0]:g}" for g in gains)
    rep.checks = {f"{lo}_f_s_below_1e-6": rep.metrics[f"{lo}_f_s_T"] < 1e-6,
                  f"{hi}_f_s_stays_above_1e-3": rep.metrics[f"{hi}_f_s_min"] > 1e-3}
    return rep


@_timed
def fig5(seed=0, T=3000.0, h=0.05, spread=0.3, backend=None):
    """Graphs A and B with shared generic references, started near consensus."""
    rng = np.random.default_rng(seed)
    ya = random_unit_vectors(FIG6A.num_edges, 3, rng)
    net_a = NetworkConfig(FIG6A, 3, ya)
    keep = [FIG6A.edges.index(e) for e in FIG6B.edges]
    net_b = NetworkConfig(FIG6B, 3, ya[keep])
    Q0 = perturb_states(np.array([random_rotation(3, rng)] * 7), spread, rng)
    rep = ExperimentReport("fig5", seed)
    rep.parameters = {"T": T, "h": h, "spread": spread}
    spec = FlowSpec("PartialState", T, h, record_every=_record_every(T, h))
    for label, net, G in (("graph_A", net_a, FIG6A), ("graph_B", net_b, FIG6B)):
        traj = integrate(Q0, net, spec, backend=backend)
        rep.trajectories[label] = traj
        fs = plateau_value(traj, "f_s")
        rep.metrics[f"{label}_f_o_T"] = traj.f_o[-1]
        rep.metrics[f"{label}_f_s_T"] = fs["value"]
        rep.metrics[f"{label}_f_s_settled"] = fs["settled"]
        rep.metrics[f"{label}_collapses"] = collapse_analysis(G)["reducible"]
    m = rep.metrics
    rep.checks = {
        "A_f_s_below_1e-8": m["graph_A_f_s_T"] < 1e-8,
        "B_f_o_below_1e-8": m["graph_B_f_o_T"] < 1e-8,
        "B_f_s_plateau_above_1e-3": m["graph_B_f_s_settled"] and m["graph_B_f_s_T"] > 1e-3,
        "A_collapses": m["graph_A_collapses"], "B_does_not_collapse": not m["graph_B_collapses"],
    }
    return rep


FIGURES = {"fig3_clean": fig3_clean, "fig3_noisy": fig3_noisy, "fig4": fig4, "fig5": fig5}


def reproduce_figure(fig_id, seed=0, **overrides):
    if fig_id not in FIGURES:
        raise KeyError(f"unknown figure {fig_id!r}; choose from {sorted(FIGURES)}")
    return FIGURES[fig_id](seed, **overrides)


# ---------------------------------------------------------------- robustness sweep

def sweep_network(case):
    """Triangle with coplanar (A) or spanning (B) references."""
    G = Graph.complete(3)
    if case == "A":
        Y = np.array([[np.cos(a), np.sin(a), 0.0] for a in (0.0, 1.2, 0.5)])
    elif case == "B":
        Y = random_unit_vectors(3, 3, seed=5)
    else:
        raise KeyError(f"unknown sweep case {case!r}")
    return NetworkConfig(G, 3, Y)


def _body_rhs(Q, ei, ej, P):
    return np.concatenate([vee(U) for U in kernels.rhs(Q, ei, ej, P)])


def _shift(Q, d):
    return np.array([Qi @ exp_skew(hat(w)) for Qi, w in zip(Q, d.reshape(-1, 3))])


def _jacobian(Q, ei, ej, P, step=1e-6):
    g = _body_rhs(Q, ei, ej, P)
    J = np.empty((g.size, g.size))
    for c in range(g.size):
        e = np.zeros(g.size)
        e[c] = step
        J[:, c] = (_body_rhs(_shift(Q, e), ei, ej, P) - _body_rhs(_shift(Q, -e), ei, ej, P)) / (2 * step)
    return g, J


def newton_polish(Q, ei, ej, P, tol=1e-12, max_iter=30):
    """Newton iteration on the flow's zero set, accepted only in its convex basin.

    At every iterate the cost Hessian, restricted to the complement of the
    common-rotation directions, must be positive definite, and each step must
    be at most a quarter of the previous one. Under these conditions the flow
    from ``Q`` and the iteration share their limit; otherwise ``None`` is
    returned and the caller keeps integrating.
    """
    k = len(Q)
    transverse = null_space(np.kron(np.ones((1, k)), np.eye(3)))
    prev = None
    for _ in range(max_iter):
        g, J = _jacobian(Q, ei, ej, P)
        H = transverse.T @ (-0.5 * (J + J.T)) @ transverse
        w = np.linalg.eigvalsh(H)
        if w[0] <= 1e-9 * abs(w[-1]):
            return None
        if np.linalg.norm(g) < tol:
            return Q
        d = -np.linalg.lstsq(J, g, rcond=1e-13)[0]
        nd = np.linalg.norm(d)
        if prev is not None and nd > 0.25 * prev and nd > 1e-10:
            return None
        prev = nd
        Q = _shift(Q, d)
    return None


def sweep_trial(net, eps, seed, h=0.8, first=250, horizon=1e7):
    """One perturbed run from near consensus; returns a dict of results.

    Integrates in doubling chunks and tries a guarded Newton polish after each.
    """
    rng = np.random.default_rng(seed)
    E = sample_perturbations(net.graph, eps, rng, 0.5, 1.0)
    Q = perturb_states(np.array([random_rotation(3, rng)] * net.k), 0.3, rng)
    P = E.couplings(net)
    ei, ej = net.edge_arrays
    f_prev = cost_partial(Q, net, E)
    steps, chunk, status = 0, first, "horizon"
    while steps * h < horizon:
        Q = kernels.advance_fixed(Q, ei, ej, P, h, chunk)
        steps += chunk
        f = cost_partial(Q, net, E)
        if not np.isfinite(f) or f > f_prev + 1e-10:
            status = "diverged"
            break
        f_prev = f
        if np.linalg.norm(_body_rhs(Q, ei, ej, P)) < 1e-12:
            status = "converged"
            break
        polished = newton_polish(Q, ei, ej, P)
        if polished is not None:
            Q, status = polished, "converged"
            break
        chunk = steps
    f_oe = cost_partial(Q, net, E)
    return {"status": status, "f_oe": f_oe, "dist": dist_to_consensus(Q), "time": steps * h,
            "gradient": float(np.linalg.norm(_body_rhs(Q, ei, ej, P))),
            "reaches_zero": bool(status == "converged" and f_oe < KEEP_RATIO * eps ** 2)}


@_timed
def robustness_sweep(case="B", eps_list=SWEEP_EPS, trials=20, seed=0, workers=None):
    """Distance of perturbed output-synchronization points to consensus against eps.

    A trial is kept when its limit has ``f_oe < KEEP_RATIO eps^2``; trials
    whose cost settles at a positive value have no perturbed synchronization
    point nearby and are discarded, as are runs that hit the horizon. The report gives the log-log slope of the
    largest kept distance per eps.
    """
    net = sweep_network(case)
    jobs = [(i, t, np.random.SeedSequence([seed, i, t]))
            for i in range(len(eps_list)) for t in range(trials)]
    with ThreadPoolExecutor(workers or os.cpu_count()) as pool:
        results = list(pool.map(lambda job: sweep_trial(net, eps_list[job[0]], job[2]), jobs))
    rep = ExperimentReport(f"sweep_{case}", seed)
    rep.parameters = {"case": case, "eps": list(eps_list), "trials": trials, "refs": net.refs}
    per_eps, xs, ys = [], [], []
    for i, eps in enumerate(eps_list):
        rows = [r for (a, _, _), r in zip(jobs, results) if a == i]
        kept = [r["dist"] for r in rows if r["reaches_zero"]]
        entry = {"eps": eps, "kept": len(kept), "discarded": len(rows) - len(kept),
                 "unconverged": sum(r["status"] != "converged" for r in rows),
                 "max_dist": max(kept) if kept else None, "dists": [r["dist"] for r in rows],
                 "f_oe": [r["f_oe"] for r in rows], "times": [r["time"] for r in rows]}
        per_eps.append(entry)
        if kept:
            xs.append(np.log(eps))
            ys.append(np.log(max(kept)))
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(xs) >= 2 else np.nan
    total = trials * len(eps_list)
    discarded = sum(e["discarded"] for e in per_eps)
    lo, hi = SWEEP_BANDS[case]
    rep.metrics = {"slope": slope, "band": (lo, hi), "discarded_fraction": discarded / total,
                   "per_eps": per_eps}
    rep.checks = {"slope_in_band": lo <= slope <= hi}
    return rep


# ---------------------------------------------------------------- two agents

def s0_state(y, z, theta):
    """Rotation by ``theta`` in the plane of ``y`` and ``z`` (``z`` orthogonal to ``y``)."""
    yz = np.outer(y, z)
    return (np.eye(3) + (np.cos(theta) - 1.0) * (np.outer(y, y) + np.outer(z, z))
            + np.sin(theta) * (yz - yz.T))


def scalar_sine_flow(theta0, t, rate):
    """Solution of ``dtheta/dt = -rate sin(theta)``."""
    return 2.0 * np.arctan(np.tan(theta0 / 2.0) * np.exp(-rate * np.asarray(t)))


@_timed
def two_agent_suite(seed=0, theta0=1.0, T_s0=10.0, h_s0=1e-3, T_pe=200.0, h_pe=0.01):
    """Two-agent reductions with fixed and persistently exciting references."""
    rng = np.random.default_rng(seed)
    rep = ExperimentReport("two_agent", seed)
    G = Graph(2, ((0, 1),))
    m = rep.metrics

    # relative state Q_1 Q_2^T inside S_0
    y, z = np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])
    net = NetworkConfig(G, 3, y[None, :])
    Q0 = np.array([s0_state(y, z, theta0), np.eye(3)])
    traj = integrate(Q0, net, FlowSpec("PartialState", T_s0, h_s0, record_every=10))
    rep.trajectories["s0"] = traj
    R = np.array([Q1 @ Q2.T for Q1, Q2 in traj.states])
    theta = np.arctan2(np.einsum("a,tab,b->t", y, R, z),
                       np.einsum("a,tab,b->t", y, R, y))
    t = traj.column("t")
    m["s0_max_err_half_sine"] = float(np.max(np.abs(theta - scalar_sine_flow(theta0, t, 0.5))))
    m["s0_max_err_unit_sine"] = float(np.max(np.abs(theta - scalar_sine_flow(theta0, t, 1.0))))
    m["s0_leaves_plane"] = float(np.max(np.abs(np.einsum("tab,b->ta", R, np.cross(y, z))
                                                - np.cross(y, z))))

    # fixed reference: limit lies in the stabilizer of y12
    y12 = random_unit_vectors(1, 3, rng)
    net = NetworkConfig(G, 3, y12)
    Q0 = _haar_states(2, rng)
    traj = integrate(Q0, net, FlowSpec("PartialState", 60.0, 0.01, record_every=100))
    rep.trajectories["fixed"] = traj
    Rf = traj.final[0] @ traj.final[1].T
    m["fixed_stabilizer_residual"] = float(np.linalg.norm(Rf @ y12[0] - y12[0]))
    m["fixed_f_o_T"] = traj.f_o[-1]

    # equilibrium already in the stabilizer
    Qst = np.array([rotation_about_axis(y12[0], 0.7), np.eye(3)])
    traj = integrate(Qst, net, FlowSpec("PartialState", 5.0, 0.01, record_every=10))
    m["stabilizer_start_max_f_o"] = float(np.max(traj.f_o))
    m["stabilizer_start_drift"] = float(np.linalg.norm(traj.final - Qst))

    # persistently exciting reference
    tv = TimeVaryingRefs.random(1, 3, rng, harmonics=2, amplitude=(0.5, 1.0),
                                frequency=(0.05, 1.0 / (2.0 * np.pi)), center=(-0.3, 0.3),
                                mode="edges")
    net = NetworkConfig(G, 3, time_varying=tv)
    pe = check_persistent_excitation(edge_reference(net, (0, 1)), 40.0, samples=4001)
    Q0 = _haar_states(2, rng)
    traj = integrate(Q0, net, FlowSpec("PartialStateTV", T_pe, h_pe, record_every=10))
    rep.trajectories["persistent"] = traj
    fs = traj.column("f_s")
    m["pe_min_eig"] = pe["min_eig"]
    m["pe_relative_error_T"] = float(np.linalg.norm(traj.final[0] @ traj.final[1].T - np.eye(3)))
    m["pe_f_s_increase"] = float(np.max(np.diff(fs))) if len(fs) > 1 else 0.0

    rep.parameters = {"theta0": theta0, "T_s0": T_s0, "h_s0": h_s0, "T_pe": T_pe, "h_pe": h_pe,
                      "y12": y12[0], "generator": tv.to_json()}
    rep.checks = {
        "s0_matches_half_sine_1e-4": m["s0_max_err_half_sine"] < 1e-4,
        "fixed_limit_in_stabilizer_1e-8": m["fixed_stabilizer_residual"] < 1e-8,
        "stabilizer_start_stationary": m["stabilizer_start_max_f_o"] < 1e-20,
        "pe_certificate": pe["holds"],
        "pe_relative_state_identity_1e-6": m["pe_relative_error_T"] < 1e-6,
        "pe_f_s_monotone": m["pe_f_s_increase"] <= 1e-10,
    }
    return rep


REGISTRY = {
    "nocon": lambda seed, **kw: verify_example_nocon(**kw),
    "notglobal": lambda seed, **kw: verify_example_notglobal(**kw),
    "rn_family": lambda seed, **kw: verify_example_rn_family(**kw),
    "fig3_clean": fig3_clean,
    "fig3_noisy": fig3_noisy,
    "fig4": fig4,
    "fig5": fig5,
    "sweep": lambda seed, case="B", **kw: robustness_sweep(case, seed=seed, **kw),
    "two_agent": two_agent_suite,
}


def run_experiment(name, seed=0, **overrides):
    if name not in REGISTRY:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(REGISTRY)}")
    rep = REGISTRY[name](seed, **overrides)
    rep.seed = seed
    return rep
