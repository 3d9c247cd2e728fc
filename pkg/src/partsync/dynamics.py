"""Gradient flows on SO(n)^k and R^n, costs and consensus distance.

Flow kinds:

* ``FullState``: ``dQ_i/dt = eps Q_i sum_j sk(Q_i^T Q_j)``
* ``PartialState``: couplings ``M_ij`` from fixed references
* ``PartialStateTV``: couplings ``M_ij(t)`` from a time-varying generator
* ``Perturbed``: couplings ``E_ij M_ij E_ji^T`` from measurement errors
* ``RnPartial``: ``dx/dt = -eps L^g x`` on stacked vectors

SO(n) flows are stepped on the group with right-multiplied exponentials, so
states stay orthogonal up to round-off.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .liegroup import TOL_RANK, exp_skew, skew_part
from .network import UsageError, generalized_laplacian

KINDS = ("FullState", "PartialState", "PartialStateTV", "Perturbed", "RnPartial")
MONOTONE_KINDS = ("FullState", "PartialState", "Perturbed", "RnPartial")
METHODS = {"euler": kernels.EULER, "cf4": kernels.CF4}
MONOTONE_TOL = 1e-8
CSV_COLUMNS = ("t", "f_s", "f_o", "f_oe", "dist_cs", "ortho_err")


class IntegrationError(RuntimeError):
    """Raised on NaN states or a cost increase; carries the partial trajectory."""

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory

    @property
    def last_state(self):
        return self.trajectory.states[-1]


@dataclass(frozen=True)
class FlowSpec:
    kind: str
    T: float
    h: float = 1e-2
    epsilon: float = 1.0
    method: str = "cf4"
    record_every: int = 1
    perturbations: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown flow kind {self.kind!r}")
        if not (self.h > 0 and self.T >= 0 and self.epsilon > 0):
            raise UsageError("need h > 0, T >= 0 and epsilon > 0")
        if self.method not in METHODS:
            raise UsageError(f"method must be one of {sorted(METHODS)}")
        if self.record_every < 1:
            raise UsageError("record_every must be a positive step count")
        if (self.perturbations is not None) != (self.kind == "Perturbed"):
            raise UsageError("perturbations are required for, and only for, kind 'Perturbed'")

    @property
    def num_steps(self):
        return int(round(self.T / self.h))


@dataclass
class Trajectory:
    kind: str
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    f_s: list = field(default_factory=list)
    f_o: list = field(default_factory=list)
    f_oe: list = field(default_factory=list)
    dist_cs: list = field(default_factory=list)
    ortho_err: list = field(default_factory=list)

    def append(self, t, state, diag):
        self.times.append(float(t))
        self.states.append(np.array(state))
        for name in CSV_COLUMNS[1:]:
            getattr(self, name).append(float(diag[name]))

    def column(self, name):
        return np.asarray(self.times if name == "t" else getattr(self, name), dtype=float)

    @property
    def final(self):
        return self.states[-1]

    def summary(self):
        return {name: self.column(name)[-1] for name in CSV_COLUMNS}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in zip(*(self.column(c) for c in CSV_COLUMNS)):
                w.writerow([f"{v:.17g}" for v in row])


def _couplings(net, kind, perturbations=None, t=None):
    if kind == "FullState":
        return np.broadcast_to(np.eye(net.n), (net.graph.num_edges, net.n, net.n)).copy()
    if kind == "Perturbed":
        return perturbations.couplings(net, t)
    return net.projectors(t)


def _velocities(states, net, couplings):
    Q = np.asarray(states, dtype=float)
    ei, ej = net.edge_arrays
    if len(ei) == 0:
        return np.zeros_like(Q)
    return Q @ kernels.rhs(Q, ei, ej, couplings)


def rhs_partial(states, net, t=None):
    """``dQ_i/dt = Q_i sum_j sk(Q_i^T M_ij Q_j)``: descent direction of the output cost."""
    return _velocities(states, net, net.projectors(t))


def rhs_full(states, net):
    """``dQ_i/dt = Q_i sum_j sk(Q_i^T Q_j)``: descent direction of the state cost."""
    return _velocities(states, net, _couplings(net, "FullState"))


def rhs_perturbed(states, net, perturbations):
    """Descent direction of the perturbed output cost, couplings ``E_ij M_ij E_ji^T``."""
    return _velocities(states, net, perturbations.couplings(net))


def rhs_rn(x, net):
    """``dx/dt = -L^g x`` for states of shape ``(k, n)``."""
    x = np.asarray(x, dtype=float)
    return -(generalized_laplacian(net) @ x.ravel()).reshape(x.shape)


def _pair_terms(net, perturbations=None, t=None):
    Y = net.refs_at(t)
    if perturbations is None:
        return Y, Y
    a = np.array([perturbations.rotations[(i, j)] @ y for (i, j), y in zip(net.graph.edges, Y)])
    b = np.array([perturbations.rotations[(j, i)] @ y for (i, j), y in zip(net.graph.edges, Y)])
    return a, b


def cost_full(states, net):
    """``sum_edges (n - tr(Q_i^T Q_j))``, evaluated as ``1/2 sum ||Q_i - Q_j||^2``."""
    Q = np.asarray(states, dtype=float)
    ei, ej = net.edge_arrays
    return 0.5 * float(np.sum((Q[ei] - Q[ej]) ** 2))


def cost_partial(states, net, perturbations=None, t=None):
    """Output disagreement ``1/2 sum ||Q_i^T a_e - Q_j^T b_e||^2``.

    ``a_e = b_e = y_ij`` for the unperturbed cost; with measurement errors
    ``a_e = E_ij y_ij`` and ``b_e = E_ji y_ij``.
    """
    Q = np.asarray(states, dtype=float)
    ei, ej = net.edge_arrays
    a, b = _pair_terms(net, perturbations, t)
    oi = np.einsum("eab,ea->eb", Q[ei], a)
    oj = np.einsum("eab,ea->eb", Q[ej], b)
    return 0.5 * float(np.sum((oi - oj) ** 2))


def cost_rn(x, net):
    """``g_o = 1/2 sum ((x_i - x_j)^T y_ij)^2``."""
    x = np.asarray(x, dtype=float)
    ei, ej = net.edge_arrays
    return 0.5 * float(np.sum(np.einsum("ea,ea->e", x[ei] - x[ej], net.refs) ** 2))


def _trace_costs(Q, net, perturbations=None):
    ei, ej = net.edge_arrays
    n = net.n
    out = {"f_s": float(np.sum(n - np.einsum("eab,eab->e", Q[ei], Q[ej])))}
    P = net.projectors()
    tr = np.einsum("eba,ebc,eca->e", Q[ei], P, Q[ej])
    out["f_o"] = float(np.sum(1.0 - tr))
    if perturbations is not None:
        P = perturbations.couplings(net)
        tr = np.einsum("eba,ebc,eca->e", Q[ei], P, Q[ej])
        out["f_oe"] = float(np.sum(1.0 - tr))
    return out


def evaluate_costs(states, net, perturbations=None, t=None):
    """Costs of a configuration.

    SO(n) states give ``f_s``, ``f_o`` and, with perturbations, ``f_oe``; R^n
    states give ``g_o`` and the state disagreement ``f_s = 1/2 sum ||x_i - x_j||^2``.
    For fixed references the trace forms are returned under ``"trace"``.
    """
    X = np.asarray(states, dtype=float)
    if net.space == "Rn":
        ei, ej = net.edge_arrays
        return {"g_o": cost_rn(X, net), "f_s": 0.5 * float(np.sum((X[ei] - X[ej]) ** 2))}
    out = {"f_s": cost_full(X, net), "f_o": cost_partial(X, net, t=t)}
    if perturbations is not None:
        out["f_oe"] = cost_partial(X, net, perturbations, t)
    if net.fixed:
        out["trace"] = _trace_costs(X, net, perturbations)
    return out


def consensus_rotation(states):
    """Common rotation nearest to all states and a flag for a singular sum.

    The minimizer of ``sum ||Q_i - Q||_F^2`` maximizes ``tr(Q^T sum Q_i)``;
    the SVD formula attains that maximum even when the sum is singular, but the
    minimizer is then not unique and ``degenerate`` is set.
    """
    S = np.sum(np.asarray(states, dtype=float), axis=0)
    U, s, Vt = np.linalg.svd(S)
    D = np.ones(len(s))
    if np.linalg.det(U @ Vt) < 0:
        D[-1] = -1.0
    degenerate = bool(s[0] == 0.0 or s[-1] <= TOL_RANK * s[0])
    return (U * D) @ Vt, degenerate


def dist_to_consensus(states, return_flag=False):
    """``min_Q sqrt(sum ||Q_i - Q||_F^2)``; vectors use their mean as the common state."""
    X = np.asarray(states, dtype=float)
    if X.ndim == 2:
        d, flag = float(np.sqrt(np.sum((X - X.mean(axis=0)) ** 2))), False
    else:
        Qs, flag = consensus_rotation(X)
        d = float(np.sqrt(np.sum((X - Qs) ** 2)))
    return (d, flag) if return_flag else d


def orthogonality_error(states):
    Q = np.asarray(states, dtype=float)
    if Q.ndim == 2:
        return 0.0
    n = Q.shape[-1]
    return float(np.max(np.linalg.norm(np.swapaxes(Q, 1, 2) @ Q - np.eye(n), axis=(1, 2))))


def _diagnostics(X, net, spec, t):
    if spec.kind == "RnPartial":
        c = evaluate_costs(X, net)
        return {"f_s": c["f_s"], "f_o": c["g_o"], "f_oe": np.nan,
                "dist_cs": dist_to_consensus(X), "ortho_err": 0.0}
    tv = spec.kind == "PartialStateTV"
    f_oe = cost_partial(X, net, spec.perturbations) if spec.kind == "Perturbed" else np.nan
    return {"f_s": cost_full(X, net), "f_o": cost_partial(X, net, t=t if tv else None),
            "f_oe": f_oe, "dist_cs": dist_to_consensus(X), "ortho_err": orthogonality_error(X)}


def _monitored(spec):
    return {"FullState": "f_s", "PartialState": "f_o", "Perturbed": "f_oe",
            "RnPartial": "f_o"}.get(spec.kind)


def _rk4(x, A, h, nsteps):
    for _ in range(nsteps):
        k1 = A @ x
        k2 = A @ (x + 0.5 * h * k1)
        k3 = A @ (x + 0.5 * h * k2)
        k4 = A @ (x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _stepper(net, spec, backend):
    method = METHODS[spec.method]
    if spec.kind == "RnPartial":
        A = -spec.epsilon * generalized_laplacian(net)
        return lambda X, t, n: _rk4(X.ravel(), A, spec.h, n).reshape(X.shape)
    ei, ej = net.edge_arrays
    if len(ei) == 0:
        return lambda X, t, n: X
    if spec.kind == "PartialStateTV":
        if net.fixed:
            raise UsageError("kind 'PartialStateTV' needs time-varying references")
        g = net.time_varying
        return lambda X, t, n: kernels.advance_anchors(
            X, ei, ej, g.centers, g.amplitudes, g.frequencies, g.phases, g.by_edge, t,
            spec.h, n, spec.epsilon, method, backend)
    if not net.fixed:
        raise UsageError(f"kind {spec.kind!r} needs fixed references")
    P = _couplings(net, spec.kind, spec.perturbations)
    return lambda X, t, n: kernels.advance_fixed(X, ei, ej, P, spec.epsilon * spec.h, n,
                                                 method, backend)


def integrate(init, net, spec, seed=None, backend=None, check_monotone=True):
    """Integrate a flow from ``init`` over ``[0, spec.T]`` with fixed step ``spec.h``.

    Diagnostics are recorded every ``spec.record_every`` steps and at the end.
    NaN states, and for fixed-reference kinds any increase of the flow's cost
    beyond ``MONOTONE_TOL``, raise ``IntegrationError`` with the trajectory up
    to the last valid sample. ``seed`` is accepted for interface symmetry; the
    integrator itself is deterministic.
    """
    X = np.array(init, dtype=float)
    if spec.kind == "RnPartial":
        if net.space != "Rn" or X.shape != (net.k, net.n):
            raise UsageError("RnPartial needs an R^n network and (k, n) states")
    elif X.shape != (net.k, net.n, net.n):
        raise UsageError(f"expected states of shape {(net.k, net.n, net.n)}, got {X.shape}")
    advance = _stepper(net, spec, backend)
    watched = _monitored(spec) if check_monotone else None
    traj = Trajectory(spec.kind)
    traj.append(0.0, X, _diagnostics(X, net, spec, 0.0))
    total, done = spec.num_steps, 0
    while done < total:
        n = min(spec.record_every, total - done)
        Xn = advance(X, done * spec.h, n)
        done += n
        t = done * spec.h
        if not np.all(np.isfinite(Xn)):
            raise IntegrationError(f"non-finite state at t={t:g}", traj)
        diag = _diagnostics(Xn, net, spec, t)
        if watched and diag[watched] > getattr(traj, watched)[-1] + MONOTONE_TOL:
            raise IntegrationError(
                f"{watched} increased from {getattr(traj, watched)[-1]:.3e} to "
                f"{diag[watched]:.3e} at t={t:g}; reduce the step size", traj)
        X = Xn
        traj.append(t, X, diag)
    return traj


def estimate_decay_rate(traj, field="f_o", window=None):
    """Least-squares slope of ``log(field)`` against time.

    ``window`` is an optional ``(t_start, t_end)``. Samples from the first
    nonpositive value on are dropped. Returns slope, r^2 and the sample count.
    """
    t = traj.column("t")
    y = traj.column(field)
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, y = t[keep], y[keep]
    bad = np.flatnonzero(~(y > 0))
    if len(bad):
        t, y = t[:bad[0]], y[:bad[0]]
    if len(t) < 3:
        return {"slope": np.nan, "r2": np.nan, "samples": int(len(t))}
    ly = np.log(y)
    slope, intercept = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return {"slope": float(slope), "r2": float(r2), "samples": int(len(t))}


def perturb_states(base, scale, seed=None):
    """``Q exp(noise_i)`` with Gaussian skew noise of Frobenius size about ``scale``."""
    rng = np.random.default_rng(seed)
    Q = np.asarray(base, dtype=float)
    n = Q.shape[-1]
    out = []
    for Qi in Q:
        X = skew_part(rng.standard_normal((n, n)))
        out.append(Qi @ exp_skew(scale * X / np.linalg.norm(X)))
    return np.array(out)
