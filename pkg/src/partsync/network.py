"""Reference-vector networks, generalized Laplacians and synchronization tests.

A network couples agents ``i < j`` on each edge through a unit reference
vector ``y_ij``; the edge projector is ``M_ij = y_ij y_ij^T``. States are
stacked as ``(k, n, n)`` rotations (SO(n)) or ``(k, n)`` vectors (R^n).
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import null_space

from . import kernels
from .graph import Graph, incidence_matrix, standard_laplacian
from .liegroup import (TOL_CONSTRUCT, TOL_RANK, DomainError, exp_skew, hat, so_basis)

SPACES = ("SOn", "Rn")
MAX_CUT_VERTICES = 20


class UsageError(ValueError):
    pass


class CapacityError(ValueError):
    pass


class DegenerateConfigurationError(ValueError):
    pass


def _unit_rows(vectors, n):
    Y = np.asarray(vectors, dtype=float).reshape(-1, n)
    bad = np.abs(np.linalg.norm(Y, axis=1) - 1.0) > TOL_CONSTRUCT
    if np.any(bad):
        raise DomainError(f"reference vectors {np.flatnonzero(bad).tolist()} are not unit")
    return Y


@dataclass(frozen=True)
class TimeVaryingRefs:
    """Quasi-periodic reference generator.

    Each trajectory row follows ``c + sum_h a_h sin(2 pi f_h t + phi_h)`` per
    coordinate (frequencies in Hz). In ``"anchors"`` mode the rows are vertex
    positions and ``y_ij(t)`` is the normalized difference ``y_i - y_j``; in
    ``"edges"`` mode row ``e`` is normalized directly into the reference of
    edge ``e``.
    """
    centers: np.ndarray
    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    mode: str = "anchors"

    def __post_init__(self):
        if self.mode not in ("anchors", "edges"):
            raise UsageError(f"unknown time-varying mode {self.mode!r}")
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        shape = c.shape + (-1,)
        object.__setattr__(self, "centers", c)
        for name in ("amplitudes", "frequencies", "phases"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            object.__setattr__(self, name, arr)

    @property
    def by_edge(self):
        return self.mode == "edges"

    def positions(self, t):
        return self.centers + np.sum(
            self.amplitudes * np.sin(2.0 * np.pi * self.frequencies * t + self.phases), axis=-1)

    def edge_vectors(self, t, edges):
        pos = self.positions(t)
        if self.by_edge:
            d = pos[: len(edges)]
        else:
            ei, ej = np.array(edges, dtype=int).reshape(-1, 2).T
            d = pos[ei] - pos[ej]
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    @classmethod
    def random(cls, rows, dim=3, seed=None, harmonics=2, amplitude=(0.15, 0.3),
               frequency=(0.05, 1.0 / (2.0 * np.pi)), center=(-1.0, 1.0), mode="anchors"):
        """Random generator: uniform centers, amplitudes, frequencies and phases."""
        rng = np.random.default_rng(seed)
        shape = (rows, dim, harmonics)
        return cls(rng.uniform(*center, size=(rows, dim)),
                   rng.uniform(*amplitude, size=shape),
                   rng.uniform(*frequency, size=shape),
                   rng.uniform(0.0, 2.0 * np.pi, size=shape), mode)

    def to_json(self):
        return {"mode": self.mode, "centers": self.centers.tolist(),
                "amplitudes": self.amplitudes.tolist(),
                "frequencies": self.frequencies.tolist(), "phases": self.phases.tolist()}


@dataclass(frozen=True)
class NetworkConfig:
    """Graph, dimension and per-edge references (fixed array or generator).

    ``refs`` has one row per edge of ``graph.edges`` (canonical order).
    """
    graph: Graph
    n: int
    refs: np.ndarray = None
    space: str = "SOn"
    time_varying: TimeVaryingRefs = None

    def __post_init__(self):
        if self.space not in SPACES:
            raise UsageError(f"space must be one of {SPACES}")
        if self.n < 1 or (self.space == "SOn" and self.n < 2):
            raise DomainError(f"invalid dimension n={self.n} for {self.space}")
        if (self.refs is None) == (self.time_varying is None):
            raise UsageError("give exactly one of fixed refs or a time-varying generator")
        if self.refs is not None:
            Y = _unit_rows(self.refs, self.n)
            if len(Y) != self.graph.num_edges:
                raise UsageError(f"{len(Y)} reference vectors for {self.graph.num_edges} edges")
            Y.setflags(write=False)
            object.__setattr__(self, "refs", Y)

    @property
    def k(self):
        return self.graph.k

    @property
    def fixed(self):
        return self.refs is not None

    @property
    def edge_arrays(self):
        ei = np.array([e[0] for e in self.graph.edges], dtype=np.intc)
        ej = np.array([e[1] for e in self.graph.edges], dtype=np.intc)
        return ei, ej

    def refs_at(self, t=None):
        if self.fixed:
            return self.refs
        if t is None:
            raise UsageError("time-varying references need a time t")
        return self.time_varying.edge_vectors(t, self.graph.edges)

    def projectors(self, t=None):
        Y = self.refs_at(t)
        return Y[:, :, None] * Y[:, None, :]

    def ref(self, i, j, t=None):
        return self.refs_at(t)[self.graph.edge_index(i, j)]

    @classmethod
    def from_vectors(cls, graph, vectors, n=None, space="SOn", normalize=True):
        """Build from a list (edge order) or dict ``{(i, j): y}`` of vectors."""
        if isinstance(vectors, dict):
            lookup = {(min(a, b), max(a, b)): v for (a, b), v in vectors.items()}
            vectors = [lookup[e] for e in graph.edges]
        Y = np.array(vectors, dtype=float)
        if normalize:
            Y = Y / np.linalg.norm(Y, axis=1, keepdims=True)
        return cls(graph, n or Y.shape[1], Y, space)


@dataclass
class PerturbationSet:
    """Per-directed-edge rotations ``E_ij`` with ``||E_ij - I||_F <= bound``."""
    rotations: dict
    bound: float
    magnitudes: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, E in self.rotations.items():
            dev = np.linalg.norm(E - np.eye(len(E)))
            if dev > self.bound * (1.0 + 1e-12):
                raise DomainError(f"perturbation {key} deviates by {dev} > {self.bound}")
            self.magnitudes[key] = dev

    def couplings(self, net, t=None):
        """``E_ij M_ij E_ji^T`` per edge ``(i, j)``, ``i < j``."""
        M = net.projectors(t)
        out = np.empty_like(M)
        for e, (i, j) in enumerate(net.graph.edges):
            try:
                out[e] = self.rotations[(i, j)] @ M[e] @ self.rotations[(j, i)].T
            except KeyError as exc:
                raise UsageError(f"missing perturbation for directed edge {exc.args[0]}") from None
        return out

    @classmethod
    def identity(cls, graph, n=3):
        rots = {}
        for i, j in graph.edges:
            rots[(i, j)] = np.eye(n)
            rots[(j, i)] = np.eye(n)
        return cls(rots, 0.0)


def perturbation_angle(magnitude):
    """Rotation angle whose Frobenius deviation from I_3 equals ``magnitude``."""
    return 2.0 * np.arcsin(magnitude / (2.0 * np.sqrt(2.0)))


def sample_perturbations(graph, bound, seed=None, low=0.0, high=1.0):
    """Independent SO(3) errors per directed edge about uniformly random axes.

    ``||E_ij - I||_F`` is drawn uniformly in ``[low * bound, high * bound]``.
    """
    rng = np.random.default_rng(seed)
    rots = {}
    for i, j in graph.edges:
        for a, b in ((i, j), (j, i)):
            d = rng.uniform(low * bound, high * bound)
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            rots[(a, b)] = exp_skew(hat(perturbation_angle(d) * axis))
    return PerturbationSet(rots, bound)


def random_unit_vectors(count, dim=3, seed=None):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((count, dim))
    return Y / np.linalg.norm(Y, axis=1, keepdims=True)


def generic_refs(graph, n=3, seed=None, space="SOn"):
    """Independent uniformly distributed references on the unit sphere."""
    return NetworkConfig(graph, n, random_unit_vectors(graph.num_edges, n, seed), space)


def relative_position_refs(graph, n=3, seed=None, space="SOn"):
    """References ``(p_i - p_j)/||p_i - p_j||`` from anchors uniform in the cube [-1, 1]^n.

    Returns the network and the anchor positions.
    """
    rng = np.random.default_rng(seed)
    anchors = rng.uniform(-1.0, 1.0, size=(graph.k, n))
    Y = np.array([anchors[i] - anchors[j] for i, j in graph.edges])
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    return NetworkConfig(graph, n, Y, space), anchors


def projector(y):
    """Rank-one projector ``y y^T`` onto a unit vector."""
    y = np.asarray(y, dtype=float).ravel()
    if abs(np.linalg.norm(y) - 1.0) > TOL_CONSTRUCT:
        raise DomainError("projector needs a unit vector")
    return np.outer(y, y)


def laplacian_from_blocks(k, edges, blocks, n):
    """Block Laplacian with ``-W_e`` off the diagonal and row sums zero.

    Block (j, i) is ``-W_e^T``; the diagonal of ``i`` (resp. ``j``) gains
    ``W_e`` (resp. ``W_e^T``). For symmetric ``W_e`` this is ``L^g``.
    """
    L = np.zeros((k * n, k * n))
    for (i, j), W in zip(edges, blocks):
        si, sj = slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n)
        L[si, sj] -= W
        L[sj, si] -= W.T
        L[si, si] += W
        L[sj, sj] += W.T
    return L


def generalized_laplacian(net, t=None):
    """kn x kn generalized Laplacian with blocks ``-M_ij`` on edges."""
    return laplacian_from_blocks(net.k, net.graph.edges, net.projectors(t), net.n)


def laplacian_factorization(net, t=None):
    """``(B kron I_n) W (B kron I_n)^T`` computed from the incidence matrix."""
    n = net.n
    BI = np.kron(incidence_matrix(net.graph), np.eye(n))
    W = np.zeros((n * net.graph.num_edges,) * 2)
    for e, M in enumerate(net.projectors(t)):
        W[e * n:(e + 1) * n, e * n:(e + 1) * n] = M
    return BI @ W @ BI.T


def numerical_rank(M, tol=TOL_RANK):
    """Number of singular values above ``tol`` times the largest."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def check_condition_A(net):
    """Full-rank test ``rank L^g == n (k - 1)`` with the a-priori bound."""
    L = generalized_laplacian(net)
    rank = numerical_rank(L)
    required = net.n * (net.k - 1)
    bound = min(net.graph.num_edges, net.n * numerical_rank(standard_laplacian(net.graph)))
    return {"holds": rank == required, "rank": rank, "required": required, "bound": bound}


def skew_embedding(n, k, normalized=True):
    """Matrix ``V`` whose columns are vec of single-agent so(n) basis elements.

    Columns run agent-major, then ``so_basis`` order. Each column is the
    column-major vec of the kn x n stack holding ``B^T`` in the agent's slot.
    With ``normalized=False`` the basis elements are ``E_ab - E_ba``.
    """
    basis = so_basis(n)
    if not normalized:
        basis = [np.sqrt(2.0) * B for B in basis]
    cols = []
    for a in range(k):
        for B in basis:
            S = np.zeros((k * n, n))
            S[a * n:(a + 1) * n] = B.T
            cols.append(S.ravel(order="F"))
    return np.array(cols).T


def restricted_form(L, n, k, normalized=True):
    """``V^T (I_n kron L) V``: the quadratic form of ``L`` on so(n)^k."""
    V = skew_embedding(n, k, normalized)
    return V.T @ np.kron(np.eye(n), L) @ V


def check_condition_B(net, normalized=True):
    """Rank of the so(n)-restricted generalized Laplacian against (k-1) n(n-1)/2."""
    if net.space != "SOn":
        raise UsageError("condition B applies to SO(n) networks")
    n, k = net.n, net.k
    LV = restricted_form(generalized_laplacian(net), n, k, normalized)
    rank = numerical_rank(LV)
    required = (k - 1) * n * (n - 1) // 2
    return {"holds": rank == required, "rank": rank, "required": required,
            "bound": k * n * (n - 1) // 2, "L_V": LV}


def check_injectivity(net):
    """Per-vertex count of independent incident references.

    SO(n) needs n - 1 of them, R^n needs n.
    """
    required = net.n - 1 if net.space == "SOn" else net.n
    report = []
    for v in range(net.k):
        cols = [net.refs[e] for e, (i, j) in enumerate(net.graph.edges) if v in (i, j)]
        count = numerical_rank(np.array(cols)) if cols else 0
        report.append({"vertex": v, "independent_count": count, "required": required,
                       "passes": count >= required})
    return {"injective": all(r["passes"] for r in report), "vertices": report}


def check_cut_condition(net, max_vertices=MAX_CUT_VERTICES):
    """Every bipartition must carry enough independent references across the cut.

    The requirement is n - 1 for SO(n) and n for R^n. All 2^(k-1) - 1
    bipartitions are enumerated, so ``k`` is capped at ``max_vertices``.
    """
    k = net.k
    if k > max_vertices:
        raise CapacityError(f"cut enumeration limited to k <= {max_vertices}, got {k}")
    required = net.n - 1 if net.space == "SOn" else net.n
    edges = np.array(net.graph.edges, dtype=int).reshape(-1, 2)
    for mask in range(1, 2 ** (k - 1)):
        side = np.array([(mask >> v) & 1 for v in range(k)], dtype=bool)
        crossing = side[edges[:, 0]] != side[edges[:, 1]] if len(edges) else np.zeros(0, bool)
        rank = numerical_rank(net.refs[crossing]) if crossing.any() else 0
        if rank < required:
            part = (np.flatnonzero(side).tolist(), np.flatnonzero(~side).tolist())
            return {"holds": False, "worst_cut": part, "rank": rank, "required": required}
    return {"holds": True, "worst_cut": None, "rank": None, "required": required}


def _pair_parallel(a, b, tol=TOL_RANK):
    return np.linalg.norm(np.cross(a, b)) <= tol * np.linalg.norm(a) * np.linalg.norm(b)


def so3_triangle_class(y12, y13, y23):
    """Classify a three-agent SO(3) triangle by the ranks of its references.

    ``"CaseB"``: the three vectors span R^3. ``"CaseA"``: coplanar with all
    pairs independent. ``"Degenerate"``: some pair is parallel.
    """
    ys = [np.asarray(y, dtype=float) for y in (y12, y13, y23)]
    if any(_pair_parallel(a, b) for a, b in combinations(ys, 2)):
        return "Degenerate"
    return "CaseB" if numerical_rank(np.array(ys)) == 3 else "CaseA"


def cross_ratio(y12, y1x, y2x):
    """``(y12 x y2x)^T (y12 x y1x) / y2x^T (y12 x y1x)`` for the triangle (1, 2, x)."""
    c = np.cross(y12, y1x)
    den = float(np.dot(y2x, c))
    scale = np.linalg.norm(y2x) * np.linalg.norm(c)
    if scale == 0.0 or abs(den) <= TOL_RANK * scale:
        raise DegenerateConfigurationError("zero denominator: y2x lies in the plane of y12, y1x")
    return float(np.dot(np.cross(y12, y2x), c)) / den


def so3_quad_condition(y12, y13, y14, y23, y24, rtol=1e-9):
    """Four-agent test on the edges (1,2), (1,3), (1,4), (2,3), (2,4).

    Holds when every triple of the five references has rank 3 and the two
    triangle cross ratios differ by more than ``rtol`` relative. Returns a dict
    with ``holds``, ``reason`` (``"ok"``, ``"coplanar_triple"`` or
    ``"equal_ratios"``) and the two ratios.
    """
    ys = [np.asarray(y, dtype=float) for y in (y12, y13, y14, y23, y24)]
    for trip in combinations(range(5), 3):
        if numerical_rank(np.array([ys[t] for t in trip])) < 3:
            return {"holds": False, "reason": "coplanar_triple", "triple": trip, "ratios": None}
    r3 = cross_ratio(ys[0], ys[1], ys[3])
    r4 = cross_ratio(ys[0], ys[2], ys[4])
    differ = abs(r3 - r4) > rtol * max(abs(r3), abs(r4), 1.0)
    return {"holds": bool(differ), "reason": "ok" if differ else "equal_ratios",
            "ratios": (r3, r4)}


def partial_gradient(states, net, t=None, couplings=None):
    """Body-frame descent directions ``U_i = sum_j sk(Q_i^T P_ij Q_j)``."""
    Q = np.asarray(states, dtype=float)
    P = net.projectors(t) if couplings is None else couplings
    ei, ej = net.edge_arrays
    if len(ei) == 0:
        return np.zeros_like(Q)
    return kernels.rhs(Q, ei, ej, P)


def gradient_norm(states, net, couplings=None):
    """Riemannian gradient norm of the output cost, ``sqrt(sum ||U_i||_F^2)``."""
    return float(np.linalg.norm(partial_gradient(states, net, couplings=couplings)))


def hessian_gg(states, net, couplings=None):
    """Block matrix with off-diagonal ``-F_ij``, ``F_ij = Q_i^T M_ij Q_j``.

    Diagonal blocks hold ``sum_j F_ij``; the matrix is symmetric exactly when
    the states are an equilibrium of the output flow.
    """
    Q = np.asarray(states, dtype=float)
    P = net.projectors() if couplings is None else couplings
    F = [Q[i].T @ M @ Q[j] for (i, j), M in zip(net.graph.edges, P)]
    return laplacian_from_blocks(net.k, net.graph.edges, F, net.n)


def classify_equilibrium(states, net, couplings=None, tol=TOL_RANK):
    """Second-order test of an equilibrium of the output flow.

    Restricts ``I_n kron L^gg`` to so(n)^k, removes the directions of a
    common rotation and returns the remaining spectrum with a verdict:
    ``"ExpStable"`` (min > tol), ``"Unstable"`` (min < -tol) or ``"Degenerate"``.
    """
    n, k = net.n, net.k
    L = hessian_gg(states, net, couplings)
    L = 0.5 * (L + L.T)
    LV = restricted_form(L, n, k)
    m = n * (n - 1) // 2
    common = np.kron(np.ones((k, 1)), np.eye(m)) / np.sqrt(k)
    comp = null_space(common.T)
    spectrum = np.linalg.eigvalsh(comp.T @ LV @ comp)
    lo = spectrum[0] if len(spectrum) else np.inf
    verdict = "ExpStable" if lo > tol else ("Unstable" if lo < -tol else "Degenerate")
    return {"gradient_norm": gradient_norm(states, net, couplings),
            "restricted_spectrum": spectrum.tolist(), "verdict": verdict}


def check_persistent_excitation(reference, T, samples=2001, t0=0.0, threshold=1e-6):
    """Trapezoid average of ``y(t) y(t)^T`` over ``[t0, t0 + T]``.

    ``reference`` maps a time to a unit vector.
    """
    if T <= 0:
        raise DomainError("window length must be positive")
    ts = np.linspace(t0, t0 + T, samples)
    Y = np.array([np.asarray(reference(t), dtype=float) for t in ts])
    M = trapezoid(Y[:, :, None] * Y[:, None, :], ts, axis=0) / T
    min_eig = float(np.linalg.eigvalsh(M)[0])
    return {"M_bar": M, "min_eig": min_eig, "holds": min_eig > threshold}


def edge_reference(net, edge):
    """Callable ``t -> y_e(t)`` for one edge of a (possibly time-varying) network."""
    e = net.graph.edge_index(*edge)
    return lambda t: net.refs_at(t)[e]
