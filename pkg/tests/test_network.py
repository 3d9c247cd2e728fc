import numpy as np
import pytest
from hypothesis import given, strategies as st

from partsync.dynamics import cost_partial
from partsync.graph import Graph
from partsync.liegroup import (DomainError, chordal_angle_distance, exp_skew, hat,
                               random_rotation)
from partsync.network import (CapacityError, DegenerateConfigurationError, NetworkConfig,
                              PerturbationSet, TimeVaryingRefs, UsageError, check_condition_A,
                              check_condition_B, check_cut_condition, check_injectivity,
                              check_persistent_excitation, classify_equilibrium, cross_ratio,
                              generalized_laplacian, generic_refs, gradient_norm, hessian_gg,
                              laplacian_factorization, numerical_rank, partial_gradient,
                              perturbation_angle, projector, relative_position_refs,
                              restricted_form, sample_perturbations, so3_quad_condition,
                              so3_triangle_class)

seeds = st.integers(0, 2**32 - 1)


def random_connected_graph(k, rng, p=0.5):
    edges = {(i, i + 1) for i in range(k - 1)}  # spanning path
    edges |= {(i, j) for i in range(k) for j in range(i + 2, k) if rng.random() < p}
    return Graph(k, tuple(edges))


def nocon():
    return NetworkConfig.from_vectors(Graph.complete(3), {(0, 1): [1, 0, 0], (1, 2): [0, 1, 0],
                                                          (0, 2): [0, 0, 1]})


def test_config_validation():
    G = Graph.complete(3)
    with pytest.raises(UsageError):
        NetworkConfig(G, 3)
    with pytest.raises(UsageError):
        NetworkConfig(G, 3, np.eye(3)[:2])
    with pytest.raises(UsageError):
        NetworkConfig(G, 3, np.eye(3), space="SE3")
    with pytest.raises(DomainError):
        NetworkConfig(G, 1, np.ones((3, 1)))


def test_refs_are_read_only():
    net = nocon()
    with pytest.raises(ValueError):
        net.refs[0, 0] = 2.0


@given(seeds, st.integers(2, 7), st.integers(2, 4))
def test_laplacian_properties(seed, k, n):
    rng = np.random.default_rng(seed)
    net = generic_refs(random_connected_graph(k, rng), n, rng)
    L = generalized_laplacian(net)
    assert np.allclose(L, laplacian_factorization(net))
    assert np.allclose(L, L.T)
    assert np.linalg.eigvalsh(L)[0] > -1e-12
    # consensus vectors lie in the kernel
    v = np.tile(rng.standard_normal(n), k)
    assert np.allclose(L @ v, 0.0)
    rep = check_condition_A(net)
    assert rep["rank"] <= min(rep["bound"], rep["required"])


@given(seeds, st.integers(2, 6))
def test_condition_a_implies_b(seed, k):
    rng = np.random.default_rng(seed)
    net = generic_refs(random_connected_graph(k, rng), 3, rng)
    if check_condition_A(net)["holds"]:
        assert check_condition_B(net)["holds"]


@pytest.mark.parametrize("seed", range(5))
def test_so2_restricted_form_is_standard_laplacian(seed):
    rng = np.random.default_rng(seed)
    net = generic_refs(random_connected_graph(6, rng), 2, rng)
    LV = restricted_form(generalized_laplacian(net), 2, net.k, normalized=False)
    from partsync.graph import standard_laplacian
    assert np.linalg.norm(LV - standard_laplacian(net.graph)) < 1e-10


def test_condition_b_needs_son():
    net = NetworkConfig(Graph(2, ((0, 1),)), 2, [[1.0, 0.0]], space="Rn")
    with pytest.raises(UsageError):
        check_condition_B(net)


def test_nocon_static_checks():
    net = nocon()
    assert check_injectivity(net)["injective"]
    assert check_cut_condition(net)["holds"]
    A = check_condition_A(net)
    assert not A["holds"] and A["rank"] == 3
    assert check_condition_B(net)["holds"]


def test_injectivity_fails_with_single_reference():
    net = NetworkConfig(Graph(3, ((0, 1), (1, 2))), 3, [[1.0, 0, 0], [0, 1.0, 0]])
    rep = check_injectivity(net)
    assert not rep["injective"]
    assert [v["passes"] for v in rep["vertices"]] == [False, True, False]


def test_cut_condition_reports_worst_cut():
    net = NetworkConfig(Graph(4, ((0, 1), (1, 2), (2, 3))), 3,
                        [[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    rep = check_cut_condition(net)
    assert not rep["holds"] and rep["rank"] == 1


def test_cut_condition_rn_requires_n():
    net = NetworkConfig(Graph(2, ((0, 1),)), 2, [[1.0, 0.0]], space="Rn")
    assert not check_cut_condition(net)["holds"]


def test_cut_capacity():
    net = generic_refs(Graph(21, tuple((i, i + 1) for i in range(20))), 3, 0)
    with pytest.raises(CapacityError):
        check_cut_condition(net)


def test_triangle_classes():
    e = np.eye(3)
    assert so3_triangle_class(e[0], e[1], e[2]) == "CaseB"
    assert so3_triangle_class(e[0], e[1], (e[0] + e[1]) / np.sqrt(2)) == "CaseA"
    assert so3_triangle_class(e[0], -e[0], e[2]) == "Degenerate"


def test_quad_condition():
    rng = np.random.default_rng(3)
    ys = rng.standard_normal((5, 3))
    rep = so3_quad_condition(*ys)
    assert rep["holds"] and rep["reason"] == "ok"
    # same triangle on both sides: equal ratios
    y12, y13, y23 = ys[:3]
    assert so3_quad_condition(y12, y13, y13 + 1e-3 * y12, y23, y23 + 1e-3 * y12)["reason"] != "ok"
    e = np.eye(3)
    assert so3_quad_condition(e[0], e[1], e[0] + e[1], e[2], ys[4])["reason"] == "coplanar_triple"


def test_cross_ratio_degenerate():
    e = np.eye(3)
    with pytest.raises(DegenerateConfigurationError):
        cross_ratio(e[0], e[1], e[0] + e[1])


def test_numerical_rank_edge_cases():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.zeros((0, 3))) == 0
    assert numerical_rank(np.diag([1.0, 1e-12])) == 1


def test_projector():
    y = np.array([0.6, 0.8, 0.0])
    P = projector(y)
    assert np.allclose(P @ P, P) and np.isclose(np.trace(P), 1.0)
    with pytest.raises(DomainError):
        projector([1.0, 1.0, 0.0])


@given(seeds)
def test_partial_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = generic_refs(Graph.complete(4), 3, rng)
    Q = np.array([random_rotation(3, rng) for _ in range(4)])
    U = partial_gradient(Q, net)
    i = rng.integers(4)
    w = rng.standard_normal(3)
    h = 1e-6
    Qp, Qm = Q.copy(), Q.copy()
    Qp[i] = Q[i] @ exp_skew(h * hat(w))
    Qm[i] = Q[i] @ exp_skew(-h * hat(w))
    fd = (cost_partial(Qp, net) - cost_partial(Qm, net)) / (2 * h)
    # U is the descent direction, so the directional derivative is -<U_i, hat(w)>
    assert np.isclose(fd, -np.sum(U[i] * hat(w)), rtol=1e-6, atol=1e-9)


def test_hessian_symmetric_at_equilibrium_and_classification():
    net = generic_refs(Graph.complete(4), 3, 1)
    Q = np.array([random_rotation(3, 5)] * 4)
    L = hessian_gg(Q, net)
    assert np.allclose(L, L.T)
    rep = classify_equilibrium(Q, net)
    assert rep["gradient_norm"] < 1e-14
    assert rep["verdict"] == "ExpStable"


def test_case_a_triangle_consensus_is_degenerate():
    refs = np.array([[np.cos(a), np.sin(a), 0.0] for a in (0.0, 1.2, 0.5)])
    net = NetworkConfig(Graph.complete(3), 3, refs)
    assert not check_condition_B(net)["holds"]
    assert classify_equilibrium(np.array([np.eye(3)] * 3), net)["verdict"] == "Degenerate"


def test_persistent_excitation():
    const = check_persistent_excitation(lambda t: np.array([0.0, 0.0, 1.0]), 10.0)
    assert not const["holds"]
    spin = check_persistent_excitation(
        lambda t: np.array([np.cos(t) * np.sin(1.0), np.sin(t) * np.sin(1.0), np.cos(1.0)]),
        2 * np.pi)
    assert spin["holds"]
    assert np.isclose(np.trace(spin["M_bar"]), 1.0)
    with pytest.raises(DomainError):
        check_persistent_excitation(lambda t: np.ones(3), 0.0)


@given(seeds, st.sampled_from(["anchors", "edges"]), st.floats(0, 100))
def test_time_varying_refs_are_unit(seed, mode, t):
    G = Graph.complete(4)
    rows = G.k if mode == "anchors" else G.num_edges
    tv = TimeVaryingRefs.random(rows, 3, seed, mode=mode, center=(-1.0, 1.0))
    net = NetworkConfig(G, 3, time_varying=tv)
    Y = net.refs_at(t)
    assert Y.shape == (6, 3)
    assert np.allclose(np.linalg.norm(Y, axis=1), 1.0)
    with pytest.raises(UsageError):
        net.refs_at()


@given(seeds, st.floats(1e-6, 0.5))
def test_sampled_perturbation_magnitudes(seed, bound):
    E = sample_perturbations(Graph.complete(3), bound, seed, 0.5, 1.0)
    for key, R in E.rotations.items():
        d = np.linalg.norm(R - np.eye(3))
        assert 0.5 * bound * (1 - 1e-9) <= d <= bound * (1 + 1e-9)
        assert np.isclose(E.magnitudes[key], d)


def test_perturbation_angle_inverts_chordal_distance():
    for d in (1e-5, 0.01, 1.0):
        assert np.isclose(chordal_angle_distance(perturbation_angle(d)), d)


def test_perturbation_bound_and_missing_edges():
    R = exp_skew(hat([0.0, 0.0, 0.5]))
    with pytest.raises(DomainError):
        PerturbationSet({(0, 1): R, (1, 0): R}, 0.1)
    net = nocon()
    with pytest.raises(UsageError):
        PerturbationSet({(0, 1): np.eye(3)}, 0.1).couplings(net)
    ident = PerturbationSet.identity(net.graph)
    assert np.allclose(ident.couplings(net), net.projectors())


def test_relative_position_refs_fail_conditions():
    net, anchors = relative_position_refs(Graph.complete(6), 3, 0)
    assert anchors.shape == (6, 3)
    assert not check_condition_A(net)["holds"]
    assert not check_condition_B(net)["holds"]


def test_gradient_norm_zero_at_consensus():
    net = generic_refs(Graph.complete(3), 3, 0)
    assert gradient_norm(np.array([np.eye(3)] * 3), net) == 0.0
