import numpy as np
import pytest
from hypothesis import given, strategies as st

from partsync.liegroup import (DimensionError, DomainError, SingularityError,
                               chordal_angle_distance, exp_skew, hat, is_rotation,
                               project_to_rotation, random_rotation, rotation_about_axis,
                               skew_coordinates, skew_part, so_basis, vee)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 7)


def series_exp(X, terms=30):
    """Truncated power series, an independent oracle for small arguments."""
    out = np.eye(len(X))
    term = np.eye(len(X))
    for m in range(1, terms):
        term = term @ X / m
        out = out + term
    return out


def random_skew(n, rng, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A - A.T)


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_exp_skew_matches_power_series(n, rng):
    for _ in range(5):
        X = random_skew(n, rng)
        assert np.allclose(exp_skew(X), series_exp(X), atol=1e-12)


def test_exp_so3_small_angle_branch():
    X = hat([1e-10, -2e-10, 3e-10])
    assert np.allclose(exp_skew(X), series_exp(X), atol=1e-15)


@given(seeds, dims)
def test_exp_skew_is_rotation(seed, n):
    rng = np.random.default_rng(seed)
    assert is_rotation(exp_skew(random_skew(n, rng, 3.0)), tol=1e-10)


@given(seeds)
def test_hat_vee_round_trip_and_cross_product(seed):
    rng = np.random.default_rng(seed)
    w, x = rng.standard_normal((2, 3))
    assert np.allclose(vee(hat(w)), w)
    assert np.allclose(hat(w) @ x, np.cross(w, x))


def test_skew_part_rejects_non_square():
    with pytest.raises(DimensionError):
        skew_part(np.zeros((2, 3)))


@given(seeds, dims)
def test_procrustes_recovers_rotation(seed, n):
    rng = np.random.default_rng(seed)
    Q = random_rotation(n, rng)
    S = np.diag(rng.uniform(0.5, 2.0, n))
    assert np.allclose(project_to_rotation(Q @ S), Q, atol=1e-10)


def test_procrustes_beats_sampled_rotations(rng):
    # nearest rotation must beat 1e5 random candidates
    M = rng.standard_normal((3, 3))
    R = project_to_rotation(M)
    best = np.linalg.norm(M - R)
    A = rng.standard_normal((100000, 3, 3))
    Qs, Rs = np.linalg.qr(A)
    Qs = Qs * np.sign(np.diagonal(Rs, axis1=1, axis2=2))[:, None, :]
    Qs[np.linalg.det(Qs) < 0, :, 0] *= -1
    dists = np.linalg.norm(M - Qs, axis=(1, 2))
    assert best <= dists.min() + 1e-12


def test_procrustes_rank_deficient():
    with pytest.raises(SingularityError):
        project_to_rotation(np.diag([1.0, 1.0, 0.0]))


@pytest.mark.parametrize("n", [2, 3, 5])
def test_so_basis_orthonormal(n):
    B = so_basis(n)
    assert len(B) == n * (n - 1) // 2
    G = np.array([[np.sum(a * b) for b in B] for a in B])
    assert np.allclose(G, np.eye(len(B)))
    for b in B:
        assert np.allclose(b, -b.T)


def test_so_basis_small_dimension():
    with pytest.raises(DomainError):
        so_basis(1)


@given(seeds, dims)
def test_skew_coordinates_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    X = random_skew(n, rng)
    c = skew_coordinates(X)
    assert np.allclose(sum(ci * B for ci, B in zip(c, so_basis(n))), X)


@given(seeds, st.floats(-np.pi, np.pi))
def test_rotation_about_axis_fixes_axis(seed, theta):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(3)
    y /= np.linalg.norm(y)
    R = rotation_about_axis(y, theta)
    assert is_rotation(R)
    assert np.allclose(R @ y, y)
    assert np.allclose(R, exp_skew(theta * hat(y)), atol=1e-12)
    assert np.isclose(np.linalg.norm(np.eye(3) - R), chordal_angle_distance(theta))


def test_rotation_about_axis_handedness():
    R = rotation_about_axis(np.array([0.0, 0.0, 1.0]), 0.3)
    assert np.isclose(R[0, 1], -np.sin(0.3))


def test_rotation_about_axis_errors():
    with pytest.raises(DomainError):
        rotation_about_axis([1.0, 1.0, 0.0], 0.1)
    with pytest.raises(DimensionError):
        rotation_about_axis([1.0, 0.0], 0.1)


def test_random_rotation_haar_trace_mean():
    # Haar measure on SO(3): E[tr Q] = 0 and E[tr(Q)^2] = 1
    rng = np.random.default_rng(7)
    tr = np.array([np.trace(random_rotation(3, rng)) for _ in range(20000)])
    assert abs(tr.mean()) < 0.03
    assert abs(np.mean(tr**2) - 1.0) < 0.05


def test_random_rotation_deterministic():
    assert np.array_equal(random_rotation(4, 3), random_rotation(4, 3))
    with pytest.raises(DomainError):
        random_rotation(1)


def test_is_rotation_rejects_reflection():
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not is_rotation(np.ones(3))
