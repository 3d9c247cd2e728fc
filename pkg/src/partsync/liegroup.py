"""Primitives on SO(n) and its Lie algebra so(n).

Rotations and skew matrices are plain ``numpy`` arrays; the helpers here
validate and construct them. Tolerances used across the package:

* construction accuracy ``TOL_CONSTRUCT`` (1e-12),
* invariant checks ``TOL_INVARIANT`` (1e-10),
* relative rank threshold ``TOL_RANK`` (1e-9 of the largest singular value).
"""
import numpy as np
from scipy.linalg import expm

TOL_CONSTRUCT = 1e-12
TOL_INVARIANT = 1e-10
TOL_RANK = 1e-9

MAX_DIM = 16


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class SingularityError(ValueError):
    pass


def _square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def skew_part(M):
    """Return sk(M) = (M - M^T) / 2."""
    M = _square(M)
    return 0.5 * (M - M.T)


def is_rotation(Q, tol=TOL_INVARIANT):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        return False
    n = Q.shape[0]
    return (np.linalg.norm(Q.T @ Q - np.eye(n)) < tol
            and abs(np.linalg.det(Q) - 1.0) < tol)


def hat(w):
    """so(3) matrix of the vector ``w``, so that ``hat(w) @ x == cross(w, x)``."""
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def vee(X):
    X = np.asarray(X, dtype=float)
    return np.array([X[2, 1], X[0, 2], X[1, 0]])


def _exp_so3(X):
    w = vee(X)
    theta = np.linalg.norm(w)
    if theta < 1e-8:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * X + b * (X @ X)


def exp_skew(X):
    """Matrix exponential of a skew-symmetric matrix.

    Uses the Rodrigues closed form for n = 3 and scaling-and-squaring Pade
    (``scipy.linalg.expm``) otherwise. The input is skew-symmetrized first so
    round-off in the caller cannot push the result off the group.
    """
    X = skew_part(X)
    if X.shape[0] == 3:
        return _exp_so3(X)
    if X.shape[0] == 2:
        c, s = np.cos(X[1, 0]), np.sin(X[1, 0])
        return np.array([[c, -s], [s, c]])
    return expm(X)


def project_to_rotation(M):
    """Nearest rotation to ``M`` in Frobenius norm (orthogonal Procrustes).

    Raises SingularityError when ``M`` is rank deficient, since the minimizer
    is then not unique.
    """
    M = _square(M)
    U, s, Vt = np.linalg.svd(M)
    if s[0] == 0.0 or s[-1] <= TOL_RANK * s[0]:
        raise SingularityError("matrix is rank deficient; nearest rotation is not unique")
    D = np.ones(len(s))
    if np.linalg.det(U @ Vt) < 0:
        D[-1] = -1.0
    return (U * D) @ Vt


def so_basis(n):
    """Orthonormal basis (E_ab - E_ba)/sqrt(2), a < b, of so(n) under tr(A^T B)."""
    if n < 2:
        raise DomainError("so(n) needs n >= 2")
    basis = []
    for a in range(n):
        for b in range(a + 1, n):
            E = np.zeros((n, n))
            E[a, b] = 1.0
            E[b, a] = -1.0
            basis.append(E / np.sqrt(2.0))
    return basis


def skew_coordinates(X, basis=None):
    X = _square(X)
    if basis is None:
        basis = so_basis(X.shape[0])
    return np.array([np.sum(B * X) for B in basis])


def rotation_about_axis(y, theta):
    """Rodrigues rotation by ``theta`` about the unit vector ``y`` in R^3.

    Right-handed convention: ``rotation_about_axis(e_z, t)`` has ``-sin(t)`` in
    entry (0, 1). The result fixes ``y``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (3,):
        raise DimensionError("axis must be a 3-vector")
    if abs(np.linalg.norm(y) - 1.0) > TOL_CONSTRUCT:
        raise DomainError("axis must be a unit vector")
    K = hat(y)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def random_rotation(n, seed=None):
    """Haar-distributed rotation; ``seed`` may be an int or a numpy Generator."""
    if n < 2:
        raise DomainError("SO(n) needs n >= 2")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    Qm, R = np.linalg.qr(A)
    Qm = Qm * np.sign(np.diag(R))
    if np.linalg.det(Qm) < 0:
        Qm[:, 0] = -Qm[:, 0]
    return Qm


def chordal_angle_distance(theta):
    """Frobenius distance ||I - R||_F of a rotation by angle ``theta`` in SO(3)."""
    return 2.0 * np.sqrt(2.0) * abs(np.sin(theta / 2.0))
