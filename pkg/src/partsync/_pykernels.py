"""Pure-numpy integration kernels.

States are stacked as a ``(k, n, n)`` array. Edges are given as two index
arrays ``ei < ej`` and one coupling matrix ``P[e]`` per edge, so agent ``i``
receives ``sk(Q_i^T P_e Q_j)`` and agent ``j`` receives its negative.

The compiled module ``_ckernels`` exposes the same functions for n = 3.
"""
import numpy as np
from scipy.linalg import expm

EULER = 0
CF4 = 1


def exp_skew_batch(X):
    """exp of a stack of skew matrices, shape ``(k, n, n)``."""
    X = 0.5 * (X - np.swapaxes(X, -1, -2))
    n = X.shape[-1]
    if n == 3:
        w = np.stack([X[:, 2, 1], X[:, 0, 2], X[:, 1, 0]], axis=-1)
        th = np.linalg.norm(w, axis=-1)[:, None, None]
        small = th < 1e-8
        ths = np.where(small, 1.0, th)
        a = np.where(small, 1.0 - th**2 / 6.0, np.sin(ths) / ths)
        b = np.where(small, 0.5 - th**2 / 24.0, (1.0 - np.cos(ths)) / ths**2)
        return np.eye(3) + a * X + b * (X @ X)
    if n == 2:
        c, s = np.cos(X[:, 1, 0]), np.sin(X[:, 1, 0])
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return np.stack([expm(x) for x in X])


def rhs(Q, ei, ej, P):
    """Body-frame velocities ``U`` with ``dQ_i/dt = Q_i U_i``."""
    T = np.swapaxes(Q[ei], 1, 2) @ P @ Q[ej]
    S = 0.5 * (T - np.swapaxes(T, 1, 2))
    U = np.zeros_like(Q)
    np.add.at(U, ei, S)
    np.add.at(U, ej, -S)
    return U


def step(Q, ei, ej, P0, Pmid, P1, h, method=CF4):
    """One step of size ``h``; ``P0, Pmid, P1`` are the couplings at t, t+h/2, t+h.

    CF4 is the fourth-order commutator-free Lie group method with two
    exponentials per step; EULER is the geometric Euler step.
    """
    A1 = rhs(Q, ei, ej, P0)
    if method == EULER:
        return Q @ exp_skew_batch(h * A1)
    Y2 = Q @ exp_skew_batch(0.5 * h * A1)
    A2 = rhs(Y2, ei, ej, Pmid)
    Y3 = Q @ exp_skew_batch(0.5 * h * A2)
    A3 = rhs(Y3, ei, ej, Pmid)
    Y4 = Y2 @ exp_skew_batch(h * A3 - 0.5 * h * A1)
    A4 = rhs(Y4, ei, ej, P1)
    d1 = h * (A1 / 4 + A2 / 6 + A3 / 6 - A4 / 12)
    d2 = h * (-A1 / 12 + A2 / 6 + A3 / 6 + A4 / 4)
    return Q @ exp_skew_batch(d1) @ exp_skew_batch(d2)


def advance_fixed(Q, ei, ej, P, h, nsteps, method=CF4):
    """``nsteps`` steps with constant couplings; returns a new array."""
    Q = np.array(Q, dtype=float)
    for _ in range(nsteps):
        Q = step(Q, ei, ej, P, P, P, h, method)
    return Q


def anchor_positions(centers, amp, freq, phase, t):
    """Quasi-periodic trajectories ``c + sum_h a_h sin(2 pi f_h t + phi_h)``."""
    return centers + np.sum(amp * np.sin(2.0 * np.pi * freq * t + phase), axis=-1)


def anchor_couplings(centers, amp, freq, phase, by_edge, ei, ej, t):
    """Projectors onto the normalized reference directions at time ``t``.

    With ``by_edge`` each trajectory row is the reference of one edge;
    otherwise rows are vertex anchors and edge (i, j) uses ``y_i - y_j``.
    """
    pos = anchor_positions(centers, amp, freq, phase, t)
    d = pos if by_edge else pos[ei] - pos[ej]
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return d[:, :, None] * d[:, None, :]


def advance_anchors(Q, ei, ej, centers, amp, freq, phase, by_edge, t0, h, nsteps, gain,
                    method=CF4):
    """Time-varying flow ``dQ_i/dt = gain * Q_i U_i(t)`` from ``t0``."""
    Q = np.array(Q, dtype=float)
    args = (centers, amp, freq, phase, by_edge, ei, ej)
    P1 = anchor_couplings(*args, t0)
    for s in range(nsteps):
        t = t0 + s * h
        P0 = P1
        Pmid = anchor_couplings(*args, t + 0.5 * h) if method == CF4 else None
        P1 = anchor_couplings(*args, t + h)
        Q = step(Q, ei, ej, P0, Pmid, P1, gain * h, method)
    return Q
