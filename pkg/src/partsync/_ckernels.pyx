# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SO(3) integration kernels; same API as ``_pykernels`` for n = 3."""
import numpy as np
from libc.math cimport sin, cos, sqrt, M_PI
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset

cdef enum:
    EULER = 0
    CF4 = 1


cdef inline void mat_mul(const double* A, const double* B, double* C) noexcept nogil:
    cdef int r, c
    for r in range(3):
        for c in range(3):
            C[3 * r + c] = A[3 * r] * B[c] + A[3 * r + 1] * B[3 + c] + A[3 * r + 2] * B[6 + c]


cdef inline void mat_tmul(const double* A, const double* B, double* C) noexcept nogil:
    # C = A^T B
    cdef int r, c
    for r in range(3):
        for c in range(3):
            C[3 * r + c] = A[r] * B[c] + A[3 + r] * B[3 + c] + A[6 + r] * B[6 + c]


cdef inline void exp_skew3(const double* X, double s, double* R) noexcept nogil:
    # R = exp(s * sk(X)) by Rodrigues
    cdef double wx = 0.5 * s * (X[7] - X[5])
    cdef double wy = 0.5 * s * (X[2] - X[6])
    cdef double wz = 0.5 * s * (X[3] - X[1])
    cdef double th2 = wx * wx + wy * wy + wz * wz
    cdef double th = sqrt(th2)
    cdef double a, b
    if th < 1e-8:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = sin(th) / th
        b = (1.0 - cos(th)) / th2
    R[0] = 1.0 - b * (wy * wy + wz * wz)
    R[1] = -a * wz + b * wx * wy
    R[2] = a * wy + b * wx * wz
    R[3] = a * wz + b * wx * wy
    R[4] = 1.0 - b * (wx * wx + wz * wz)
    R[5] = -a * wx + b * wy * wz
    R[6] = -a * wy + b * wx * wz
    R[7] = a * wx + b * wy * wz
    R[8] = 1.0 - b * (wx * wx + wy * wy)


cdef void rhs3(const double* Q, int k, const int* ei, const int* ej, const double* P, int m,
               double* U) noexcept nogil:
    cdef double T[9]
    cdef double S[9]
    cdef double sk
    cdef int e, r, c, i, j
    memset(U, 0, 9 * k * sizeof(double))
    for e in range(m):
        i = ei[e]
        j = ej[e]
        mat_tmul(Q + 9 * i, P + 9 * e, T)
        mat_mul(T, Q + 9 * j, S)
        for r in range(3):
            for c in range(3):
                sk = 0.5 * (S[3 * r + c] - S[3 * c + r])
                U[9 * i + 3 * r + c] += sk
                U[9 * j + 3 * r + c] -= sk


cdef inline void right_exp(const double* Q, const double* X, double s, int k, double* out) noexcept nogil:
    # out_i = Q_i exp(s X_i)
    cdef double R[9]
    cdef int a
    for a in range(k):
        exp_skew3(X + 9 * a, s, R)
        mat_mul(Q + 9 * a, R, out + 9 * a)


cdef struct Work:
    double* A1
    double* A2
    double* A3
    double* A4
    double* Y2
    double* Y3
    double* Y4


cdef void step3(double* Q, int k, const int* ei, const int* ej, const double* P0,
                const double* Pmid, const double* P1, int m, double h, int method,
                Work* w) noexcept nogil:
    cdef int a, q
    cdef double R1[9]
    cdef double R2[9]
    cdef double T[9]
    cdef double d1[9]
    cdef double d2[9]
    rhs3(Q, k, ei, ej, P0, m, w.A1)
    if method == EULER:
        right_exp(Q, w.A1, h, k, w.Y2)
        memcpy(Q, w.Y2, 9 * k * sizeof(double))
        return
    right_exp(Q, w.A1, 0.5 * h, k, w.Y2)
    rhs3(w.Y2, k, ei, ej, Pmid, m, w.A2)
    right_exp(Q, w.A2, 0.5 * h, k, w.Y3)
    rhs3(w.Y3, k, ei, ej, Pmid, m, w.A3)
    for q in range(9 * k):
        w.A4[q] = w.A3[q] - 0.5 * w.A1[q]
    right_exp(w.Y2, w.A4, h, k, w.Y4)
    rhs3(w.Y4, k, ei, ej, P1, m, w.A4)
    for a in range(k):
        for q in range(9):
            d1[q] = h * (w.A1[9 * a + q] / 4 + w.A2[9 * a + q] / 6 + w.A3[9 * a + q] / 6
                         - w.A4[9 * a + q] / 12)
            d2[q] = h * (-w.A1[9 * a + q] / 12 + w.A2[9 * a + q] / 6 + w.A3[9 * a + q] / 6
                         + w.A4[9 * a + q] / 4)
        exp_skew3(d1, 1.0, R1)
        exp_skew3(d2, 1.0, R2)
        mat_mul(Q + 9 * a, R1, T)
        mat_mul(T, R2, Q + 9 * a)


cdef Work* work_alloc(int k) noexcept nogil:
    cdef Work* w = <Work*> malloc(sizeof(Work))
    cdef double* buf = <double*> malloc(7 * 9 * k * sizeof(double))
    w.A1 = buf
    w.A2 = buf + 9 * k
    w.A3 = buf + 18 * k
    w.A4 = buf + 27 * k
    w.Y2 = buf + 36 * k
    w.Y3 = buf + 45 * k
    w.Y4 = buf + 54 * k
    return w


cdef void work_free(Work* w) noexcept nogil:
    free(w.A1)
    free(w)


def _checked(Q):
    Q = np.array(Q, dtype=np.float64, order="C", copy=True)
    if Q.ndim != 3 or Q.shape[1:] != (3, 3):
        raise ValueError("compiled kernels handle (k, 3, 3) states only")
    return Q


def rhs(Q, ei, ej, P):
    cdef double[:, :, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef int[::1] eiv = np.ascontiguousarray(ei, dtype=np.intc)
    cdef int[::1] ejv = np.ascontiguousarray(ej, dtype=np.intc)
    cdef double[:, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    out = np.empty_like(np.asarray(Qv))
    cdef double[:, :, ::1] Uv = out
    if eiv.shape[0] == 0:
        out[...] = 0.0
        return out
    rhs3(&Qv[0, 0, 0], Qv.shape[0], &eiv[0], &ejv[0], &Pv[0, 0, 0], eiv.shape[0], &Uv[0, 0, 0])
    return out


def advance_fixed(Q, ei, ej, P, double h, long nsteps, int method=CF4):
    Q = _checked(Q)
    cdef double[:, :, ::1] Qv = Q
    cdef int[::1] eiv = np.ascontiguousarray(ei, dtype=np.intc)
    cdef int[::1] ejv = np.ascontiguousarray(ej, dtype=np.intc)
    cdef double[:, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef int k = Qv.shape[0]
    cdef int m = eiv.shape[0]
    cdef long s
    cdef Work* w
    if m == 0 or nsteps <= 0:
        return Q
    with nogil:
        w = work_alloc(k)
        for s in range(nsteps):
            step3(&Qv[0, 0, 0], k, &eiv[0], &ejv[0], &Pv[0, 0, 0], &Pv[0, 0, 0], &Pv[0, 0, 0],
                  m, h, method, w)
        work_free(w)
    return Q


cdef void anchor_proj(const double* centers, const double* amp, const double* freq,
                      const double* phase, int rows, int H, int by_edge, const int* ei,
                      const int* ej, int m, double t, double* pos, double* P) noexcept nogil:
    cdef int r, c, hh, e, a, b
    cdef double v, d[3]
    cdef double nrm
    for r in range(rows):
        for c in range(3):
            v = centers[3 * r + c]
            for hh in range(H):
                a = (3 * r + c) * H + hh
                v = v + amp[a] * sin(2.0 * M_PI * freq[a] * t + phase[a])
            pos[3 * r + c] = v
    for e in range(m):
        for c in range(3):
            if by_edge:
                d[c] = pos[3 * e + c]
            else:
                d[c] = pos[3 * ei[e] + c] - pos[3 * ej[e] + c]
        nrm = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        for a in range(3):
            for b in range(3):
                P[9 * e + 3 * a + b] = d[a] * d[b] / nrm


def anchor_couplings(centers, amp, freq, phase, by_edge, ei, ej, double t):
    cdef double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[:, :, ::1] av = np.ascontiguousarray(amp, dtype=np.float64)
    cdef double[:, :, ::1] fv = np.ascontiguousarray(freq, dtype=np.float64)
    cdef double[:, :, ::1] pv = np.ascontiguousarray(phase, dtype=np.float64)
    cdef int[::1] eiv = np.ascontiguousarray(ei, dtype=np.intc)
    cdef int[::1] ejv = np.ascontiguousarray(ej, dtype=np.intc)
    cdef int m = eiv.shape[0]
    pos = np.empty((cv.shape[0], 3))
    out = np.empty((m, 3, 3))
    cdef double[:, ::1] posv = pos
    cdef double[:, :, ::1] outv = out
    if m == 0:
        return out
    anchor_proj(&cv[0, 0], &av[0, 0, 0], &fv[0, 0, 0], &pv[0, 0, 0], cv.shape[0], av.shape[2],
                1 if by_edge else 0, &eiv[0], &ejv[0], m, t, &posv[0, 0], &outv[0, 0, 0])
    return out


def advance_anchors(Q, ei, ej, centers, amp, freq, phase, by_edge, double t0, double h,
                    long nsteps, double gain, int method=CF4):
    Q = _checked(Q)
    cdef double[:, :, ::1] Qv = Q
    cdef double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[:, :, ::1] av = np.ascontiguousarray(amp, dtype=np.float64)
    cdef double[:, :, ::1] fv = np.ascontiguousarray(freq, dtype=np.float64)
    cdef double[:, :, ::1] pv = np.ascontiguousarray(phase, dtype=np.float64)
    cdef int[::1] eiv = np.ascontiguousarray(ei, dtype=np.intc)
    cdef int[::1] ejv = np.ascontiguousarray(ej, dtype=np.intc)
    cdef int k = Qv.shape[0]
    cdef int m = eiv.shape[0]
    cdef int rows = cv.shape[0]
    cdef int H = av.shape[2]
    cdef int be = 1 if by_edge else 0
    cdef long s
    cdef double t
    cdef Work* w
    cdef double* pos
    cdef double* P0
    cdef double* Pm
    cdef double* P1
    cdef double* tmp
    if m == 0 or nsteps <= 0:
        return Q
    with nogil:
        w = work_alloc(k)
        pos = <double*> malloc(3 * rows * sizeof(double))
        P0 = <double*> malloc(9 * m * sizeof(double))
        Pm = <double*> malloc(9 * m * sizeof(double))
        P1 = <double*> malloc(9 * m * sizeof(double))
        anchor_proj(&cv[0, 0], &av[0, 0, 0], &fv[0, 0, 0], &pv[0, 0, 0], rows, H, be,
                    &eiv[0], &ejv[0], m, t0, pos, P1)
        for s in range(nsteps):
            t = t0 + s * h
            tmp = P0
            P0 = P1
            P1 = tmp
            if method == CF4:
                anchor_proj(&cv[0, 0], &av[0, 0, 0], &fv[0, 0, 0], &pv[0, 0, 0], rows, H, be,
                            &eiv[0], &ejv[0], m, t + 0.5 * h, pos, Pm)
            anchor_proj(&cv[0, 0], &av[0, 0, 0], &fv[0, 0, 0], &pv[0, 0, 0], rows, H, be,
                        &eiv[0], &ejv[0], m, t + h, pos, P1)
            step3(&Qv[0, 0, 0], k, &eiv[0], &ejv[0], P0, Pm, P1, m, gain * h, method, w)
        free(pos)
        free(P0)
        free(Pm)
        free(P1)
        work_free(w)
    return Q
