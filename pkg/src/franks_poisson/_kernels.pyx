# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for generated Hamiltonian fields and RK4 flows.

Same API and arithmetic as ``_kernels_py``; see that module for the field
layout.  Loops run point by point without the GIL.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite, ceil
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"

cdef double PLATEAU = 0.25
cdef double OUTER = 1.0
cdef double WIDTH = 0.75


cdef inline double _tail(double u) noexcept nogil:
    # 1 - s(1 - u) = u^6 (28 - 48u + 21u^2), no cancellation near u = 0
    cdef double u3 = u * u * u
    return u3 * u3 * (28.0 + u * (-48.0 + 21.0 * u))


cdef inline double _s1(double t) noexcept nogil:
    cdef double u = 1.0 - t
    return 168.0 * t * t * u * u * u * u * u


cdef inline double _ell(double r) noexcept nogil:
    cdef double a = fabs(r)
    if a <= PLATEAU:
        return 1.0
    if a >= OUTER:
        return 0.0
    return _tail(1.0 - (a - PLATEAU) / WIDTH)


cdef inline double _ell_d1(double r) noexcept nogil:
    cdef double a = fabs(r)
    cdef double v
    if a <= PLATEAU or a >= OUTER:
        return 0.0
    v = -_s1((a - PLATEAU) / WIDTH) / WIDTH
    return v if r > 0 else -v


cdef struct Field:
    int D
    int T
    int has_quad
    double* c
    double* Q
    double* M
    double* b
    double* amp
    double* alpha
    long* tkind
    long* slots
    double* qmask


cdef class _Params:
    cdef Field f
    cdef object keep

    def __cinit__(self, params):
        c, Q, has_quad, M, b, amp, alpha, tkind, slots, qmask = params
        c = np.ascontiguousarray(c, dtype=np.float64)
        D = c.shape[0]
        T = len(amp)
        Q = np.ascontiguousarray(Q if has_quad else np.zeros((D, D)), dtype=np.float64)
        M = np.ascontiguousarray(np.reshape(M, (T, D, D)) if T else np.zeros((1, D, D)), dtype=np.float64)
        b = np.ascontiguousarray(np.reshape(b, (T, D)) if T else np.zeros((1, D)), dtype=np.float64)
        amp = np.ascontiguousarray(amp if T else np.zeros(1), dtype=np.float64)
        alpha = np.ascontiguousarray(alpha if T else np.zeros(1), dtype=np.float64)
        tkind = np.ascontiguousarray(tkind if T else np.zeros(1, dtype=np.int64), dtype=np.int64)
        slots = np.ascontiguousarray(np.reshape(slots, (T, 4)) if T else np.zeros((1, 4), dtype=np.int64), dtype=np.int64)
        qmask = np.ascontiguousarray(np.reshape(qmask, (T, D)) if T else np.zeros((1, D)), dtype=np.float64)
        self.keep = (c, Q, M, b, amp, alpha, tkind, slots, qmask)
        self.f.D = D
        self.f.T = T
        self.f.has_quad = 1 if has_quad else 0
        self.f.c = <double*> cnp.PyArray_DATA(c)
        self.f.Q = <double*> cnp.PyArray_DATA(Q)
        self.f.M = <double*> cnp.PyArray_DATA(M)
        self.f.b = <double*> cnp.PyArray_DATA(b)
        self.f.amp = <double*> cnp.PyArray_DATA(amp)
        self.f.alpha = <double*> cnp.PyArray_DATA(alpha)
        self.f.tkind = <long*> cnp.PyArray_DATA(tkind)
        self.f.slots = <long*> cnp.PyArray_DATA(slots)
        self.f.qmask = <double*> cnp.PyArray_DATA(qmask)


cdef double _value(Field* f, double* p, double* u) noexcept nogil:
    cdef int D = f.D
    cdef int t, i, j, gx, gy, ix, iy
    cdef double out = 0.0, acc, rho, rho_i, K, fx, fy, qm
    for i in range(D):
        out += f.c[i] * p[i]
    if f.has_quad:
        acc = 0.0
        for i in range(D):
            for j in range(D):
                acc += p[i] * f.Q[i * D + j] * p[j]
        out += 0.5 * acc
    for t in range(f.T):
        gx = f.slots[4 * t]
        gy = f.slots[4 * t + 1]
        ix = f.slots[4 * t + 2]
        iy = f.slots[4 * t + 3]
        for i in range(D):
            acc = f.b[t * D + i]
            for j in range(D):
                acc += f.M[(t * D + i) * D + j] * p[j]
            u[i] = acc
        fx = 1.0
        fy = 1.0
        if f.tkind[t] == 1:
            fx = _ell(2.0 * u[gx] - 1.0)
            fy = _ell(u[gy])
            if fx == 0.0 or fy == 0.0:
                continue
        rho = 0.0
        for i in range(D):
            qm = f.qmask[t * D + i]
            rho += qm * u[i] * u[i]
        rho *= 0.5
        if rho >= OUTER:
            continue
        rho_i = 0.5 * (u[ix] * u[ix] + u[iy] * u[iy])
        K = f.alpha[t] * _ell(rho) * rho_i
        out += f.amp[t] * fx * fy * K
    return out


cdef void _gradient(Field* f, double* p, double* g, double* u, double* gF) noexcept nogil:
    cdef int D = f.D
    cdef int t, i, j, gx, gy, ix, iy, is_transit
    cdef double acc, rho, rho_i, a, l0, l1, K, fx, fy, dfx, dfy, sx, w, am
    for i in range(D):
        g[i] = f.c[i]
    if f.has_quad:
        for i in range(D):
            acc = 0.0
            for j in range(D):
                acc += p[j] * f.Q[j * D + i]
            g[i] += acc
    for t in range(f.T):
        gx = f.slots[4 * t]
        gy = f.slots[4 * t + 1]
        ix = f.slots[4 * t + 2]
        iy = f.slots[4 * t + 3]
        is_transit = f.tkind[t] == 1
        for i in range(D):
            acc = f.b[t * D + i]
            for j in range(D):
                acc += f.M[(t * D + i) * D + j] * p[j]
            u[i] = acc
        fx = 1.0
        fy = 1.0
        dfx = 0.0
        dfy = 0.0
        if is_transit:
            sx = 2.0 * u[gx] - 1.0
            fx = _ell(sx)
            fy = _ell(u[gy])
            dfx = 2.0 * _ell_d1(sx)
            dfy = _ell_d1(u[gy])
            if fx == 0.0 and dfx == 0.0:
                continue
            if fy == 0.0 and dfy == 0.0:
                continue
        rho = 0.0
        for i in range(D):
            rho += f.qmask[t * D + i] * u[i] * u[i]
        rho *= 0.5
        if rho >= OUTER:
            continue
        a = f.alpha[t]
        rho_i = 0.5 * (u[ix] * u[ix] + u[iy] * u[iy])
        l0 = _ell(rho)
        l1 = _ell_d1(rho)
        K = a * l0 * rho_i
        w = fx * fy
        for i in range(D):
            gF[i] = w * a * l1 * rho_i * f.qmask[t * D + i] * u[i]
        gF[ix] += w * a * l0 * u[ix]
        gF[iy] += w * a * l0 * u[iy]
        if is_transit:
            gF[gx] += dfx * fy * K
            gF[gy] += fx * dfy * K
        am = f.amp[t]
        for j in range(D):
            acc = 0.0
            for i in range(D):
                acc += gF[i] * f.M[(t * D + i) * D + j]
            g[j] += am * acc


cdef void _vfield(Field* f, int d, double* p, double* x, double* g, double* u, double* gF) noexcept nogil:
    cdef int i
    _gradient(f, p, g, u, gF)
    for i in range(f.D):
        x[i] = 0.0
    for i in range(d):
        x[i] = -g[d + i]
        x[d + i] = g[i]


cdef struct Work:
    double* k1
    double* k2
    double* k3
    double* k4
    double* tmp
    double* g
    double* u
    double* gF


cdef int _work_alloc(Work* w, int D) noexcept nogil:
    cdef double* base = <double*> malloc(8 * D * sizeof(double))
    if base == NULL:
        return -1
    w.k1 = base
    w.k2 = base + D
    w.k3 = base + 2 * D
    w.k4 = base + 3 * D
    w.tmp = base + 4 * D
    w.g = base + 5 * D
    w.u = base + 6 * D
    w.gF = base + 7 * D
    return 0


cdef void _rk4(Field* f, int d, double* x, double* out, double h, Work* w) noexcept nogil:
    cdef int i, D = f.D
    _vfield(f, d, x, w.k1, w.g, w.u, w.gF)
    for i in range(D):
        w.tmp[i] = x[i] + 0.5 * h * w.k1[i]
    _vfield(f, d, w.tmp, w.k2, w.g, w.u, w.gF)
    for i in range(D):
        w.tmp[i] = x[i] + 0.5 * h * w.k2[i]
    _vfield(f, d, w.tmp, w.k3, w.g, w.u, w.gF)
    for i in range(D):
        w.tmp[i] = x[i] + h * w.k3[i]
    _vfield(f, d, w.tmp, w.k4, w.g, w.u, w.gF)
    for i in range(D):
        out[i] = x[i] + (h / 6.0) * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i])


cdef inline int _finite(double* x, int D) noexcept nogil:
    cdef int i
    for i in range(D):
        if not isfinite(x[i]):
            return 0
    return 1


def _points(P, int D):
    P = np.array(P, dtype=np.float64, ndmin=2, order="C", copy=True)
    if P.shape[1] != D:
        raise ValueError(f"points must have {D} columns, got {P.shape[1]}")
    return P


def field_value(params, P):
    cdef _Params prm = _Params(params)
    cdef int D = prm.f.D
    cdef double[:, ::1] X = _points(P, D)
    cdef Py_ssize_t B = X.shape[0], k
    out = np.empty(B)
    cdef double[::1] o = out
    cdef double[::1] u = np.empty(D)
    with nogil:
        for k in range(B):
            o[k] = _value(&prm.f, &X[k, 0], &u[0])
    return out


def field_gradient(params, P):
    cdef _Params prm = _Params(params)
    cdef int D = prm.f.D
    cdef double[:, ::1] X = _points(P, D)
    cdef Py_ssize_t B = X.shape[0], k
    out = np.empty((B, D))
    cdef double[:, ::1] o = out
    cdef double[::1] u = np.empty(D)
    cdef double[::1] gF = np.empty(D)
    with nogil:
        for k in range(B):
            _gradient(&prm.f, &X[k, 0], &o[k, 0], &u[0], &gF[0])
    return out


def vector_field(params, int d, P):
    cdef _Params prm = _Params(params)
    cdef int D = prm.f.D
    cdef double[:, ::1] X = _points(P, D)
    cdef Py_ssize_t B = X.shape[0], k
    out = np.empty((B, D))
    cdef double[:, ::1] o = out
    cdef double[::1] g = np.empty(D)
    cdef double[::1] u = np.empty(D)
    cdef double[::1] gF = np.empty(D)
    with nogil:
        for k in range(B):
            _vfield(&prm.f, d, &X[k, 0], &o[k, 0], &g[0], &u[0], &gF[0])
    return out


def rk4_integrate(params, int d, X0, double h, long nsteps, bint track_energy=True):
    cdef _Params prm = _Params(params)
    cdef int D = prm.f.D
    X = _points(X0, D)
    cdef double[:, ::1] Xv = X
    cdef Py_ssize_t B = X.shape[0], k, s, i
    drift = np.zeros(B)
    cdef double[::1] dr = drift
    cdef double[::1] nxt = np.empty(D)
    cdef double H0, dh
    cdef Work w
    if _work_alloc(&w, D) != 0:
        raise MemoryError()
    try:
        with nogil:
            for k in range(B):
                if track_energy:
                    H0 = _value(&prm.f, &Xv[k, 0], w.u)
                for s in range(nsteps):
                    _rk4(&prm.f, d, &Xv[k, 0], &nxt[0], h, &w)
                    for i in range(D):
                        Xv[k, i] = nxt[i]
                    if not _finite(&Xv[k, 0], D):
                        break
                    if track_energy:
                        dh = fabs(_value(&prm.f, &Xv[k, 0], w.u) - H0)
                        if dh > dr[k]:
                            dr[k] = dh
    finally:
        free(w.k1)
    return X, drift


def rk4_trajectory(params, int d, X0, double h, long nsteps):
    cdef _Params prm = _Params(params)
    cdef int D = prm.f.D
    X = _points(X0, D)
    cdef Py_ssize_t B = X.shape[0], k, s
    out = np.empty((nsteps + 1, B, D))
    out[0] = X
    cdef double[:, :, ::1] o = out
    cdef Work w
    if _work_alloc(&w, D) != 0:
        raise MemoryError()
    try:
        with nogil:
            for k in range(B):
                for s in range(nsteps):
                    _rk4(&prm.f, d, &o[s, k, 0], &o[s + 1, k, 0], h, &w)
    finally:
        free(w.k1)
    return out


def rk4_section(params, int d, X0, int slot, double level, double h, double t_max, double tol, int max_bisect):
    cdef _Params prm = _Params(params)
    cdef int D = prm.f.D
    X = _points(X0, D)
    cdef double[:, ::1] Xv = X
    cdef Py_ssize_t B = X.shape[0], k, s, i, it
    cdef long nmax = <long> ceil(t_max / h)
    hit = X.copy()
    tau = np.zeros(B)
    status = np.zeros(B, dtype=np.int64)
    cdef double[:, ::1] hv = hit
    cdef double[::1] tv = tau
    cdef long long[::1] sv = status
    cdef double[::1] cur = np.empty(D)
    cdef double[::1] nxt = np.empty(D)
    cdef double lo, hi, mid, r
    cdef int crossed
    cdef Work w
    if _work_alloc(&w, D) != 0:
        raise MemoryError()
    try:
        with nogil:
            for k in range(B):
                if Xv[k, slot] == level:
                    sv[k] = 1
                    continue
                if Xv[k, slot] > level:
                    # past the level: no crossing from below (status stays 0)
                    continue
                for i in range(D):
                    cur[i] = Xv[k, i]
                crossed = 0
                for s in range(nmax):
                    _rk4(&prm.f, d, &cur[0], &nxt[0], h, &w)
                    if not _finite(&nxt[0], D):
                        sv[k] = -1
                        break
                    if nxt[slot] - level >= 0.0:
                        crossed = 1
                        break
                    for i in range(D):
                        cur[i] = nxt[i]
                if not crossed:
                    continue
                lo = 0.0
                hi = h
                mid = h
                for it in range(max_bisect):
                    mid = 0.5 * (lo + hi)
                    _rk4(&prm.f, d, &cur[0], &nxt[0], mid, &w)
                    r = nxt[slot] - level
                    if r >= 0.0:
                        hi = mid
                    else:
                        lo = mid
                    if fabs(r) <= tol:
                        break
                for i in range(D):
                    hv[k, i] = nxt[i]
                tv[k] = s * h + mid
                sv[k] = 1
    finally:
        free(w.k1)
    return hit, tau, status
