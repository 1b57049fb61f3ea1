# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Same contracts and draw decoding as ``_pure``."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double PAIR_EPS = 1e-12


cdef inline bint _pair_step(double[:, ::1] xi, double[:, ::1] D, double[:, ::1] P,
                            Py_ssize_t s, Py_ssize_t k, Py_ssize_t w) noexcept nogil:
    cdef Py_ssize_t L = P.shape[1]
    cdef Py_ssize_t l
    cdef double den = 0.0, num = 0.0, diff, dk, dw, q, z, ck, cw
    for l in range(L):
        diff = P[w, l] - P[k, l]
        den += diff * diff
    if den < PAIR_EPS:
        return False
    dk = D[s, k]
    dw = D[s, w]
    q = dk + dw
    for l in range(L):
        diff = P[w, l] - P[k, l]
        num += (xi[s, l] - dk * diff) * diff
    z = -num / den
    if z > q:
        z = q
    if z < 0.0:
        z = 0.0
    ck = z - dk
    cw = q - z - dw
    for l in range(L):
        xi[s, l] -= ck * P[k, l]
    for l in range(L):
        xi[s, l] -= cw * P[w, l]
    D[s, k] = z
    D[s, w] = q - z
    return True


cdef inline Py_ssize_t _build_perm(double[:, ::1] D, Py_ssize_t s,
                                   Py_ssize_t* perm, Py_ssize_t* pos) noexcept nogil:
    cdef Py_ssize_t K = D.shape[1]
    cdef Py_ssize_t k, i, z = 0, t
    for k in range(K):
        if D[s, k] > 0.0:
            perm[z] = k
            z += 1
    t = z
    for k in range(K):
        if not D[s, k] > 0.0:
            perm[t] = k
            t += 1
    for i in range(K):
        pos[perm[i]] = i
    return z


cdef inline void _swap(Py_ssize_t* perm, Py_ssize_t* pos, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t x = perm[a], y = perm[b]
    perm[a] = y
    perm[b] = x
    pos[y] = a
    pos[x] = b


cdef inline Py_ssize_t _refresh(double[:, ::1] D, Py_ssize_t s, Py_ssize_t* perm,
                                Py_ssize_t* pos, Py_ssize_t z, Py_ssize_t k) noexcept nogil:
    if D[s, k] > 0.0:
        if pos[k] >= z:
            _swap(perm, pos, pos[k], z)
            z += 1
    elif pos[k] < z:
        _swap(perm, pos, pos[k], z - 1)
        z -= 1
    return z


def membership_sweep(double[:, ::1] xi, double[:, ::1] D, double[:, ::1] P,
                     const cnp.int64_t[::1] order, const double[:, ::1] rand):
    cdef Py_ssize_t K = D.shape[1]
    cdef Py_ssize_t n_draws = rand.shape[1]
    cdef Py_ssize_t v, r, s, z, k, w, n_first, total, t
    cdef Py_ssize_t* perm = <Py_ssize_t*> malloc(2 * K * sizeof(Py_ssize_t))
    cdef Py_ssize_t* pos
    if perm == NULL:
        raise MemoryError()
    pos = perm + K
    try:
        with nogil:
            for v in range(order.shape[0]):
                s = order[v]
                z = _build_perm(D, s, perm, pos)
                if z == 0:
                    continue
                for r in range(n_draws):
                    n_first = z * (K - 1)
                    total = n_first + (K - z) * z
                    t = <Py_ssize_t> (rand[v, r] * <double> total)
                    if t >= total:
                        t = total - 1
                    if t < n_first:
                        k = perm[t // (K - 1)]
                        w = t % (K - 1)
                        if w >= k:
                            w += 1
                    else:
                        t -= n_first
                        k = perm[z + t // z]
                        w = perm[t % z]
                    if _pair_step(xi, D, P, s, k, w):
                        z = _refresh(D, s, perm, pos, z, k)
                        z = _refresh(D, s, perm, pos, z, w)
    finally:
        free(perm)


def pattern_sweep(double[:, ::1] xi, double[:, ::1] D, double[:, ::1] P,
                  double lam, const cnp.int64_t[::1] order):
    cdef Py_ssize_t S = D.shape[0]
    cdef Py_ssize_t L = P.shape[1]
    cdef Py_ssize_t v, s, k, l
    cdef double num, den, d, old, new, step
    with nogil:
        for v in range(order.shape[0]):
            k = order[v] // L
            l = order[v] % L
            old = P[k, l]
            den = 0.0
            num = 0.0
            for s in range(S):
                d = D[s, k]
                if d != 0.0:
                    den += d * d
                    num += (xi[s, l] + d * old) * d
            den = lam + den
            if den <= 0.0:
                continue
            new = num / den
            step = new - old
            for s in range(S):
                d = D[s, k]
                if d != 0.0:
                    xi[s, l] -= step * d
            P[k, l] = new


def dtw(x, y):
    cdef const double[::1] a = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j, p, c
    cdef double[:, ::1] buf = np.empty((2, m + 1))
    cdef double best, e
    cdef double inf = np.inf
    buf[0, 0] = 0.0
    for j in range(1, m + 1):
        buf[0, j] = inf
    with nogil:
        for i in range(n):
            p = i & 1
            c = 1 - p
            buf[c, 0] = inf
            for j in range(m):
                best = buf[p, j]
                if buf[p, j + 1] < best:
                    best = buf[p, j + 1]
                if buf[c, j] < best:
                    best = buf[c, j]
                e = a[i] - b[j]
                buf[c, j + 1] = e * e + best
    return buf[n & 1, m]
