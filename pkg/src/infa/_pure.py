"""Pure NumPy implementation of the hot loops.

``_core.pyx`` mirrors every function here statement for statement, including
the random-draw decoding, so both backends visit the same coordinates in the
same order. Arrays are updated in place:

    xi   (S, L)  residuals, S = N*M segments
    D    (S, K)  memberships
    P    (K, L)  patterns
"""
from __future__ import annotations

import numpy as np

PAIR_EPS = 1e-12


def pair_step(xi_row, d_row, P, k, w):
    """Optimal exchange of membership mass between patterns ``k`` and ``w``.

    Returns False when the patterns coincide and nothing was changed.
    """
    diff = P[w] - P[k]
    den = float(diff @ diff)
    if den < PAIR_EPS:
        return False
    dk = d_row[k]
    dw = d_row[w]
    q = dk + dw
    z = -float((xi_row - dk * diff) @ diff) / den
    z = max(0.0, min(q, z))
    xi_row -= (z - dk) * P[k]
    xi_row -= (q - z - dw) * P[w]
    d_row[k] = z
    d_row[w] = q - z
    return True


def pattern_step(xi, D, P, lam, k, l):
    """Ridge-optimal value of ``P[k, l]`` with the rest held fixed."""
    dcol = D[:, k]
    old = P[k, l]
    den = lam + float(dcol @ dcol)
    if den <= 0.0:
        return False
    new = float((xi[:, l] + dcol * old) @ dcol) / den
    xi[:, l] -= (new - old) * dcol
    P[k, l] = new
    return True


def _build_perm(d_row, perm, pos):
    K = d_row.shape[0]
    z = 0
    for k in range(K):
        if d_row[k] > 0.0:
            perm[z] = k
            z += 1
    t = z
    for k in range(K):
        if not d_row[k] > 0.0:
            perm[t] = k
            t += 1
    for i in range(K):
        pos[perm[i]] = i
    return z


def _swap(perm, pos, a, b):
    x = perm[a]
    y = perm[b]
    perm[a] = y
    perm[b] = x
    pos[y] = a
    pos[x] = b


def _refresh(d_row, perm, pos, z, k):
    if d_row[k] > 0.0:
        if pos[k] >= z:
            _swap(perm, pos, pos[k], z)
            z += 1
    elif pos[k] < z:
        _swap(perm, pos, pos[k], z - 1)
        z -= 1
    return z


def decode_pair(u, z, K, perm):
    """Map ``u`` in [0, 1) to an ordered pair (k, w), k != w, uniformly over
    all pairs with at least one nonzero member.

    ``perm[:z]`` lists the nonzero patterns, ``perm[z:]`` the zero ones.
    """
    n_first = z * (K - 1)
    total = n_first + (K - z) * z
    t = int(u * total)
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
    return k, w


def membership_sweep(xi, D, P, order, rand):
    """Pairwise membership updates for segments ``order`` (visit order);
    ``rand[v]`` holds the uniform draws for the v-th visited segment."""
    K = D.shape[1]
    perm = [0] * K
    pos = [0] * K
    n_draws = rand.shape[1]
    for v in range(order.shape[0]):
        s = order[v]
        d_row = D[s]
        xi_row = xi[s]
        z = _build_perm(d_row, perm, pos)
        if z == 0:
            continue
        for r in range(n_draws):
            k, w = decode_pair(rand[v, r], z, K, perm)
            if pair_step(xi_row, d_row, P, k, w):
                z = _refresh(d_row, perm, pos, z, k)
                z = _refresh(d_row, perm, pos, z, w)


def pattern_sweep(xi, D, P, lam, order):
    """Update every pattern point once; ``order`` holds flat ``k * L + l``."""
    L = P.shape[1]
    for v in range(order.shape[0]):
        k, l = divmod(int(order[v]), L)
        pattern_step(xi, D, P, lam, k, l)


def dtw(x, y):
    """Unconstrained DTW with squared point costs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = x.shape[0], y.shape[0]
    cost = (x[:, None] - y[None, :]) ** 2
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(n):
        cur = np.empty(m + 1)
        cur[0] = np.inf
        c = cost[i]
        for j in range(m):
            best = prev[j]
            if prev[j + 1] < best:
                best = prev[j + 1]
            if cur[j] < best:
                best = cur[j]
            cur[j + 1] = c[j] + best
        prev = cur
    return float(prev[m])
