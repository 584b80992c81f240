"""Pure-Python/numpy kernels. Reference semantics for ``_ckernels``.

Both modules expose the same functions with the same argument order; the
compiled one is preferred at import time (see ``_backend``).
"""

from collections import deque

import numpy as np

from .simkit import batch_similarity_and_grad

KIND_NAMES = {0: "combined", 1: "correlation", 2: "cosine"}

# Solver status codes.
CONVERGED = 0
MAX_ITERS = 1
NONFINITE = 2

SUM_TOL = 1e-14
LABEL_MARGIN = 1e-12


def bfs_capped(indptr, indices, source, cap):
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        if du >= cap:
            continue
        for w in indices[indptr[u]:indptr[u + 1]]:
            if dist[w] < 0:
                dist[w] = du + 1
                queue.append(w)
    return dist


def gap_value_grad(z, P, Q, q_const, kind):
    """Gap ``sum_P sim(z, .) - sum_Q sim(z, .) - q_const`` and its gradient in ``z``."""
    name = KIND_NAMES[kind]
    sp, gp = batch_similarity_and_grad(z, P, name)
    sq, gq = batch_similarity_and_grad(z, Q, name)
    return float(sp.sum() - sq.sum() - q_const), gp - gq


def constraint_check(s, v, theta, l1, label):
    s = np.array(s, dtype=float)
    A = len(s)
    lo = -v
    hi = 1.0 - v

    # distribution: zero-sum shift then box clamp, re-shifting the free
    # coordinates until the sum is zero (at most A rounds).
    s -= s.mean()
    np.clip(s, lo, hi, out=s)
    for _ in range(A):
        r = s.sum()
        if abs(r) <= SUM_TOL:
            break
        free = s > lo if r > 0 else s < hi
        s[free] -= r / np.count_nonzero(free)
        np.clip(s, lo, hi, out=s)

    # distortion budget: radial scaling
    norm = np.abs(s).sum() if l1 else np.sqrt(np.dot(s, s))
    if norm > theta:
        if theta > 0:
            s *= theta / norm
        else:
            s[:] = 0.0

    # label: move mass from any class that caught up with the original top class
    C = label
    for a in range(A):
        if a == C:
            continue
        gap = (v[C] + s[C]) - (v[a] + s[a])
        if gap <= 0:
            avg = 0.5 * (v[C] + s[C] + v[a] + s[a])
            d = -0.5 * gap + min(LABEL_MARGIN, 0.5 * avg)
            s[a] -= d
            s[C] += d
    return s


def solve_node(v, P, Q, q_const, kind, theta, alpha, beta, eps, max_iters, l1):
    """Lagrangian gradient descent with projected iterates for one node.

    Returns ``(s, d0, d_best, iters, lam, mu, nu, status)``; ``s`` is the best
    feasible iterate seen (the zero vector included).
    """
    v = np.asarray(v, dtype=float)
    A = len(v)
    C = int(np.argmax(v))
    s = np.zeros(A)
    lam = np.zeros(A)
    mu = 0.0
    nu = 0.0
    d, g = gap_value_grad(v, P, Q, q_const, kind)
    d0 = d
    best_s = s.copy()
    best_d = d0
    if theta <= 0:
        return best_s, d0, d0, 0, lam, mu, nu, CONVERGED
    status = MAX_ITERS
    iters = 0
    others = np.arange(A) != C
    for k in range(max_iters):
        if not (np.isfinite(d) and np.all(np.isfinite(g))):
            status = NONFINITE
            break
        grad = g.copy()
        grad[others] += lam[others]
        grad[C] -= lam[others].sum()
        grad += mu
        if l1:
            grad += nu * np.sign(s)
        else:
            ns = np.sqrt(np.dot(s, s))
            if ns > 0:
                grad += nu * s / ns
        raw = s - alpha * grad
        # multipliers see the unprojected step; the projected one is feasible by construction
        viol = v + raw - v[C] - raw[C]
        lam[others] = np.maximum(0.0, lam[others] + beta * viol[others])
        norm = np.abs(raw).sum() if l1 else np.sqrt(np.dot(raw, raw))
        nu = max(0.0, nu + beta * (norm - theta))
        mu = mu + beta * raw.sum()
        s_new = constraint_check(raw, v, theta, l1, C)
        diff = s_new - s
        step = np.sqrt(np.dot(diff, diff))
        s = s_new
        iters = k + 1
        d, g = gap_value_grad(v + s, P, Q, q_const, kind)
        if d < best_d:
            best_d = d
            best_s = s.copy()
        if step < eps:
            status = CONVERGED
            break
    if status == NONFINITE:
        return np.zeros(A), d0, d0, iters, lam, mu, nu, status
    return best_s, d0, best_d, iters, lam, mu, nu, status
