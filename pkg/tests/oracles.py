"""Independent, deliberately naive reference implementations used as test oracles."""
import math

import numpy as np


def naive_hard_lp(adj, y, T):
    y = list(y)
    n = len(y)
    for _ in range(T):
        nxt = []
        for i in range(n):
            nb = [j for j in range(n) if adj[i, j]]
            if not nb:
                nxt.append(y[i])
                continue
            counts = {}
            for j in nb:
                counts[y[j]] = counts.get(y[j], 0) + 1
            best = max(counts.values())
            nxt.append(min(c for c, k in counts.items() if k == best))
        y = nxt
    return y


def naive_cluster(c_b, s_h, z, deg, candidates, available, budget, n_k):
    """Step-by-step greedy growth written without shared helpers."""
    pool_all = [v for v in candidates if available[v]]
    seed = min(pool_all, key=lambda v: (-s_h[v], v))
    c_u = c_b[seed]
    members = [seed]
    pool = [v for v in pool_all if c_b[v] == c_u and v != seed]
    while len(members) < budget and pool:
        margins = {}
        for j in pool:
            agg = [0.0] * z.shape[1]
            for i in members + [j]:
                for c in range(z.shape[1]):
                    agg[c] += z[i, c] / math.sqrt(deg[i] + 1)
            agg = [a / math.sqrt(budget) for a in agg]
            margins[j] = agg[c_u] - max(agg[c] for c in range(len(agg)) if c != c_u)
        kept = sorted(pool, key=lambda j: (-margins[j], j))[:n_k]
        pick = min(kept, key=lambda j: (-s_h[j], j))
        members.append(pick)
        pool.remove(pick)
    return c_u, members


def dense_smooth(adj, z0, alpha):
    """Fixed point of label propagation by a dense linear solve."""
    a = np.asarray(adj, dtype=float)
    d = a.sum(axis=1)
    inv = np.where(d > 0, 1 / np.sqrt(np.where(d > 0, d, 1)), 0.0)
    s = inv[:, None] * a * inv[None, :]
    return np.linalg.solve(np.eye(len(a)) - alpha * s, (1 - alpha) * np.asarray(z0))


def finite_difference_grad(f, w, eps):
    """Central differences of scalar ``f()`` with respect to every entry of ``w`` (modified in place)."""
    out = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        old = w[idx]
        w[idx] = old + eps
        hi = f()
        w[idx] = old - eps
        lo = f()
        w[idx] = old
        out[idx] = (hi - lo) / (2 * eps)
    return out
