"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same argument order; the
package picks one at import time (see ``egocircles._backend``).
"""
import math
from collections import deque

import numpy as np

EPS = 1e-12


def max_flow(n, tails, heads, caps, source, sink):
    """Dinic's algorithm on a graph given as parallel arc arrays.

    Returns ``(flow_value, reachable)`` where ``reachable`` marks nodes that
    can still be reached from ``source`` in the final residual graph (the
    source side of the minimal minimum cut).
    """
    m = len(tails)
    to = [0] * (2 * m)
    cap = [0.0] * (2 * m)
    adj = [[] for _ in range(n)]
    for a in range(m):
        u, v, c = int(tails[a]), int(heads[a]), float(caps[a])
        to[2 * a], cap[2 * a] = v, c
        to[2 * a + 1], cap[2 * a + 1] = u, 0.0
        adj[u].append(2 * a)
        adj[v].append(2 * a + 1)
    scale = max([abs(c) for c in cap] + [1.0])
    eps = EPS * scale

    flow = 0.0
    while True:
        level = [-1] * n
        level[source] = 0
        q = deque([source])
        while q:
            u = q.popleft()
            for a in adj[u]:
                if cap[a] > eps and level[to[a]] < 0:
                    level[to[a]] = level[u] + 1
                    q.append(to[a])
        if level[sink] < 0:
            break
        it = [0] * n
        while True:
            # iterative DFS for one augmenting path in the level graph
            path = []
            u = source
            while u != sink:
                advanced = False
                while it[u] < len(adj[u]):
                    a = adj[u][it[u]]
                    v = to[a]
                    if cap[a] > eps and level[v] == level[u] + 1:
                        path.append(a)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == source:
                        break
                    level[u] = -1
                    a = path.pop()
                    u = to[a ^ 1]
                    it[u] += 1
            if u != sink:
                break
            push = min(cap[a] for a in path)
            for a in path:
                cap[a] -= push
                cap[a ^ 1] += push
            flow += push

    reach = np.zeros(n, dtype=bool)
    reach[source] = True
    q = deque([source])
    while q:
        u = q.popleft()
        for a in adj[u]:
            v = to[a]
            if cap[a] > eps and not reach[v]:
                reach[v] = True
                q.append(v)
    return flow, reach


def icm(labels, unary, nbr_ptr, nbr_idx, nbr_w, order):
    """Greedy single-node flips for a maximisation energy until no flip helps.

    The energy is ``sum_i unary[i, x_i] + sum_{ij} w_ij x_i x_j`` (neighbour
    lists hold each pair in both directions).  ``labels`` is updated in place;
    returns the number of flips.
    """
    flips = 0
    changed = True
    while changed:
        changed = False
        for i in order:
            i = int(i)
            gain = unary[i, 1] - unary[i, 0]
            for a in range(nbr_ptr[i], nbr_ptr[i + 1]):
                if labels[nbr_idx[a]]:
                    gain += nbr_w[a]
            want = 1 if gain > 0 else 0
            if gain != 0 and want != labels[i]:
                labels[i] = want
                flips += 1
                changed = True
    return flips


def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _pair_phi(ma, fa, mb, fb, inner, alphas):
    both = ma & mb
    s = 0.0
    for k in range(alphas.shape[0]):
        if (both >> k) & 1:
            s += inner[k, fa, fb]
        else:
            s -= alphas[k] * inner[k, fa, fb]
    return s


def marginals(x, k, masks, ftype, type_keys, type_counts, n_ftypes, inner, alphas,
              nbr_ptr, nbr_idx, factor):
    """Collapsed ``(l0, l1)`` for node ``x`` taking label 0 / 1 in circle ``k``."""
    mx = int(masks[x])
    fx = int(ftype[x])
    own_key = mx * n_ftypes + fx
    m0 = mx & ~(1 << k)
    m1 = mx | (1 << k)
    l0 = 0.0
    l1 = 0.0
    for t in range(len(type_keys)):
        key = int(type_keys[t])
        n = int(type_counts[t])
        if key == own_key:
            n -= 1
        if n <= 0:
            continue
        mt, ft = divmod(key, n_ftypes)
        l0 -= n * _softplus(_pair_phi(m0, fx, mt, ft, inner, alphas))
        l1 -= n * _softplus(_pair_phi(m1, fx, mt, ft, inner, alphas))
    l0 *= factor
    l1 *= factor
    for a in range(nbr_ptr[x], nbr_ptr[x + 1]):
        y = int(nbr_idx[a])
        my, fy = int(masks[y]), int(ftype[y])
        l0 += _pair_phi(m0, fx, my, fy, inner, alphas)
        l1 += _pair_phi(m1, fx, my, fy, inner, alphas)
    return l0, l1


def sweep(nodes, circles, uniforms, temperature, masks, ftype, type_keys, type_counts,
          n_ftypes, inner, alphas, nbr_ptr, nbr_idx, factor):
    """One annealed pass over the given ``(node, circle)`` update sequence.

    ``masks`` is updated in place.  Returns ``(type_keys, type_counts, flips)``
    with zero-count types dropped.
    """
    table = {int(key): int(c) for key, c in zip(type_keys, type_counts)}
    keys = list(table)
    counts = [table[key] for key in keys]
    pos = {key: i for i, key in enumerate(keys)}
    flips = 0
    for step in range(len(nodes)):
        x = int(nodes[step])
        k = int(circles[step])
        l0, l1 = marginals(x, k, masks, ftype, keys, counts, n_ftypes, inner, alphas,
                           nbr_ptr, nbr_idx, factor)
        diff = (l1 - l0) / temperature
        new = 1 if (diff >= 0 or uniforms[step] < math.exp(diff)) else 0
        mx = int(masks[x])
        if ((mx >> k) & 1) == new:
            continue
        flips += 1
        old_key = mx * n_ftypes + int(ftype[x])
        counts[pos[old_key]] -= 1
        mx = (mx | (1 << k)) if new else (mx & ~(1 << k))
        masks[x] = mx
        new_key = mx * n_ftypes + int(ftype[x])
        if new_key in pos:
            counts[pos[new_key]] += 1
        else:
            pos[new_key] = len(keys)
            keys.append(new_key)
            counts.append(1)
    out_keys = np.array([key for key, c in zip(keys, counts) if c > 0], dtype=np.int64)
    out_counts = np.array([c for c in counts if c > 0], dtype=np.int64)
    return out_keys, out_counts, flips
