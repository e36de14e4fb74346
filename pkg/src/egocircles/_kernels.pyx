# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled kernels: max-flow, ICM and the collapsed MCMC sweep.

Signatures and semantics mirror ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs
from libcpp.vector cimport vector
from libcpp.unordered_map cimport unordered_map

cnp.import_array()

cdef double EPS = 1e-12


def max_flow(Py_ssize_t n, tails, heads, caps, Py_ssize_t source, Py_ssize_t sink):
    cdef cnp.int64_t[::1] tl = np.ascontiguousarray(tails, dtype=np.int64)
    cdef cnp.int64_t[::1] hd = np.ascontiguousarray(heads, dtype=np.int64)
    cdef double[::1] cp = np.ascontiguousarray(caps, dtype=np.float64)
    cdef Py_ssize_t m = tl.shape[0]
    cdef Py_ssize_t a, u, v, i, head, tail_q, depth
    cdef double scale = 1.0, eps, push, flow = 0.0

    # CSR adjacency over 2m residual arcs
    cdef cnp.int64_t[::1] to = np.empty(2 * m, dtype=np.int64)
    cdef double[::1] cap = np.empty(2 * m, dtype=np.float64)
    cdef cnp.int64_t[::1] deg = np.zeros(n + 1, dtype=np.int64)
    for a in range(m):
        to[2 * a] = hd[a]
        to[2 * a + 1] = tl[a]
        cap[2 * a] = cp[a]
        cap[2 * a + 1] = 0.0
        if fabs(cp[a]) > scale:
            scale = fabs(cp[a])
        deg[tl[a] + 1] += 1
        deg[hd[a] + 1] += 1
    eps = EPS * scale
    for i in range(n):
        deg[i + 1] += deg[i]
    cdef cnp.int64_t[::1] adj = np.empty(2 * m, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = np.array(deg[:n], dtype=np.int64)
    for a in range(m):
        adj[fill[tl[a]]] = 2 * a
        fill[tl[a]] += 1
        adj[fill[hd[a]]] = 2 * a + 1
        fill[hd[a]] += 1

    cdef cnp.int64_t[::1] level = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] it = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] path = np.empty(n + 1, dtype=np.int64)
    cdef bint advanced

    while True:
        for i in range(n):
            level[i] = -1
        level[source] = 0
        head = 0
        tail_q = 0
        queue[tail_q] = source
        tail_q += 1
        while head < tail_q:
            u = queue[head]
            head += 1
            for i in range(deg[u], deg[u + 1]):
                a = adj[i]
                v = to[a]
                if cap[a] > eps and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[tail_q] = v
                    tail_q += 1
        if level[sink] < 0:
            break
        for i in range(n):
            it[i] = deg[i]
        while True:
            depth = 0
            u = source
            while u != sink:
                advanced = False
                while it[u] < deg[u + 1]:
                    a = adj[it[u]]
                    v = to[a]
                    if cap[a] > eps and level[v] == level[u] + 1:
                        path[depth] = a
                        depth += 1
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == source:
                        break
                    level[u] = -1
                    depth -= 1
                    a = path[depth]
                    u = to[a ^ 1]
                    it[u] += 1
            if u != sink:
                break
            push = cap[path[0]]
            for i in range(1, depth):
                if cap[path[i]] < push:
                    push = cap[path[i]]
            for i in range(depth):
                cap[path[i]] -= push
                cap[path[i] ^ 1] += push
            flow += push

    reach_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] reach = reach_arr
    reach[source] = 1
    head = 0
    tail_q = 0
    queue[tail_q] = source
    tail_q += 1
    while head < tail_q:
        u = queue[head]
        head += 1
        for i in range(deg[u], deg[u + 1]):
            a = adj[i]
            v = to[a]
            if cap[a] > eps and not reach[v]:
                reach[v] = 1
                queue[tail_q] = v
                tail_q += 1
    return flow, reach_arr.astype(bool)


def icm(labels, unary, nbr_ptr, nbr_idx, nbr_w, order):
    cdef cnp.int64_t[::1] lab = labels
    cdef double[:, ::1] un = np.ascontiguousarray(unary, dtype=np.float64)
    cdef cnp.int64_t[::1] ptr = np.ascontiguousarray(nbr_ptr, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = np.ascontiguousarray(nbr_idx, dtype=np.int64)
    cdef double[::1] w = np.ascontiguousarray(nbr_w, dtype=np.float64)
    cdef cnp.int64_t[::1] ordr = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t flips = 0, s, i, a
    cdef double gain
    cdef int want
    cdef bint changed = True
    while changed:
        changed = False
        for s in range(ordr.shape[0]):
            i = ordr[s]
            gain = un[i, 1] - un[i, 0]
            for a in range(ptr[i], ptr[i + 1]):
                if lab[idx[a]]:
                    gain += w[a]
            want = 1 if gain > 0 else 0
            if gain != 0 and want != lab[i]:
                lab[i] = want
                flips += 1
                changed = True
    return flips


cdef inline double softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double pair_phi(long long ma, long long fa, long long mb, long long fb,
                            double[:, :, ::1] inner, double[::1] alphas) nogil:
    cdef long long both = ma & mb
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(alphas.shape[0]):
        if (both >> k) & 1:
            s += inner[k, fa, fb]
        else:
            s -= alphas[k] * inner[k, fa, fb]
    return s


cdef void _marginals(long long x, int k, cnp.int64_t[::1] masks, cnp.int64_t[::1] ftype,
                     vector[long long]& keys, vector[long long]& counts, long long n_ftypes,
                     double[:, :, ::1] inner, double[::1] alphas,
                     cnp.int64_t[::1] nbr_ptr, cnp.int64_t[::1] nbr_idx, double factor,
                     double* out0, double* out1) nogil:
    cdef long long mx = masks[x]
    cdef long long fx = ftype[x]
    cdef long long own_key = mx * n_ftypes + fx
    cdef long long bit = (<long long>1) << k
    cdef long long m0 = mx & ~bit
    cdef long long m1 = mx | bit
    cdef double l0 = 0.0, l1 = 0.0
    cdef long long n, key, mt, ft, y
    cdef size_t t
    cdef Py_ssize_t a
    for t in range(keys.size()):
        key = keys[t]
        n = counts[t]
        if key == own_key:
            n -= 1
        if n <= 0:
            continue
        mt = key // n_ftypes
        ft = key % n_ftypes
        l0 -= n * softplus(pair_phi(m0, fx, mt, ft, inner, alphas))
        l1 -= n * softplus(pair_phi(m1, fx, mt, ft, inner, alphas))
    l0 *= factor
    l1 *= factor
    for a in range(nbr_ptr[x], nbr_ptr[x + 1]):
        y = nbr_idx[a]
        l0 += pair_phi(m0, fx, masks[y], ftype[y], inner, alphas)
        l1 += pair_phi(m1, fx, masks[y], ftype[y], inner, alphas)
    out0[0] = l0
    out1[0] = l1


def marginals(long long x, int k, masks, ftype, type_keys, type_counts, long long n_ftypes,
              inner, alphas, nbr_ptr, nbr_idx, double factor):
    cdef vector[long long] keys
    cdef vector[long long] counts
    for key in type_keys:
        keys.push_back(key)
    for c in type_counts:
        counts.push_back(c)
    cdef double l0, l1
    _marginals(x, k, np.ascontiguousarray(masks, dtype=np.int64),
               np.ascontiguousarray(ftype, dtype=np.int64), keys, counts, n_ftypes,
               np.ascontiguousarray(inner, dtype=np.float64),
               np.ascontiguousarray(alphas, dtype=np.float64),
               np.ascontiguousarray(nbr_ptr, dtype=np.int64),
               np.ascontiguousarray(nbr_idx, dtype=np.int64), factor, &l0, &l1)
    return l0, l1


def sweep(nodes, circles, uniforms, double temperature, masks, ftype, type_keys, type_counts,
          long long n_ftypes, inner, alphas, nbr_ptr, nbr_idx, double factor):
    cdef cnp.int64_t[::1] nd = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef cnp.int64_t[::1] cc = np.ascontiguousarray(circles, dtype=np.int64)
    cdef double[::1] uu = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef cnp.int64_t[::1] mk = masks
    cdef cnp.int64_t[::1] ft = np.ascontiguousarray(ftype, dtype=np.int64)
    cdef double[:, :, ::1] inn = np.ascontiguousarray(inner, dtype=np.float64)
    cdef double[::1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef cnp.int64_t[::1] ptr = np.ascontiguousarray(nbr_ptr, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = np.ascontiguousarray(nbr_idx, dtype=np.int64)
    cdef vector[long long] keys
    cdef vector[long long] counts
    cdef unordered_map[long long, size_t] pos
    cdef long long key, mx, x, new_key, old_key
    cdef int k, new, cur
    cdef Py_ssize_t step, flips = 0
    cdef double l0, l1, diff
    for key, c in zip(type_keys, type_counts):
        pos[key] = keys.size()
        keys.push_back(key)
        counts.push_back(c)
    with nogil:
        for step in range(nd.shape[0]):
            x = nd[step]
            k = <int>cc[step]
            _marginals(x, k, mk, ft, keys, counts, n_ftypes, inn, al, ptr, idx, factor, &l0, &l1)
            diff = (l1 - l0) / temperature
            new = 1 if (diff >= 0 or uu[step] < exp(diff)) else 0
            mx = mk[x]
            cur = <int>((mx >> k) & 1)
            if cur == new:
                continue
            flips += 1
            old_key = mx * n_ftypes + ft[x]
            counts[pos[old_key]] -= 1
            if new:
                mx = mx | ((<long long>1) << k)
            else:
                mx = mx & ~((<long long>1) << k)
            mk[x] = mx
            new_key = mx * n_ftypes + ft[x]
            if pos.count(new_key):
                counts[pos[new_key]] += 1
            else:
                pos[new_key] = keys.size()
                keys.push_back(new_key)
                counts.push_back(1)
    out_keys = np.array([keys[i] for i in range(keys.size()) if counts[i] > 0], dtype=np.int64)
    out_counts = np.array([counts[i] for i in range(counts.size()) if counts[i] > 0], dtype=np.int64)
    return out_keys, out_counts, flips
