"""Pairwise pseudo-boolean maximisation for the circle-membership update.

``maximize`` runs roof duality (the QPBO reduction to a max-flow problem on
the doubled literal graph) to obtain persistent labels, fills the remaining
nodes from the warm start and finishes with iterated conditional modes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .model import LikelihoodContext, softplus

UNLABELED = -1


@dataclass
class PairwiseEnergy:
    """``sum_i unary[i, x_i] + sum_e tables[e, 2 * x_i + x_j]`` over pairs ``(pair_i, pair_j)``."""

    n: int
    unary: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    tables: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("energy needs at least one node")
        self.unary = np.asarray(self.unary, dtype=float).reshape(self.n, 2)
        self.pair_i = np.asarray(self.pair_i, dtype=np.int64)
        self.pair_j = np.asarray(self.pair_j, dtype=np.int64)
        self.tables = np.asarray(self.tables, dtype=float).reshape(-1, 4)
        if not (self.pair_i.size == self.pair_j.size == self.tables.shape[0]):
            raise ValueError("pair arrays and tables disagree in length")
        if np.any(self.pair_i == self.pair_j):
            raise ValueError("pairwise terms need two distinct nodes")

    def check_finite(self):
        if not (np.all(np.isfinite(self.unary)) and np.all(np.isfinite(self.tables))):
            raise ValueError("energy contains a non-finite entry")

    def polynomial(self):
        """Multilinear form ``(const, lin, qi, qj, qw)`` with ``qi < qj`` and merged duplicates."""
        A, B, C, D = self.tables.T
        const = float(self.unary[:, 0].sum() + A.sum())
        lin = self.unary[:, 1] - self.unary[:, 0]
        lin = lin + np.bincount(self.pair_i, weights=C - A, minlength=self.n)
        lin = lin + np.bincount(self.pair_j, weights=B - A, minlength=self.n)
        w = A - B - C + D
        lo = np.minimum(self.pair_i, self.pair_j)
        hi = np.maximum(self.pair_i, self.pair_j)
        key = lo * self.n + hi
        uniq, inv = np.unique(key, return_inverse=True)
        qw = np.bincount(inv, weights=w, minlength=uniq.size)
        qi, qj = np.divmod(uniq, self.n)
        keep = qw != 0
        return const, lin, qi[keep], qj[keep], qw[keep]


def energy_of(energy: PairwiseEnergy, labeling) -> float:
    x = np.asarray(labeling, dtype=np.int64)
    if x.shape != (energy.n,) or np.any((x != 0) & (x != 1)):
        raise ValueError("energy_of needs a full 0/1 labeling")
    total = energy.unary[np.arange(energy.n), x].sum()
    total += energy.tables[np.arange(energy.tables.shape[0]), 2 * x[energy.pair_i] + x[energy.pair_j]].sum()
    return float(total)


def roof_dual(const, lin, qi, qj, qw, n):
    """Persistent partial labeling for *maximising* ``const + lin.x + sum qw x_i x_j``.

    Returns ``(labels, upper_bound)``; ``labels`` holds 0, 1 or ``UNLABELED``.
    """
    # maximise P  <=>  minimise f = -P, written as a posiform over literals
    # literal ids: x_i -> i, not x_i -> n + i, x0 -> 2n, not x0 -> 2n + 1
    f_const = -const
    f_lin = -np.asarray(lin, dtype=float).copy()
    f_q = -np.asarray(qw, dtype=float)

    tails, heads, caps = [], [], []

    def comp(lit):
        return lit + n if lit < n else lit - n

    src, snk = 2 * n, 2 * n + 1

    # quadratic terms
    neg = f_q < 0
    # q x_i x_j with q < 0  ->  q x_i + (-q) x_i (1 - x_j)
    np.add.at(f_lin, qi[neg], f_q[neg])
    u = np.concatenate([qi[~neg], qi[neg]])
    v = np.concatenate([qj[~neg], qj[neg] + n])
    c = np.concatenate([f_q[~neg], -f_q[neg]]) / 2.0
    cu = np.where(u < n, u + n, u - n)
    cv = np.where(v < n, v + n, v - n)
    tails += [u, v]
    heads += [cv, cu]
    caps += [c, c]

    # linear terms, seen as products with the constant literal x0
    pos = f_lin > 0
    idx = np.arange(n)
    lit = np.where(pos, idx, idx + n)
    coef = np.abs(f_lin)
    f_const += f_lin[~pos].sum()
    nz = coef > 0
    lit, coef = lit[nz], coef[nz] / 2.0
    tails += [np.full(lit.size, src), lit]
    heads += [np.where(lit < n, lit + n, lit - n), np.full(lit.size, snk)]
    caps += [coef, coef]

    tails = np.concatenate(tails).astype(np.int64)
    heads = np.concatenate(heads).astype(np.int64)
    caps = np.concatenate(caps)
    flow, reach = kernels.max_flow(2 * n + 2, tails, heads, caps, src, snk)
    labels = np.full(n, UNLABELED, dtype=np.int64)
    labels[reach[:n]] = 1
    labels[reach[n : 2 * n]] = 0
    # min f >= f_const + flow, so max P <= -(f_const + flow)
    return labels, -(f_const + flow)


def _csr(n, qi, qj, qw):
    src = np.concatenate([qi, qj])
    dst = np.concatenate([qj, qi])
    w = np.concatenate([qw, qw])
    order = np.argsort(src, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
    return ptr, dst[order].astype(np.int64), w[order]


def maximize(energy: PairwiseEnergy, warm_start, fixed=None, rng=None, return_persistent=False):
    """Maximise ``energy`` starting from ``warm_start``.

    ``fixed`` optionally clamps nodes (array of -1 / 0 / 1).  The result never
    has lower energy than the warm start (with clamps applied).
    """
    energy.check_finite()
    n = energy.n
    warm = np.asarray(warm_start, dtype=np.int64).copy()
    if warm.shape != (n,) or np.any((warm != 0) & (warm != 1)):
        raise ValueError("warm start must be a full 0/1 labeling")
    fixed = np.full(n, UNLABELED, dtype=np.int64) if fixed is None else np.asarray(fixed, dtype=np.int64)
    clamped = fixed != UNLABELED
    warm[clamped] = fixed[clamped]

    const, lin, qi, qj, qw = energy.polynomial()
    # fold clamped nodes into their neighbours' linear terms
    free = np.flatnonzero(~clamped)
    if clamped.any():
        on = clamped & (fixed == 1)
        const += lin[on].sum()
        mi, mj = clamped[qi], clamped[qj]
        both = mi & mj
        const += qw[both & on[qi] & on[qj]].sum()
        one = mi ^ mj
        free_end = np.where(mi, qj, qi)[one]
        fixed_end = np.where(mi, qi, qj)[one]
        np.add.at(lin, free_end, qw[one] * (fixed[fixed_end] == 1))
        keep = ~(mi | mj)
        qi, qj, qw = qi[keep], qj[keep], qw[keep]
    remap = np.full(n, -1, dtype=np.int64)
    remap[free] = np.arange(free.size)
    sub_lin = lin[free]
    sub_qi, sub_qj = remap[qi], remap[qj]

    labels = warm.copy()
    persistent = fixed.copy()
    if free.size:
        plab, _ = roof_dual(0.0, sub_lin, sub_qi, sub_qj, qw, free.size)
        persistent[free] = plab
        sub = warm[free].copy()
        known = plab != UNLABELED
        sub[known] = plab[known]
        ptr, nbr, w = _csr(free.size, sub_qi, sub_qj, qw)
        unary = np.zeros((free.size, 2))
        unary[:, 1] = sub_lin
        order = np.arange(free.size) if rng is None else rng.permutation(free.size)
        kernels.icm(sub, unary, ptr, nbr, w, order.astype(np.int64))
        labels[free] = sub

    if energy_of(energy, labels) < energy_of(energy, warm):
        labels = warm
    if return_persistent:
        return labels, persistent
    return labels


def build_circle_energy(k: int, ctx: LikelihoodContext) -> PairwiseEnergy:
    """Energy whose maximiser over circle ``k``'s memberships maximises the log-likelihood."""
    params = ctx.params
    inner = ctx.inner()
    d = ctx.d_matrix()
    own = inner[:, k]
    other = (d * inner).sum(axis=1) - d[:, k] * own
    out_val = other - params.alphas[k] * own
    in_val = other + own
    edge = ctx.is_edge
    e_out = np.where(edge, out_val, 0.0) - softplus(out_val)
    e_in = np.where(edge, in_val, 0.0) - softplus(in_val)
    tables = np.stack([e_out, e_out, e_out, e_in], axis=1)
    return PairwiseEnergy(
        ctx.network.n,
        np.zeros((ctx.network.n, 2)),
        ctx.features.pair_i,
        ctx.features.pair_j,
        tables,
    )
