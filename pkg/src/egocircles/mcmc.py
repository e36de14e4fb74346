"""Annealed membership sampling with node-type collapsing.

Two nodes with the same circle memberships and the same feature code are
interchangeable: every pair they form with a third node has the same edge
probability.  The sampler therefore keeps a table of node *types*
``(membership mask, feature code) -> count`` and evaluates the "no edges"
part of a node's likelihood as a sum over types, then corrects it with the
node's actual edges.  The same collapse-then-correct idea gives the
likelihood and gradients used by the parameter steps.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._backend import kernels
from .data import CircleAssignment, EgoNetwork, ModelParams
from .features import EdgeFeatureCache
from .model import softplus
from .optimize import owlqn
from .trainer import AUTO, FitConfig, FitResult, bic, param_count

log = logging.getLogger(__name__)

MAX_CIRCLES = 62  # memberships are packed into a signed 64-bit mask


class NonBinaryFeatures(ValueError):
    pass


@dataclass
class AnnealSchedule:
    t0: float = 1.0
    decay: float = 0.95
    sweeps: int = 100
    param_every: int = 10

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.sweeps < 0 or self.param_every < 1:
            raise ValueError("sweeps must be >= 0 and param_every >= 1")

    def temperature(self, sweep: int) -> float:
        return self.t0 * self.decay ** sweep


class TypeTable:
    """Counts of nodes per ``(membership mask, feature type)``."""

    def __init__(self, counts: dict | None = None):
        self.counts: dict = dict(counts or {})

    @classmethod
    def build(cls, masks, ftype) -> "TypeTable":
        return cls(Counter(zip((int(m) for m in masks), (int(f) for f in ftype))))

    def move(self, old: tuple, new: tuple) -> None:
        if old == new:
            return
        left = self.counts[old] - 1
        if left:
            self.counts[old] = left
        else:
            del self.counts[old]
        self.counts[new] = self.counts.get(new, 0) + 1

    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        return isinstance(other, TypeTable) and self.counts == other.counts

    def arrays(self, n_ftypes: int):
        """Packed ``(keys, counts)`` with ``key = mask * n_ftypes + ftype``."""
        items = sorted(self.counts.items())
        keys = np.array([m * n_ftypes + f for (m, f), _ in items], dtype=np.int64)
        counts = np.array([c for _, c in items], dtype=np.int64)
        return keys, counts

    @classmethod
    def from_arrays(cls, keys, counts, n_ftypes: int) -> "TypeTable":
        return cls({divmod(int(k), n_ftypes): int(c) for k, c in zip(keys, counts) if c > 0})

    def bitstrings(self, k: int, codes: np.ndarray) -> dict:
        """The table keyed by ``(community bits, feature bits)`` strings."""
        out = {}
        for (m, f), c in self.counts.items():
            cbits = "".join("1" if (m >> j) & 1 else "0" for j in range(k))
            fbits = "".join(str(int(v)) for v in codes[f])
            out[(cbits, fbits)] = c
        return out


def feature_types(features: EdgeFeatureCache):
    """Distinct binary node codes and each node's index into them."""
    codes = np.asarray(features.node_codes)
    if codes.size and not np.isin(codes, (0, 1)).all():
        raise NonBinaryFeatures(
            f"type collapsing needs binary node codes; scheme {features.scheme.kind!r} produces counts"
        )
    uniq, ftype = np.unique(codes, axis=0, return_inverse=True)
    return uniq, ftype.reshape(-1).astype(np.int64)


def build_type_table(network: EgoNetwork, features: EdgeFeatureCache, circles) -> TypeTable:
    _, ftype = feature_types(features)
    return TypeTable.build(_masks(network, circles), ftype)


def _masks(network: EgoNetwork, circles) -> np.ndarray:
    m = circles.to_matrix(network) if isinstance(circles, CircleAssignment) else np.asarray(circles, bool)
    if m.shape[0] > MAX_CIRCLES:
        raise ValueError(f"at most {MAX_CIRCLES} circles are supported")
    weights = (np.int64(1) << np.arange(m.shape[0], dtype=np.int64))
    return (m.astype(np.int64).T @ weights).astype(np.int64) if m.shape[0] else np.zeros(network.n, np.int64)


def _neighbour_csr(network: EgoNetwork):
    # every edge incident on x, in either direction
    ei, ej = network.edge_index_arrays()
    src = np.concatenate([ei, ej])
    dst = np.concatenate([ej, ei])
    order = np.argsort(src, kind="stable")
    ptr = np.zeros(network.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=network.n), out=ptr[1:])
    return ptr, dst[order].astype(np.int64)


class MCMCState:
    """Memberships, the type table and everything a sweep needs."""

    def __init__(self, network: EgoNetwork, features: EdgeFeatureCache, params: ModelParams, circles=None):
        self.network = network
        self.features = features
        self.params = params
        self.codes, self.ftype = feature_types(features)
        k = params.k
        if circles is None:
            circles = np.zeros((k, network.n), dtype=bool)
        self.masks = _masks(network, circles)
        self.table = TypeTable.build(self.masks, self.ftype)
        self.nbr_ptr, self.nbr_idx = _neighbour_csr(network)
        self.factor = 2.0 if network.directed else 1.0
        self._inner = None

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def n_ftypes(self) -> int:
        return self.codes.shape[0]

    def set_params(self, params: ModelParams) -> None:
        self.params = params
        self._inner = None

    def ftype_features(self) -> np.ndarray:
        """``(Tf, Tf, D)`` feature vectors between every pair of feature types."""
        t = self.n_ftypes
        a, b = np.divmod(np.arange(t * t), t)
        return self.features.rows_from_codes(self.codes[a], self.codes[b]).reshape(t, t, -1)

    def inner(self) -> np.ndarray:
        """``(K, Tf, Tf)`` tensor of ``<phi, theta_k>`` between feature types."""
        if self._inner is None:
            self._inner = np.ascontiguousarray(
                np.einsum("abd,kd->kab", self.ftype_features(), self.params.thetas)
            )
        return self._inner

    def members(self) -> np.ndarray:
        bits = np.arange(self.k, dtype=np.int64)
        return ((self.masks[None, :] >> bits[:, None]) & 1).astype(bool)

    def circles(self) -> CircleAssignment:
        return CircleAssignment.from_matrix(self.network, self.members())

    def _kernel_args(self):
        keys, counts = self.table.arrays(self.n_ftypes)
        return (self.ftype, keys, counts, self.n_ftypes, self.inner(),
                np.ascontiguousarray(self.params.alphas, dtype=float),
                self.nbr_ptr, self.nbr_idx, self.factor)


def membership_marginals(x: int, k: int, state: MCMCState):
    """``(l0, l1)``: the log-likelihood terms involving node ``x`` with ``x`` outside / inside circle ``k``."""
    ftype, keys, counts, nft, inner, alphas, ptr, idx, factor = state._kernel_args()
    return kernels.marginals(int(x), int(k), state.masks, ftype, keys, counts, nft, inner,
                             alphas, ptr, idx, factor)


def mcmc_sweep(state: MCMCState, temperature: float, rng: np.random.Generator) -> MCMCState:
    """Visit every ``(node, circle)`` once in a random order; updates ``state`` in place."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n, k = state.network.n, state.k
    if n == 0 or k == 0:
        return state
    order = rng.permutation(n * k)
    nodes, circles = np.divmod(order, k)
    uniforms = rng.random(order.size)
    ftype, keys, counts, nft, inner, alphas, ptr, idx, factor = state._kernel_args()
    keys, counts, flips = kernels.sweep(nodes.astype(np.int64), circles.astype(np.int64), uniforms,
                                        float(temperature), state.masks, ftype, keys, counts, nft,
                                        inner, alphas, ptr, idx, factor)
    state.table = TypeTable.from_arrays(keys, counts, nft)
    state.last_flips = int(flips)
    return state


# ---------------------------------------------------------------------------
# collapsed likelihood and gradients


def _type_pairs(state: MCMCState):
    """Unordered (or ordered, for directed graphs) type pairs with their pair counts."""
    items = sorted(state.table.counts.items())
    masks = np.array([m for (m, _), _ in items], dtype=np.int64)
    ftypes = np.array([f for (_, f), _ in items], dtype=np.int64)
    cnt = np.array([c for _, c in items], dtype=float)
    t = len(items)
    a, b = np.triu_indices(t)
    w = np.where(a == b, cnt[a] * (cnt[a] - 1) / 2.0, cnt[a] * cnt[b])
    w = w * state.factor
    keep = w > 0
    return masks[a[keep]], ftypes[a[keep]], masks[b[keep]], ftypes[b[keep]], w[keep]


def _phi_parts(state, params, ma, fa, mb, fb, feats):
    bits = np.arange(params.k, dtype=np.int64)
    both = (((ma & mb)[:, None] >> bits[None, :]) & 1).astype(bool)
    inner = feats @ params.thetas.T
    d = np.where(both, 1.0, -params.alphas[None, :])
    return both, inner, d, np.einsum("pk,pk->p", d, inner)


def collapsed_value_and_gradients(state: MCMCState, params: ModelParams | None = None):
    """Log-likelihood and its gradients computed over type pairs plus an edge correction."""
    params = state.params if params is None else params
    K = params.k
    D = state.features.dimension
    if K == 0:
        n_pairs = state.features.n_pairs
        return -n_pairs * math.log(2.0), np.zeros((0, D)), np.zeros(0)
    tf = state.ftype_features()
    ma, fa, mb, fb, w = _type_pairs(state)
    feats = tf[fa, fb]
    both, inner, d, phi = _phi_parts(state, params, ma, fa, mb, fb, feats)
    ll = -float(w @ softplus(phi))
    r = -w * expit(phi)
    g_theta = (d * r[:, None]).T @ feats
    g_alpha = -(((~both) * inner) * r[:, None]).sum(axis=0)

    ei, ej = state.network.edge_index_arrays()
    if ei.size:
        m, f = state.masks, state.ftype
        feats = tf[f[ei], f[ej]]
        both, inner, d, phi = _phi_parts(state, params, m[ei], f[ei], m[ej], f[ej], feats)
        ll += float(phi.sum())
        g_theta += d.T @ feats
        g_alpha -= ((~both) * inner).sum(axis=0)
    return ll, g_theta, g_alpha


def collapsed_log_likelihood(state: MCMCState, params: ModelParams | None = None) -> float:
    return collapsed_value_and_gradients(state, params)[0]


def collapsed_parameter_step(state: MCMCState, lam: float, max_iter: int = 100) -> ModelParams:
    K, D = state.k, state.features.dimension
    if K == 0:
        return state.params.copy()
    mask = np.zeros(K * D + K, dtype=bool)
    mask[: K * D] = True

    def fun(vec):
        ll, gt, ga = collapsed_value_and_gradients(state, ModelParams.from_flat(vec, K, D))
        return -ll, -np.concatenate([gt.ravel(), ga])

    res = owlqn(fun, state.params.flat(), lam=lam, mask=mask, max_iter=max_iter)
    return ModelParams.from_flat(res.x, K, D)


def fit_mcmc(network: EgoNetwork, features: EdgeFeatureCache, config: FitConfig,
             schedule: AnnealSchedule | None = None) -> FitResult:
    """Annealed sampling interleaved with parameter steps; returns the highest-likelihood state seen."""
    if config.k == AUTO:
        raise ValueError("the sampler needs a fixed K (no BIC sweep in this mode)")
    schedule = schedule or AnnealSchedule()
    k = int(config.k)
    rng = np.random.default_rng(config.seed)
    D = features.dimension
    state = MCMCState(network, features, ModelParams.initial(k, D, rng))

    best_ll = collapsed_log_likelihood(state)
    best = (state.masks.copy(), state.params.copy())
    trace = [best_ll]
    for s in range(schedule.sweeps):
        mcmc_sweep(state, schedule.temperature(s), rng)
        if (s + 1) % schedule.param_every == 0:
            state.set_params(collapsed_parameter_step(state, config.lam, config.qn_max_iter))
        ll = collapsed_log_likelihood(state)
        trace.append(ll)
        if ll > best_ll:
            best_ll = ll
            best = (state.masks.copy(), state.params.copy())
        log.debug("sweep %d  T=%.4g  log-likelihood %.4f", s, schedule.temperature(s), ll)

    state.masks[:] = best[0]
    state.set_params(best[1])
    members = state.members()
    n_edges = len(network.edges)
    return FitResult(
        params=best[1],
        circles=CircleAssignment.from_matrix(network, members),
        log_likelihood=best_ll,
        bic=bic(best_ll, param_count(k, D), n_edges) if n_edges else math.nan,
        iterations=schedule.sweeps,
        converged=True,
        objective_trace=trace,
        members=members,
    )
