"""Edge probabilities, log-likelihood and its gradients.

For a pair ``e`` and circles ``C_1..C_K`` the model uses

    d_k(e)  = 1 if both endpoints are in C_k else -alpha_k
    Phi(e)  = sum_k d_k(e) <phi(e), theta_k>
    p(e in E) = 1 / (1 + exp(-Phi(e)))

and the log-likelihood ``sum_{e in E} Phi(e) - sum_{pairs} log(1 + exp(Phi(e)))``.
All sums run over the pair domain of :func:`egocircles.data.pair_index_arrays`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import CircleAssignment, EgoNetwork, ModelParams
from .features import EdgeFeatureCache


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    return np.logaddexp(0.0, x)


def adjacency(network: EgoNetwork) -> np.ndarray:
    n = network.n
    adj = np.zeros((n, n), dtype=bool)
    ei, ej = network.edge_index_arrays()
    adj[ei, ej] = True
    if not network.directed:
        adj[ej, ei] = True
    return adj


@dataclass
class LikelihoodContext:
    """Everything the likelihood needs, with the pair arrays pre-gathered.

    ``members`` is the ``(K, N)`` boolean membership matrix; it and ``params``
    may be swapped freely between evaluations.
    """

    network: EgoNetwork
    features: EdgeFeatureCache
    params: ModelParams
    members: np.ndarray
    lam: float = 0.0
    is_edge: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.members, CircleAssignment):
            self.members = self.members.to_matrix(self.network)
        self.members = np.asarray(self.members, dtype=bool).reshape(-1, self.network.n)
        if self.members.shape[0] != self.params.k:
            raise ValueError(f"{self.members.shape[0]} circles but {self.params.k} parameter sets")
        if self.params.k and self.params.dim != self.features.dimension:
            raise ValueError(
                f"theta dimension {self.params.dim} != feature dimension {self.features.dimension}"
            )
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        adj = adjacency(self.network)
        self.is_edge = adj[self.features.pair_i, self.features.pair_j]

    @property
    def X(self) -> np.ndarray:
        return self.features.matrix()

    @property
    def n_edges(self) -> int:
        return int(self.is_edge.sum())

    def with_params(self, params: ModelParams) -> "LikelihoodContext":
        ctx = object.__new__(LikelihoodContext)
        ctx.__dict__.update(self.__dict__)
        ctx.params = params
        return ctx

    def with_members(self, members: np.ndarray) -> "LikelihoodContext":
        ctx = object.__new__(LikelihoodContext)
        ctx.__dict__.update(self.__dict__)
        ctx.members = np.asarray(members, dtype=bool)
        return ctx

    # -- dense pieces ------------------------------------------------------
    def in_both(self) -> np.ndarray:
        """``(P, K)`` indicator that both endpoints of each pair are in circle k."""
        m = self.members
        return (m[:, self.features.pair_i] & m[:, self.features.pair_j]).T

    def inner(self) -> np.ndarray:
        """``(P, K)`` matrix of ``<phi(e), theta_k>``."""
        return self.X @ self.params.thetas.T

    def d_matrix(self, in_both=None) -> np.ndarray:
        if in_both is None:
            in_both = self.in_both()
        return np.where(in_both, 1.0, -self.params.alphas[None, :])

    def phi_values(self) -> np.ndarray:
        """``Phi(e)`` for every pair of the domain."""
        if self.params.k == 0:
            return np.zeros(self.features.n_pairs)
        return np.einsum("pk,pk->p", self.d_matrix(), self.inner())


# ---------------------------------------------------------------------------
# per-pair operations


def _pair_parts(pair, ctx: LikelihoodContext):
    x, y = pair
    idx = ctx.network.index
    i, j = idx[x], idx[y]
    phi = ctx.features.rows_for(np.array([i]), np.array([j]))[0]
    both = ctx.members[:, i] & ctx.members[:, j]
    return phi, both


def d_coeff(pair, k: int, ctx: LikelihoodContext) -> float:
    _, both = _pair_parts(pair, ctx)
    return 1.0 if both[k] else -float(ctx.params.alphas[k])


def big_phi(pair, ctx: LikelihoodContext) -> float:
    if ctx.params.k == 0:
        return 0.0
    phi, both = _pair_parts(pair, ctx)
    d = np.where(both, 1.0, -ctx.params.alphas)
    return float(d @ (ctx.params.thetas @ phi))


def log_probs_from_phi(phi_value):
    """Return ``(log p(edge), log p(non-edge))`` for a value (or array) of Phi."""
    sp = softplus(phi_value)
    return phi_value - sp, -sp


def edge_log_probs(pair, ctx: LikelihoodContext):
    return log_probs_from_phi(big_phi(pair, ctx))


# ---------------------------------------------------------------------------
# whole-graph quantities


def log_likelihood(ctx: LikelihoodContext) -> float:
    phi = ctx.phi_values()
    return float(phi[ctx.is_edge].sum() - softplus(phi).sum())


def regularizer(params: ModelParams, lam: float) -> float:
    """L1 penalty on the weights only; trade-offs are not penalised."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return 0.0
    return float(lam * np.abs(params.thetas).sum())


def objective(ctx: LikelihoodContext) -> float:
    return log_likelihood(ctx) - regularizer(ctx.params, ctx.lam)


def value_and_gradients(ctx: LikelihoodContext):
    """Log-likelihood together with ``(dl/dtheta (K x D), dl/dalpha (K,))``.

    The L1 term is left to the optimiser.
    """
    K = ctx.params.k
    if K == 0:
        return log_likelihood(ctx), np.zeros((0, ctx.features.dimension)), np.zeros(0)
    X = ctx.X
    both = ctx.in_both()
    inner = X @ ctx.params.thetas.T
    d = np.where(both, 1.0, -ctx.params.alphas[None, :])
    phi = np.einsum("pk,pk->p", d, inner)
    ll = float(phi[ctx.is_edge].sum() - softplus(phi).sum())
    # residual = edge indicator - p(edge)
    resid = ctx.is_edge.astype(float) - expit(phi)
    g_theta = (d * resid[:, None]).T @ X
    g_alpha = -(((~both) * inner) * resid[:, None]).sum(axis=0)
    return ll, g_theta, g_alpha


def gradients(ctx: LikelihoodContext):
    _, g_theta, g_alpha = value_and_gradients(ctx)
    return g_theta, g_alpha
