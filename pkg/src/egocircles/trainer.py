"""Unsupervised circle learning by coordinate ascent, plus BIC model selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import CircleAssignment, EgoNetwork, ModelParams
from .features import EdgeFeatureCache
from .model import LikelihoodContext, log_likelihood, regularizer, value_and_gradients
from .optimize import owlqn
from .pbopt import UNLABELED, build_circle_energy, maximize

log = logging.getLogger(__name__)

AUTO = "auto"
LAMBDA_GRID = (0.0, 1.0, 10.0, 100.0)


@dataclass
class FitConfig:
    k: int | str = AUTO
    lam: float = 1.0
    max_outer_iters: int = 50
    seed: int = 0
    k_max: int = 10
    qn_max_iter: int = 100
    # optional (low, high) box for the alphas; None leaves them unconstrained
    alpha_bounds: tuple | None = None

    def __post_init__(self):
        if self.k != AUTO and (not isinstance(self.k, (int, np.integer)) or self.k < 0):
            raise ValueError(f"k must be a non-negative integer or {AUTO!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


@dataclass
class FitResult:
    params: ModelParams
    circles: CircleAssignment
    log_likelihood: float
    bic: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)
    members: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.params.k

    def to_json(self, drop_empty: bool = True) -> dict:
        keep = [k for k, c in enumerate(self.circles.circles) if c or not drop_empty]

        def _sorted(c):
            try:
                return sorted(c)
            except TypeError:
                return sorted(c, key=str)

        return {
            "k": len(keep),
            "circles": [_sorted(self.circles.circles[k]) for k in keep],
            "theta": [self.params.thetas[k].tolist() for k in keep],
            "alpha": [float(self.params.alphas[k]) for k in keep],
            "logLikelihood": float(self.log_likelihood),
            "bic": float(self.bic),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }


def bic(log_likelihood: float, param_count: int, edge_count: int) -> float:
    if edge_count < 1:
        raise ValueError("BIC needs at least one edge (log |E| is undefined otherwise)")
    return -2.0 * log_likelihood + param_count * math.log(edge_count)


def param_count(k: int, dim: int) -> int:
    # theta_k has dim entries (constant included) plus one alpha_k
    return k * (dim + 1)


def penalised_objective(ctx: LikelihoodContext) -> float:
    return log_likelihood(ctx) - regularizer(ctx.params, ctx.lam)


def quasi_newton_step(ctx: LikelihoodContext, max_iter: int = 100, alpha_bounds=None) -> ModelParams:
    """Maximise ``l - lam * Omega`` over the parameters with the circles held fixed."""
    K, D = ctx.params.k, ctx.features.dimension
    if K == 0:
        return ctx.params.copy()
    mask = np.zeros(K * D + K, dtype=bool)
    mask[: K * D] = True

    def fun(vec):
        p = ModelParams.from_flat(vec, K, D)
        ll, g_theta, g_alpha = value_and_gradients(ctx.with_params(p))
        return -ll, -np.concatenate([g_theta.ravel(), g_alpha])

    lower = upper = None
    if alpha_bounds is not None:
        lower = np.full(K * D + K, -np.inf)
        upper = np.full(K * D + K, np.inf)
        lower[K * D :], upper[K * D :] = alpha_bounds
    res = owlqn(fun, ctx.params.flat(), lam=ctx.lam, mask=mask, max_iter=max_iter, lower=lower, upper=upper)
    return ModelParams.from_flat(res.x, K, D)


def _update_circles(ctx, members, order, fixed, rng):
    """One pass of per-circle updates; returns the new membership matrix and objective trace."""
    trace = []
    current = penalised_objective(ctx.with_members(members))
    for k in order:
        c = ctx.with_members(members)
        energy = build_circle_energy(k, c)
        fk = None if fixed is None else fixed[k]
        proposal = maximize(energy, members[k].astype(np.int64), fixed=fk, rng=rng).astype(bool)
        if np.array_equal(proposal, members[k]):
            continue
        cand = members.copy()
        cand[k] = proposal
        value = penalised_objective(ctx.with_members(cand))
        if value >= current:
            members, current = cand, value
            trace.append(current)
    return members, trace, current


def coordinate_ascent(network: EgoNetwork, features: EdgeFeatureCache, k: int, config: FitConfig,
                      fixed=None, rng=None, initial_members=None) -> FitResult:
    """Alternate circle updates and parameter steps until the circles stop changing.

    ``fixed`` is an optional ``(K, N)`` array of -1 / 0 / 1 clamps applied to
    every circle update.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    D = features.dimension
    params = ModelParams.initial(k, D, rng)
    if initial_members is None:
        members = np.zeros((k, network.n), dtype=bool)
    else:
        members = np.asarray(initial_members, dtype=bool).copy()
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=np.int64)
        clamp = fixed != UNLABELED
        members[clamp] = fixed[clamp] == 1
    ctx = LikelihoodContext(network, features, params, members, config.lam)
    if members.any():
        # fit the weights to the supplied circles before the first circle update
        ctx = ctx.with_params(quasi_newton_step(ctx, config.qn_max_iter, config.alpha_bounds))

    trace = [penalised_objective(ctx)]
    converged = False
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        before = members.copy()
        members, circle_trace, current = _update_circles(ctx, members, rng.permutation(k), fixed, rng)
        trace.extend(circle_trace)
        ctx = ctx.with_members(members)
        new_params = quasi_newton_step(ctx, config.qn_max_iter, config.alpha_bounds)
        cand = ctx.with_params(new_params)
        value = penalised_objective(cand)
        if value >= current:
            ctx = cand
            trace.append(value)
        log.debug("iteration %d objective %.6f", it, trace[-1])
        if np.array_equal(before, members):
            converged = True
            break

    ll = log_likelihood(ctx)
    n_edges = max(ctx.n_edges, 1)
    return FitResult(
        params=ctx.params,
        circles=CircleAssignment.from_matrix(network, members),
        log_likelihood=ll,
        bic=bic(ll, param_count(k, D), n_edges) if ctx.n_edges else math.nan,
        iterations=it,
        converged=converged,
        objective_trace=trace,
        members=members,
    )


def fit(network: EgoNetwork, features: EdgeFeatureCache, config: FitConfig) -> FitResult:
    if network.n == 0:
        raise ValueError("cannot fit an empty network")
    if config.k == AUTO:
        return select_k(network, features, config)
    return coordinate_ascent(network, features, int(config.k), config)


def select_k(network: EgoNetwork, features: EdgeFeatureCache, config: FitConfig) -> FitResult:
    """Fit K = 1..k_max independently and keep the fit with the lowest BIC (ties -> smaller K)."""
    best = None
    for k in range(1, config.k_max + 1):
        res = coordinate_ascent(network, features, k, config, rng=np.random.default_rng([config.seed, k]))
        log.info("K=%d  ll=%.4f  bic=%.4f", k, res.log_likelihood, res.bic)
        if best is None or res.bic < best.bic:
            best = res
    return best
