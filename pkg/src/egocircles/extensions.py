"""Circle maintenance for new friends and seeded circle discovery."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CircleAssignment, EgoNetwork, ModelParams
from .features import EdgeFeatureCache
from .model import LikelihoodContext, objective, softplus, value_and_gradients
from .optimize import owlqn
from .pbopt import UNLABELED
from .trainer import AUTO, FitConfig, FitResult, coordinate_ascent

EXHAUSTIVE_MAX_K = 20


class UnknownSeedNode(KeyError):
    pass


# ---------------------------------------------------------------------------
# supervised parameter fit


def fit_supervised(network: EgoNetwork, features: EdgeFeatureCache, circles, lam: float = 1.0,
                   max_iter: int = 2000, gtol: float = 1e-6) -> ModelParams:
    """Fit the weights that best explain known circles.

    Starts at theta = 0, alpha = 1 and runs OWL-QN on ``l - lam * ||theta||_1``
    with the memberships held fixed.
    """
    members = circles.to_matrix(network) if isinstance(circles, CircleAssignment) else np.asarray(circles, bool)
    K, D = members.shape[0], features.dimension
    start = ModelParams(np.zeros((K, D)), np.ones(K))
    if K == 0:
        return start
    ctx = LikelihoodContext(network, features, start, members, lam)
    mask = np.zeros(K * D + K, dtype=bool)
    mask[: K * D] = True

    def fun(vec):
        ll, gt, ga = value_and_gradients(ctx.with_params(ModelParams.from_flat(vec, K, D)))
        return -ll, -np.concatenate([gt.ravel(), ga])

    res = owlqn(fun, start.flat(), lam=lam, mask=mask, max_iter=max_iter, tol=0.0, gtol=gtol)
    return ModelParams.from_flat(res.x, K, D)


def supervised_objective(network, features, circles, params, lam) -> float:
    return objective(LikelihoodContext(network, features, params, circles, lam))


# ---------------------------------------------------------------------------
# membership prediction for a newly added friend


@dataclass
class NewNode:
    """A friend not yet in the network.

    ``neighbors`` are existing nodes it is connected to; in a directed network
    they are its out-edges and ``in_neighbors`` holds the in-edges.
    """

    id: object
    profile: np.ndarray
    neighbors: tuple = ()
    in_neighbors: tuple = ()


def _incident_terms(new_node: NewNode, features: EdgeFeatureCache, circles, params: ModelParams):
    network = features.network
    members = circles.to_matrix(network) if isinstance(circles, CircleAssignment) else np.asarray(circles, bool)
    if members.shape[0] != params.k:
        raise ValueError(f"{members.shape[0]} circles but {params.k} parameter sets")
    idx = network.index
    edge_mult = np.zeros(network.n)
    for group in (new_node.neighbors, new_node.in_neighbors if network.directed else ()):
        for y in group:
            if y not in idx:
                raise KeyError(f"new node links to unknown node {y!r}")
            edge_mult[idx[y]] += 1.0
    if not network.directed:
        edge_mult = np.minimum(edge_mult, 1.0)
    code = features.code_for(new_node.profile)
    X = features.rows_from_codes(np.broadcast_to(code, features.node_codes.shape), features.node_codes)
    inner = X @ params.thetas.T  # (N, K)
    base = -(inner * params.alphas[None, :]).sum(axis=1)
    # switching c_k on adds (1 + alpha_k) <phi, theta_k> for every member y of C_k
    gain = members.T * inner * (1.0 + params.alphas[None, :])
    pair_mult = 2.0 if network.directed else 1.0
    return base, gain, edge_mult, pair_mult


def _assignment_scores(bits, base, gain, edge_mult, pair_mult):
    phi = base[None, :] + bits @ gain.T
    return phi @ edge_mult - pair_mult * softplus(phi).sum(axis=1)


def predict_memberships(new_node: NewNode, features: EdgeFeatureCache, circles, params: ModelParams,
                        stats: dict | None = None, chunk: int = 4096) -> np.ndarray:
    """Most likely circle memberships for ``new_node`` with the model held fixed.

    Only the pairs that involve the new node are scored.  For K up to 20 all
    2^K assignments are enumerated (ties go to the lexicographically smallest
    bit vector); beyond that greedy single-circle flips are used.  When
    ``stats`` is given, ``stats["pair_terms"]`` counts the pair evaluations.
    """
    K = params.k
    if K == 0:
        return np.zeros(0, dtype=bool)
    base, gain, edge_mult, pair_mult = _incident_terms(new_node, features, circles, params)
    n = base.size

    def count(m):
        if stats is not None:
            stats["pair_terms"] = stats.get("pair_terms", 0) + m * n

    if K <= EXHAUSTIVE_MAX_K:
        shifts = np.arange(K - 1, -1, -1, dtype=np.int64)  # circle 0 is the most significant bit
        best_val, best_code = -np.inf, 0
        for start in range(0, 1 << K, chunk):
            codes = np.arange(start, min(start + chunk, 1 << K), dtype=np.int64)
            bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(float)
            vals = _assignment_scores(bits, base, gain, edge_mult, pair_mult)
            count(codes.size)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val, best_code = vals[i], int(codes[i])
        return ((best_code >> shifts) & 1).astype(bool)

    c = np.zeros(K)
    current = _assignment_scores(c[None, :], base, gain, edge_mult, pair_mult)[0]
    count(1)
    while True:
        trials = np.repeat(c[None, :], K, axis=0)
        trials[np.arange(K), np.arange(K)] = 1.0 - c
        vals = _assignment_scores(trials, base, gain, edge_mult, pair_mult)
        count(K)
        j = int(np.argmax(vals))
        if vals[j] <= current:
            return c.astype(bool)
        c, current = trials[j], vals[j]


# ---------------------------------------------------------------------------
# seeded fits


@dataclass
class SeedSet:
    """Per-circle seed nodes, plus optional nodes known to be outside each circle."""

    seeds: tuple
    negative: tuple = field(default=())
    names: tuple = field(default=())

    def __post_init__(self):
        self.seeds = tuple(tuple(s) for s in self.seeds)
        neg = tuple(tuple(s) for s in self.negative)
        if neg and len(neg) != len(self.seeds):
            raise ValueError("negative evidence needs one list per circle")
        self.negative = neg or tuple(() for _ in self.seeds)
        for k, (pos, no) in enumerate(zip(self.seeds, self.negative)):
            clash = set(pos) & set(no)
            if clash:
                raise ValueError(f"circle {k}: node {sorted(clash, key=str)[0]!r} is both a seed and excluded")

    @property
    def k(self) -> int:
        return len(self.seeds)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SeedSet":
        names = tuple(mapping)
        return cls(tuple(tuple(mapping[n]) for n in names), names=names)

    def clamps(self, network: EgoNetwork) -> np.ndarray:
        """``(K, N)`` array of -1 (free), 1 (seed) and 0 (excluded)."""
        fixed = np.full((self.k, network.n), UNLABELED, dtype=np.int64)
        idx = network.index
        for k in range(self.k):
            for value, nodes in ((1, self.seeds[k]), (0, self.negative[k])):
                for v in nodes:
                    if v not in idx:
                        raise UnknownSeedNode(f"seed node {v!r} of circle {k} is not in the network")
                    fixed[k, idx[v]] = value
        return fixed


def fit_seeded(network: EgoNetwork, features: EdgeFeatureCache, seeds: SeedSet,
               config: FitConfig | None = None) -> FitResult:
    """Unsupervised fit with every seed clamped inside its circle."""
    config = config or FitConfig(k=seeds.k)
    if config.k not in (AUTO, seeds.k):
        raise ValueError(f"config asks for K={config.k} but {seeds.k} seed lists were given")
    fixed = seeds.clamps(network)
    return coordinate_ascent(network, features, seeds.k, config, fixed=fixed)
