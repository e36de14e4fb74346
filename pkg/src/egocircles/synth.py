"""Planted ego-networks sampled from the circle model itself.

Each circle ``k`` owns one profile category ``group{k}``.  Members carry
value 0 of that category, non-members a random other value, so two members
agree on the category while any pair involving a non-member disagrees on two
leaves.  The true weights put ``separation`` on every leaf of the circle's
category and ``2 * separation + background / K`` on the constant feature,
which makes pairs that disagree on the category contribute ``-background / K``
and pairs inside the circle contribute ``2 * separation + background / K``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .data import CircleAssignment, EgoNetwork, ModelParams, ProfileStore
from .features import EdgeFeatureCache
from .model import LikelihoodContext

STRUCTURES = ("disjoint", "overlapping", "nested", "mixed")


@dataclass
class PlantedSpec:
    n: int = 190
    k: int = 3
    overlap_structure: str = "mixed"
    separation: float = 4.0
    feature_dim: int = 24
    seed: int = 0
    mean_circle_size: float = 22.0
    background: float = 3.0
    directed: bool = False
    feature_noise: float = 0.0

    def __post_init__(self):
        if self.overlap_structure not in STRUCTURES:
            raise ValueError(f"overlap_structure must be one of {STRUCTURES}")
        if not 0.0 <= self.feature_noise <= 1.0:
            raise ValueError("feature_noise must lie in [0, 1]")
        if self.n < 2 or self.k < 0 or self.separation < 0:
            raise ValueError("need n >= 2, k >= 0 and separation >= 0")
        if self.k and self.feature_dim // self.k < 2:
            raise ValueError("feature_dim must give every circle a category with at least two values")
        if not self.k and self.feature_dim < 2:
            raise ValueError("feature_dim must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> "PlantedSpec":
        aliases = {"overlapStructure": "overlap_structure", "featureDim": "feature_dim",
                   "meanCircleSize": "mean_circle_size", "featureNoise": "feature_noise"}
        return cls(**{aliases.get(key, key): v for key, v in d.items()})

    def to_dict(self) -> dict:
        return asdict(self)


def _roles(k: int, structure: str, rng) -> list[str]:
    if k == 0:
        return []
    if structure != "mixed":
        return ["base"] + [structure] * (k - 1)
    # roughly a quarter nested, half overlapping, a quarter disjoint
    pool = []
    while len(pool) < k - 1:
        block = ["nested", "overlapping", "overlapping", "disjoint"]
        rng.shuffle(block)
        pool.extend(block)
    return ["base"] + pool[: k - 1]


def _sample_circles(spec: PlantedSpec, rng) -> list[set]:
    n, k = spec.n, spec.k
    mean = min(spec.mean_circle_size, max(3.0, n / (k + 1)))
    circles: list[set] = []
    for role in _roles(k, spec.overlap_structure, rng):
        size = int(np.clip(round(rng.normal(mean, mean / 5)), 3, max(3, n // 2)))
        covered = set().union(*circles) if circles else set()
        if role == "nested":
            parents = [c for c in circles if len(c) >= 4]
            if parents:
                parent = sorted(parents[rng.integers(len(parents))])
                sub = max(2, min(len(parent) - 1, size // 2 if size < len(parent) else len(parent) // 2))
                circles.append(set(rng.choice(parent, size=sub, replace=False).tolist()))
                continue
            role = "disjoint"
        if role == "overlapping" and circles:
            other = sorted(circles[rng.integers(len(circles))])
            inside = min(len(other) - 1, max(1, size // 2))
            outside_pool = sorted(set(range(n)) - set(other))
            outside = min(len(outside_pool), size - inside)
            chosen = set(rng.choice(other, size=inside, replace=False).tolist())
            if outside:
                chosen |= set(rng.choice(outside_pool, size=outside, replace=False).tolist())
            circles.append(chosen)
            continue
        pool = sorted(set(range(n)) - covered) if role == "disjoint" else list(range(n))
        if len(pool) < 2:
            pool = list(range(n))
        circles.append(set(rng.choice(pool, size=min(size, len(pool)), replace=False).tolist()))
    return circles


def generate(spec: PlantedSpec):
    """Sample ``(network, profiles, circles, params)`` from a planted specification."""
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n, spec.k
    circle_idx = _sample_circles(spec, rng)

    n_cat = max(k, 1)
    per_cat = spec.feature_dim // n_cat
    names = [(f"group{c}", f"value{v}") for c in range(n_cat) for v in range(per_cat)]
    L = len(names)
    rows = np.zeros((n, L), dtype=np.int8)
    for c in range(n_cat):
        members = circle_idx[c] if c < k else set()
        for i in range(n):
            v = 0 if i in members else int(rng.integers(1, per_cat)) if k else int(rng.integers(per_cat))
            if spec.feature_noise and rng.random() < spec.feature_noise:
                v = int(rng.integers(per_cat))
            rows[i, c * per_cat + v] = 1
    ego = np.zeros(L, dtype=np.int8)
    ego[np.arange(n_cat) * per_cat] = 1

    nodes = tuple(range(n))
    profiles = ProfileStore(tuple(names), {i: rows[i] for i in nodes}, ego)

    D = L + 1
    thetas = np.zeros((k, D))
    beta = spec.background / max(k, 1)
    for c in range(k):
        thetas[c, 0] = 2 * spec.separation + beta
        thetas[c, 1 + c * per_cat : 1 + (c + 1) * per_cat] = spec.separation
    params = ModelParams(thetas, np.ones(k))

    empty = EgoNetwork(nodes, frozenset(), spec.directed)
    feats = EdgeFeatureCache(empty, profiles, "phi1")
    members = np.zeros((k, n), dtype=bool)
    for c, s in enumerate(circle_idx):
        members[c, sorted(s)] = True
    ctx = LikelihoodContext(empty, feats, params, members)
    prob = expit(ctx.phi_values())
    hit = rng.random(prob.size) < prob
    edges = frozenset(zip(feats.pair_i[hit].tolist(), feats.pair_j[hit].tolist()))
    network = EgoNetwork(nodes, edges, spec.directed)
    circles = CircleAssignment([set(s) for s in circle_idx])
    return network, profiles, circles, params


def summarize(network: EgoNetwork, circles: CircleAssignment) -> dict:
    """Per-circle sizes, maximum containment in another circle, and edge densities."""
    from .model import adjacency

    adj = adjacency(network)
    m = circles.to_matrix(network)
    sizes = m.sum(axis=1)
    K = circles.k
    containment = []
    for i in range(K):
        best = 0.0
        for j in range(K):
            if j != i and sizes[i]:
                best = max(best, float((m[i] & m[j]).sum()) / float(sizes[i]))
        containment.append(best)
    dens_in = []
    for i in range(K):
        idx = np.flatnonzero(m[i])
        pairs = len(idx) * (len(idx) - 1) if network.directed else len(idx) * (len(idx) - 1) // 2
        e = adj[np.ix_(idx, idx)].sum() // (1 if network.directed else 2)
        dens_in.append(float(e) / pairs if pairs else 0.0)
    inside = np.zeros((network.n, network.n), dtype=bool)
    for i in range(K):
        inside |= np.outer(m[i], m[i])
    np.fill_diagonal(inside, True)
    outside = ~inside
    if not network.directed:
        outside = np.triu(outside, 1)
        out_edges = np.triu(adj, 1)[outside].sum()
    else:
        out_edges = adj[outside].sum()
    n_out = outside.sum()
    return {
        "sizes": sizes.tolist(),
        "containment": containment,
        "density_in": dens_in,
        "density_out": float(out_edges) / n_out if n_out else 0.0,
    }
