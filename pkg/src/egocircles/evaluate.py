"""Scoring predicted circles against ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import CircleAssignment, EgoNetwork


def _degenerate(c, truth) -> bool:
    return not c or not truth


def ber(c, truth) -> float:
    """Balanced error rate; 0.5 (a random guess) when either set is empty."""
    c, truth = set(c), set(truth)
    if _degenerate(c, truth):
        return 0.5
    return 0.5 * (len(c - truth) / len(c) + len(truth - c) / len(truth))


def f1(c, truth) -> float:
    c, truth = set(c), set(truth)
    if _degenerate(c, truth):
        return 0.0
    hit = len(c & truth)
    if not hit:
        return 0.0
    precision = hit / len(c)
    recall = hit / len(truth)
    return 2 * precision * recall / (precision + recall)


@dataclass
class MatchResult:
    mapping: dict
    score: float
    per_pair_scores: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)


def _circles(x):
    return x.circles if isinstance(x, CircleAssignment) else [set(c) for c in x]


def score_matrix(predicted, truth, metric: str = "ber") -> np.ndarray:
    pred, tru = _circles(predicted), _circles(truth)
    fn = (lambda a, b: 1.0 - ber(a, b)) if metric == "ber" else f1
    return np.array([[fn(p, t) for t in tru] for p in pred], dtype=float).reshape(len(pred), len(tru))


def match_circles(predicted, truth, metric: str = "ber", strict: bool = False) -> MatchResult:
    """Best injective matching of predicted to true circles.

    The score is the mean of ``1 - BER`` (or F1) over matched pairs.  Extra
    predictions are ignored unless ``strict``, in which case the mean runs over
    ``max(K_pred, K_truth)`` with unmatched circles scoring as a random guess
    (0.5 for BER, 0 for F1).
    """
    pred, tru = _circles(predicted), _circles(truth)
    S = score_matrix(pred, tru, metric)
    if S.size == 0:
        return MatchResult({}, 0.0, [])
    rows, cols = linear_sum_assignment(S, maximize=True)
    mapping = {int(r): int(c) for r, c in zip(rows, cols)}
    scores = [float(S[r, c]) for r, c in zip(rows, cols)]
    total = sum(scores)
    count = len(scores)
    if strict:
        unmatched = max(len(pred), len(tru)) - count
        total += unmatched * (0.5 if metric == "ber" else 0.0)
        count += unmatched
    flagged = [r for r, c in mapping.items() if _degenerate(pred[r], tru[c])]
    return MatchResult(mapping, total / count, scores, flagged)


def modularity(network: EgoNetwork, partition) -> float:
    """Newman modularity ``sum_i (e_ii - a_i^2)`` of a disjoint partition of the nodes."""
    circles = _circles(partition)
    label = {}
    for i, c in enumerate(circles):
        for v in c:
            if v in label:
                raise ValueError(f"node {v!r} appears in more than one cluster")
            label[v] = i
    missing = [v for v in network.nodes if v not in label]
    if missing:
        raise ValueError(f"partition does not cover node {missing[0]!r}")
    K = len(circles)
    m = len(network.edges)
    if m == 0 or K == 0:
        return 0.0
    e = np.zeros((K, K))
    for x, y in network.edges:
        a, b = label[x], label[y]
        if network.directed:
            e[a, b] += 1.0
        else:
            e[a, b] += 0.5
            e[b, a] += 0.5
    e /= m
    a_out = e.sum(axis=1)
    a_in = e.sum(axis=0)
    return float(np.trace(e) - (a_out * a_in).sum())


def choose_k_modularity(network: EgoNetwork, cluster_fn, k_max: int) -> int:
    best_k, best_q = 1, -np.inf
    for k in range(1, k_max + 1):
        q = modularity(network, cluster_fn(k))
        if q > best_q:
            best_k, best_q = k, q
    return best_k
