import itertools

import numpy as np
import pytest

from egocircles.data import CircleAssignment, EgoNetwork
from egocircles.evaluate import ber, choose_k_modularity, f1, match_circles, modularity


def test_ber_examples():
    assert ber({1, 2}, {1, 2}) == 0.0
    assert ber({1, 2}, {3}) == 1.0
    assert ber({"a", "b", "c"}, {"b", "c", "d"}) == pytest.approx(1 / 3)
    assert ber(set(), {1}) == 0.5


def test_f1_examples():
    assert f1({1, 2}, {1, 2}) == 1.0
    assert f1({1}, {2}) == 0.0
    assert f1({"a", "b", "c"}, {"b", "c", "d"}) == pytest.approx(2 / 3)


def test_match_permuted_and_disjoint():
    truth = [{1, 2}, {3, 4, 5}, {6}]
    assert match_circles([truth[2], truth[0], truth[1]], truth).score == 1.0
    assert match_circles([{7}, {8, 9}], [{1}, {2, 3}]).score == 0.0


def exhaustive_match(pred, truth, metric):
    fn = (lambda a, b: 1 - ber(a, b)) if metric == "ber" else f1
    if not pred or not truth:
        return 0.0
    m = min(len(pred), len(truth))
    best = -1.0
    for rows in itertools.permutations(range(len(pred)), m):
        for cols in itertools.permutations(range(len(truth)), m):
            best = max(best, np.mean([fn(pred[r], truth[c]) for r, c in zip(rows, cols)]))
    return best


@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("metric", ["ber", "f1"])
def test_matching_equals_exhaustive(seed, metric):
    rng = np.random.default_rng(seed)
    kp, kt = rng.integers(1, 5, size=2)
    pred = [set(np.flatnonzero(rng.random(8) < 0.4).tolist()) for _ in range(kp)]
    truth = [set(np.flatnonzero(rng.random(8) < 0.4).tolist()) for _ in range(kt)]
    assert match_circles(pred, truth, metric).score == pytest.approx(exhaustive_match(pred, truth, metric))


def test_strict_counts_unmatched_circles():
    truth = [{1, 2}, {3, 4}]
    assert match_circles([{1, 2}], truth).score == 1.0
    assert match_circles([{1, 2}], truth, strict=True).score == pytest.approx(0.75)


def test_degenerate_pairs_are_flagged():
    res = match_circles([set()], [{1}])
    assert res.degenerate == [0]


def _cliques(sizes, cross=()):
    nodes, edges, start = [], set(), 0
    groups = []
    for s in sizes:
        g = list(range(start, start + s))
        groups.append(set(g))
        nodes += g
        edges |= set(itertools.combinations(g, 2))
        start += s
    return EgoNetwork(tuple(nodes), frozenset(edges | set(cross))), groups


def test_modularity_examples():
    net, groups = _cliques([4, 4])
    assert modularity(net, [set(net.nodes)]) == pytest.approx(0.0)
    assert modularity(net, groups) == pytest.approx(0.5)


def naive_modularity(network, partition):
    m = len(network.edges)
    label = {v: i for i, c in enumerate(partition) for v in c}
    deg = {v: 0 for v in network.nodes}
    for x, y in network.edges:
        deg[x] += 1
        deg[y] += 1
    q = 0.0
    for x in network.nodes:
        for y in network.nodes:
            if label[x] == label[y]:
                a = 1.0 if network.has_edge(x, y) else 0.0
                q += a - deg[x] * deg[y] / (2 * m)
    return q / (2 * m)


@pytest.mark.parametrize("seed", range(10))
def test_modularity_matches_naive(seed):
    rng = np.random.default_rng(seed)
    nodes = tuple(range(12))
    edges = frozenset(p for p in itertools.combinations(nodes, 2) if rng.random() < 0.3)
    net = EgoNetwork(nodes, edges)
    lab = rng.integers(0, 3, 12)
    part = [set(np.flatnonzero(lab == c).tolist()) for c in range(3)]
    part = [p for p in part if p]
    assert modularity(net, part) == pytest.approx(naive_modularity(net, part))


def test_modularity_rejects_overlap():
    net, _ = _cliques([3])
    with pytest.raises(ValueError):
        modularity(net, [{0, 1}, {1, 2}])


def test_choose_k():
    net, groups = _cliques([5, 5], cross=[(0, 5)])

    def ideal(k):
        return groups if k == 2 else [set(net.nodes)] if k == 1 else groups[:1] + [{5}] + [groups[1] - {5}]

    assert choose_k_modularity(net, ideal, 3) == 2
    single, _ = _cliques([6])

    def split(k):
        return [set(range(i, 6, k)) for i in range(k)]

    assert choose_k_modularity(single, split, 4) == 1
    assert choose_k_modularity(net, lambda k: [set(net.nodes)], 4) == 1
