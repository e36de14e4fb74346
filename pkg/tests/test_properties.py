"""Randomised properties checked with hypothesis."""
import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import naive_log_likelihood, random_instance
from egocircles.evaluate import ber, f1, match_circles
from egocircles.mcmc import MCMCState, TypeTable, collapsed_log_likelihood
from egocircles.model import LikelihoodContext, log_likelihood
from egocircles.pbopt import PairwiseEnergy, energy_of, maximize

seeds = st.integers(0, 2**31 - 1)
node_sets = st.sets(st.integers(0, 15), max_size=10)


@given(node_sets, node_sets)
def test_ber_and_f1_bounds_and_symmetry(a, b):
    assert 0.0 <= ber(a, b) <= 1.0
    assert 0.0 <= f1(a, b) <= 1.0
    assert ber(a, b) == ber(b, a)
    assert f1(a, b) == f1(b, a)


@given(st.lists(node_sets.filter(bool), min_size=1, max_size=4))
def test_self_match_is_perfect(circles):
    assert match_circles(circles, list(reversed(circles))).score == 1.0


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 9), st.integers(0, 3), st.booleans())
def test_likelihood_equals_naive(seed, n, k, directed):
    network, _, features, params, members = random_instance(seed, n=n, k=k, directed=directed)
    ctx = LikelihoodContext(network, features, params, members)
    expect = naive_log_likelihood(network, features, params, members)
    assert np.isclose(log_likelihood(ctx), expect, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 12), st.integers(1, 3), st.booleans())
def test_collapsed_likelihood_equals_dense(seed, n, k, directed):
    network, _, features, params, members = random_instance(seed, n=n, k=k, directed=directed, leaves=2)
    state = MCMCState(network, features, params, members)
    dense = log_likelihood(LikelihoodContext(network, features, params, members))
    assert np.isclose(collapsed_log_likelihood(state), dense, rtol=1e-10, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(2, 9))
def test_maximize_never_loses_to_warm_start(seed, n):
    rng = np.random.default_rng(seed)
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)])
    e = PairwiseEnergy(n, rng.normal(size=(n, 2)), pairs[:, 0], pairs[:, 1], rng.normal(size=(len(pairs), 4)))
    warm = rng.integers(0, 2, n)
    assert energy_of(e, maximize(e, warm, rng=rng)) >= energy_of(e, warm)


@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 3)), min_size=1, max_size=30),
       st.lists(st.tuples(st.integers(0, 29), st.integers(0, 7)), max_size=40))
def test_type_table_moves_equal_rebuild(nodes, moves):
    masks = np.array([m for m, _ in nodes], dtype=np.int64)
    ftype = np.array([f for _, f in nodes], dtype=np.int64)
    table = TypeTable.build(masks, ftype)
    for v, m in moves:
        v %= len(nodes)
        old = (int(masks[v]), int(ftype[v]))
        masks[v] = m
        table.move(old, (m, int(ftype[v])))
    assert table == TypeTable.build(masks, ftype)
    assert table.total() == len(nodes)
