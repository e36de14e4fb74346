"""Acceptance criteria 1-10.

Each test records ``PASS`` or ``FAIL`` with its measured numbers (printed in
the terminal summary) and then asserts the criterion at its stated tolerance.
"""
import itertools
import time

import numpy as np
import pytest

from conftest import naive_log_likelihood, random_instance
from egocircles.cli import seed_sweep
from egocircles.data import EgoNetwork, ModelParams, ProfileStore
from egocircles.evaluate import ber, match_circles
from egocircles.extensions import NewNode, SeedSet, fit_seeded, predict_memberships
from egocircles.features import EdgeFeatureCache
from egocircles.mcmc import (
    MCMCState,
    TypeTable,
    collapsed_value_and_gradients,
    mcmc_sweep,
    membership_marginals,
)
from egocircles.model import LikelihoodContext, log_likelihood, softplus, value_and_gradients
from egocircles.pbopt import UNLABELED, PairwiseEnergy, maximize
from egocircles.synth import PlantedSpec, generate
from egocircles.trainer import AUTO, FitConfig, coordinate_ascent, fit

RESULTS = {}


def report(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------


def test_criterion_01_gradients_match_finite_differences():
    start = time.perf_counter()
    h = 1e-5
    worst = 0.0
    for seed in range(50):
        network, _, features, params, members = random_instance(seed, n=12, k=3, leaves=4)  # F = 4 leaves + 1
        ctx = LikelihoodContext(network, features, params, members)
        _, gt, ga = value_and_gradients(ctx)
        analytic = np.concatenate([gt.ravel(), ga])
        K, D = params.k, features.dimension
        x0 = params.flat()
        numeric = np.empty_like(x0)
        for i in range(x0.size):
            up, dn = x0.copy(), x0.copy()
            up[i] += h
            dn[i] -= h
            numeric[i] = (log_likelihood(ctx.with_params(ModelParams.from_flat(up, K, D)))
                          - log_likelihood(ctx.with_params(ModelParams.from_flat(dn, K, D)))) / (2 * h)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-5 and elapsed < 30, f"max relative error {worst:.2e} (<= 1e-5), {elapsed:.1f}s (< 30s)")


# 2 ---------------------------------------------------------------------------


def test_criterion_02_likelihood_matches_naive_sum():
    worst = 0.0
    rng = np.random.default_rng(0)
    for seed in range(50):
        n = int(rng.integers(2, 21))
        k = int(rng.integers(0, 4))
        directed = bool(rng.integers(2))
        network, _, features, params, members = random_instance(seed, n=n, k=k, directed=directed)
        got = log_likelihood(LikelihoodContext(network, features, params, members))
        want = naive_log_likelihood(network, features, params, members)
        worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
    report(2, worst <= 1e-12, f"max relative difference {worst:.2e} (<= 1e-12)")


# 3 ---------------------------------------------------------------------------


def _all_energies(e):
    """Energy of every labeling, vectorised; row r is the binary expansion of r (node 0 first)."""
    n = e.n
    bits = ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.int64)
    val = e.unary[np.arange(n)[None, :], bits].sum(axis=1)
    val += e.tables[np.arange(e.tables.shape[0])[None, :], 2 * bits[:, e.pair_i] + bits[:, e.pair_j]].sum(axis=1)
    return bits, val


def test_criterion_03_pseudo_boolean_optimality():
    from egocircles.pbopt import energy_of

    start = time.perf_counter()
    warm_ok = persist_ok = exact_ok = True
    n_exact = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 13))
        pairs = [(i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < 0.4] or [(0, 1)]
        pi, pj = np.array(pairs).T
        tables = rng.normal(size=(len(pairs), 4))
        nonneg = seed % 2 == 0
        if nonneg:
            A, B, C, _ = tables.T
            tables[:, 3] = B + C - A + np.abs(rng.normal(size=len(pairs)))
        e = PairwiseEnergy(n, rng.normal(size=(n, 2)), pi, pj, tables)
        warm = rng.integers(0, 2, n)
        labels, persistent = maximize(e, warm, rng=rng, return_persistent=True)
        bits, vals = _all_energies(e)
        best = vals.max()
        optima = bits[vals >= best - 1e-9]
        got = energy_of(e, labels)
        warm_ok &= got >= energy_of(e, warm) - 1e-12
        known = persistent != UNLABELED
        persist_ok &= bool((optima[:, known] == persistent[known]).all(axis=1).any())
        if nonneg:
            n_exact += 1
            exact_ok &= abs(got - best) <= 1e-9
    elapsed = time.perf_counter() - start
    ok = warm_ok and persist_ok and exact_ok and elapsed < 60
    report(3, ok, f"warm start never beaten: {warm_ok}; persistent labels optimal: {persist_ok}; "
                  f"exact on {n_exact} non-negative-bonus instances: {exact_ok}; {elapsed:.1f}s (< 60s)")


# 4 ---------------------------------------------------------------------------


def test_criterion_04_coordinate_ascent_monotone():
    drops = 0
    steps = 0
    for seed in range(20):
        net, prof, _, _ = generate(PlantedSpec(n=60, k=3, seed=seed))
        feats = EdgeFeatureCache(net, prof, "phi1")
        res = coordinate_ascent(net, feats, 3, FitConfig(k=3, seed=seed))
        trace = np.array(res.objective_trace)
        drops += int((np.diff(trace) < 0).sum())
        steps += trace.size - 1
    report(4, drops == 0, f"{drops} decreases over {steps} accepted steps in 20 fits")


# 5 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_05_planted_recovery_and_bic():
    start = time.perf_counter()
    scores, chosen = [], []
    for seed in range(20):
        net, prof, circles, _ = generate(PlantedSpec(n=60, k=3, overlap_structure="mixed", separation=4.0, seed=seed))
        feats = EdgeFeatureCache(net, prof, "phi1")
        res = fit(net, feats, FitConfig(k=3, seed=seed))
        scores.append(match_circles(res.circles, circles).score)
        sel = fit(net, feats, FitConfig(k=AUTO, k_max=6, seed=seed))
        chosen.append(sel.k)
    elapsed = time.perf_counter() - start
    mean = float(np.mean(scores))
    hit = float(np.mean(np.array(chosen) == 3))
    ok = mean >= 0.90 and hit >= 0.80 and elapsed < 300
    report(5, ok, f"mean matched 1-BER {mean:.3f} (>= 0.90); K=3 chosen in {hit:.0%} (>= 80%, picks {chosen}); "
                  f"{elapsed:.0f}s (< 300s)")


# 6 ---------------------------------------------------------------------------


def _dense_marginals(state, members, x, k):
    out = []
    for b in (False, True):
        m = members.copy()
        m[k, x] = b
        ctx = LikelihoodContext(state.network, state.features, state.params, m)
        phi = ctx.phi_values()
        terms = np.where(ctx.is_edge, phi, 0.0) - softplus(phi)
        touch = (ctx.features.pair_i == x) | (ctx.features.pair_j == x)
        out.append(terms[touch].sum())
    return np.array(out)


def test_criterion_06_collapse_equivalence():
    worst = 0.0
    tables_ok = True
    rng = np.random.default_rng(6)
    for seed in range(20):
        n = int(rng.integers(5, 201))
        directed = seed % 4 == 3
        network, _, features, params, members = random_instance(seed, n=n, k=3, leaves=3, directed=directed,
                                                               density=min(0.3, 8 / n))
        state = MCMCState(network, features, params, members)
        for x in rng.choice(n, size=min(n, 5), replace=False):
            for k in range(3):
                got = np.array(membership_marginals(int(x), k, state))
                want = _dense_marginals(state, members, int(x), k)
                worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-300))))
        ll, gt, ga = collapsed_value_and_gradients(state)
        ll2, gt2, ga2 = value_and_gradients(LikelihoodContext(network, features, params, members))
        a = np.concatenate([[ll], gt.ravel(), ga])
        b = np.concatenate([[ll2], gt2.ravel(), ga2])
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-6))))
        for t in (1.0, 0.5):
            mcmc_sweep(state, t, rng)
            tables_ok &= state.table == TypeTable.build(state.masks, state.ftype)
    report(6, worst <= 1e-9 and tables_ok,
           f"max relative difference {worst:.2e} (<= 1e-9); differential tables equal rebuilds: {tables_ok}")


# 7 ---------------------------------------------------------------------------


def _augmented_argmax(network, profiles, scheme, members, params, node):
    nodes = network.nodes + (node.id,)
    edges = set(network.edges) | {(node.id, y) for y in node.neighbors}
    aug = EgoNetwork(nodes, frozenset(edges), network.directed)
    feats = dict(profiles.node_features)
    feats[node.id] = node.profile
    cache = EdgeFeatureCache(aug, ProfileStore(profiles.feat_names, feats, profiles.ego_features), scheme)
    ctx = LikelihoodContext(aug, cache, params, np.zeros((params.k, aug.n), bool))
    best, arg = -np.inf, None
    for bits in itertools.product((False, True), repeat=params.k):
        m = np.concatenate([members, np.array(bits, bool)[:, None]], axis=1)
        v = log_likelihood(ctx.with_members(m))
        if v > best + 1e-10:
            best, arg = v, bits
    return np.array(arg)


def test_criterion_07_maintenance_exactness():
    agree = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 11))
        scheme = ("phi1", "psi1", "psi2")[seed % 3]
        network, profiles, features, params, members = random_instance(seed, n=8, k=k, leaves=4, scheme=scheme)
        params = ModelParams(params.thetas * 2, params.alphas)
        node = NewNode(99, rng.integers(0, 2, 4), tuple(int(v) for v in np.flatnonzero(rng.random(8) < 0.5)))
        got = predict_memberships(node, features, members, params)
        agree += int(np.array_equal(got, _augmented_argmax(network, profiles, scheme, members, params, node)))
    report(7, agree == 50, f"{agree}/50 instances equal the brute-force argmax")


# 8 ---------------------------------------------------------------------------


def test_criterion_08_seed_contract_and_benefit():
    contained = True
    s0, s3 = [], []
    for seed in range(10):
        net, prof, circles, _ = generate(PlantedSpec(n=60, k=2, seed=seed))
        feats = EdgeFeatureCache(net, prof, "phi1")
        rng = np.random.default_rng(seed)
        seeds = SeedSet(tuple(tuple(rng.choice(sorted(c), size=3, replace=False).tolist()) for c in circles.circles))
        res = fit_seeded(net, feats, seeds, FitConfig(k=2, seed=seed))
        contained &= all(set(s) <= res.circles.circles[k] for k, s in enumerate(seeds.seeds))
        out = seed_sweep(net, prof, circles, [0, 3], 2, 1, FitConfig(k=2, seed=seed))
        s0 += out[0]
        s3 += out[3]
    m0, m3 = float(np.mean(s0)), float(np.mean(s3))
    report(8, contained and m3 >= m0,
           f"seeds always contained: {contained}; mean 1-BER with 3 seeds {m3:.3f} vs none {m0:.3f}")


# 9 ---------------------------------------------------------------------------


def test_criterion_09_metric_calibration():
    rng = np.random.default_rng(9)
    n = 50
    vals = []
    for _ in range(10_000):
        # circle sizes and prediction rates both drawn uniformly; BER is 1 - (t + q) / 2 in expectation
        truth = set(np.flatnonzero(rng.random(n) < rng.random()).tolist()) or {0}
        pred = set(np.flatnonzero(rng.random(n) < rng.random()).tolist()) or {0}
        vals.append(ber(pred, truth))
    mean = float(np.mean(vals))

    def exhaustive(pred, truth):
        m = min(len(pred), len(truth))
        return max(np.mean([1 - ber(pred[r], truth[c]) for r, c in zip(rows, cols)])
                   for rows in itertools.permutations(range(len(pred)), m)
                   for cols in itertools.permutations(range(len(truth)), m))

    match_ok = True
    for seed in range(100):
        r = np.random.default_rng(seed)
        pred = [set(np.flatnonzero(r.random(10) < 0.4).tolist()) for _ in range(r.integers(1, 5))]
        truth = [set(np.flatnonzero(r.random(10) < 0.4).tolist()) for _ in range(r.integers(1, 5))]
        match_ok &= abs(match_circles(pred, truth).score - exhaustive(pred, truth)) <= 1e-12
    report(9, abs(mean - 0.5) <= 0.05 and match_ok,
           f"random predictor mean BER {mean:.4f} (0.5 +/- 0.05); matching equals exhaustive search: {match_ok}")


# 10 --------------------------------------------------------------------------


def _typed_network(n_base, copies, seed):
    """``copies`` duplicates of a base graph: every node keeps its features and memberships."""
    rng = np.random.default_rng(seed)
    base_edges = [(i, j) for i in range(n_base) for j in rng.choice(n_base, size=4, replace=False) if i < j]
    nodes = tuple(range(n_base * copies))
    edges = frozenset((i + c * n_base, j + c * n_base) for c in range(copies) for i, j in base_edges)
    names = tuple((f"c{l}", "v") for l in range(3))  # 3 binary leaves -> at most 8 feature types
    base_rows = rng.integers(0, 2, size=(n_base, 3))
    prof = ProfileStore(names, {v: base_rows[v % n_base] for v in nodes}, np.zeros(3))
    base_members = rng.random((2, n_base)) < 0.3  # K=2 -> at most 4 masks, 32 types
    members = np.tile(base_members, (1, copies))
    return EgoNetwork(nodes, edges), prof, members


def _sweep_seconds(n_base, copies, reps=5):
    net, prof, members = _typed_network(n_base, copies, 0)
    feats = EdgeFeatureCache(net, prof, "phi1", dense=False)
    params = ModelParams(np.random.default_rng(1).normal(size=(2, feats.dimension)), np.ones(2))
    state = MCMCState(net, feats, params, members)
    rng = np.random.default_rng(2)
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        mcmc_sweep(state, 1.0, rng)
        times.append(time.perf_counter() - t)
    return float(np.median(times)), len(state.table)


def test_criterion_10_mcmc_scaling():
    t1, types1 = _sweep_seconds(1000, 1)
    t2, types2 = _sweep_seconds(1000, 2)
    ratio = t2 / t1
    report(10, ratio <= 1.35 and max(types1, types2) <= 50,
           f"per-sweep time N=1000 {t1 * 1e3:.1f} ms, N=2000 {t2 * 1e3:.1f} ms, ratio {ratio:.2f} (<= 1.35); "
           f"types {types1} -> {types2} (<= 50)")
