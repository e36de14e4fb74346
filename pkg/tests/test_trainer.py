import math

import numpy as np
import pytest

from conftest import random_instance
from egocircles.data import EgoNetwork, ModelParams, ProfileStore
from egocircles.features import EdgeFeatureCache
from egocircles.model import LikelihoodContext, objective, value_and_gradients
from egocircles.optimize import NonFiniteObjective, owlqn, pseudo_gradient
from egocircles.synth import PlantedSpec, generate
from egocircles.trainer import (
    AUTO,
    FitConfig,
    bic,
    coordinate_ascent,
    fit,
    param_count,
    quasi_newton_step,
    select_k,
)


@pytest.mark.parametrize("a,lam", [(3.0, 1.0), (-2.5, 0.5), (0.4, 1.0), (-0.3, 2.0), (5.0, 0.0)])
def test_owlqn_soft_threshold(a, lam):
    res = owlqn(lambda x: (0.5 * (x[0] - a) ** 2, np.array([x[0] - a])), np.array([1.7]), lam=lam)
    assert res.x[0] == pytest.approx(np.sign(a) * max(abs(a) - lam, 0.0), abs=1e-6)


def test_owlqn_separable_quadratic():
    a = np.array([3.0, -0.2, 0.0, -4.0, 1.1])
    w = np.array([1.0, 2.0, 0.5, 3.0, 1.0])
    lam = 1.0
    res = owlqn(lambda x: (0.5 * (w * (x - a) ** 2).sum(), w * (x - a)), np.zeros(5), lam=lam, max_iter=500)
    expect = np.sign(a) * np.maximum(np.abs(a) - lam / w, 0)
    assert np.allclose(res.x, expect, atol=1e-6)


def test_owlqn_mask_leaves_unpenalised_coordinates():
    res = owlqn(lambda x: (0.5 * ((x - 0.5) ** 2).sum(), x - 0.5), np.zeros(2), lam=1.0, mask=np.array([True, False]))
    assert res.x[0] == 0.0
    assert res.x[1] == pytest.approx(0.5, abs=1e-6)


def test_owlqn_rejects_non_finite():
    with pytest.raises(NonFiniteObjective):
        owlqn(lambda x: (float("nan"), np.zeros(1)), np.zeros(1))


def test_pseudo_gradient_at_zero_inside_band():
    pg = pseudo_gradient(np.zeros(2), np.array([0.5, -3.0]), 1.0, np.array([True, True]))
    assert pg.tolist() == [0.0, -2.0]


def test_fixed_point_at_unconstrained_optimum():
    network, _, features, params, members = random_instance(3, n=8, k=2)
    ctx = LikelihoodContext(network, features, params, members, lam=0.0)
    K, D = params.k, features.dimension

    def fun(vec):
        ll, gt, ga = value_and_gradients(ctx.with_params(ModelParams.from_flat(vec, K, D)))
        return -ll, -np.concatenate([gt.ravel(), ga])

    opt = ModelParams.from_flat(owlqn(fun, params.flat(), max_iter=5000, tol=0.0, gtol=1e-10).x, K, D)
    again = quasi_newton_step(ctx.with_params(opt), max_iter=500)
    assert abs(objective(ctx.with_params(again)) - objective(ctx.with_params(opt))) < 1e-9


def test_parameter_step_never_lowers_objective():
    for seed in range(5):
        network, _, features, params, members = random_instance(seed, n=10, k=2)
        ctx = LikelihoodContext(network, features, params, members, lam=1.0)
        assert objective(ctx.with_params(quasi_newton_step(ctx))) >= objective(ctx) - 1e-12


def test_large_lambda_gives_sparse_weights():
    network, _, features, params, members = random_instance(7, n=12, k=3, leaves=5)
    ctx = LikelihoodContext(network, features, params, members, lam=100.0)
    out = quasi_newton_step(ctx, max_iter=200)
    assert np.mean(out.thetas == 0.0) >= 0.5


def test_bic_arithmetic():
    assert bic(-100.0, 10, 50) == pytest.approx(200 + 10 * math.log(50))
    assert bic(-100.0, 10, 50) == pytest.approx(239.120, abs=1e-3)
    assert bic(-7.0, 0, 3) == 14.0
    with pytest.raises(ValueError):
        bic(-1.0, 1, 0)


def test_param_count_counts_constant_and_alpha():
    # F profile features plus the constant, plus one trade-off per circle
    F = 6
    assert param_count(3, F + 1) == 3 * (F + 2)


def test_complete_graph_single_circle_covers_everyone():
    n = 8
    nodes = tuple(range(n))
    edges = frozenset((i, j) for i in nodes for j in nodes if i < j)
    net = EgoNetwork(nodes, edges)
    prof = ProfileStore((("c", "a"), ("c", "b")), {v: [1, 0] for v in nodes}, [1, 0])
    feats = EdgeFeatureCache(net, prof, "phi1")
    res = coordinate_ascent(net, feats, 1, FitConfig(k=1, lam=0.0, seed=0))
    assert res.circles.circles[0] == set(nodes)


def test_empty_graph_fit_is_monotone():
    nodes = tuple(range(6))
    net = EgoNetwork(nodes, frozenset())
    prof = ProfileStore((("c", "a"),), {v: [v % 2] for v in nodes}, [0])
    feats = EdgeFeatureCache(net, prof, "phi1")
    res = coordinate_ascent(net, feats, 1, FitConfig(k=1, lam=0.0, seed=2))
    assert all(b >= a for a, b in zip(res.objective_trace, res.objective_trace[1:]))
    assert math.isnan(res.bic)


@pytest.mark.parametrize("seed", range(5))
def test_objective_trace_is_monotone(seed):
    net, prof, _, _ = generate(PlantedSpec(n=40, k=2, seed=seed))
    feats = EdgeFeatureCache(net, prof, "phi1")
    res = coordinate_ascent(net, feats, 2, FitConfig(k=2, seed=seed, max_outer_iters=10))
    trace = res.objective_trace
    assert all(b >= a for a, b in zip(trace, trace[1:]))


def test_fit_is_deterministic():
    net, prof, _, _ = generate(PlantedSpec(n=30, k=2, seed=1))
    feats = EdgeFeatureCache(net, prof, "phi1")
    a = fit(net, feats, FitConfig(k=2, seed=5))
    b = fit(net, feats, FitConfig(k=2, seed=5))
    assert a.circles.circles == b.circles.circles
    assert np.array_equal(a.params.thetas, b.params.thetas)


def test_select_k_single_planted_circle():
    net, prof, _, _ = generate(PlantedSpec(n=40, k=1, seed=0))
    feats = EdgeFeatureCache(net, prof, "phi1")
    res = select_k(net, feats, FitConfig(k=AUTO, k_max=3, seed=0))
    assert res.k == 1


def test_fit_result_json_drops_empty_circles():
    net, prof, _, _ = generate(PlantedSpec(n=30, k=2, seed=1))
    feats = EdgeFeatureCache(net, prof, "phi1")
    res = fit(net, feats, FitConfig(k=3, seed=0))
    doc = res.to_json()
    assert doc["k"] == sum(1 for c in res.circles.circles if c)
    assert len(doc["theta"]) == len(doc["alpha"]) == doc["k"]


@pytest.mark.parametrize("bad", [dict(k=-1), dict(lam=-1.0), dict(max_outer_iters=0), dict(k="many")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        FitConfig(**bad)


@pytest.mark.xfail(reason="coordinate ascent from empty circles settles in merged-circle optima; see decisions ledger",
                   strict=False)
def test_planted_disjoint_pair_recovery():
    from egocircles.evaluate import match_circles

    scores = []
    for seed in range(20):
        net, prof, circles, _ = generate(PlantedSpec(n=30, k=2, overlap_structure="disjoint", seed=seed))
        res = fit(net, EdgeFeatureCache(net, prof, "phi1"), FitConfig(k=2, seed=seed))
        scores.append(match_circles(res.circles, circles).score)
    assert np.mean(scores) >= 0.95
