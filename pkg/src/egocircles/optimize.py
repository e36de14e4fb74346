"""Orthant-wise limited-memory quasi-Newton minimisation (OWL-QN).

Minimises ``f(x) + lam * sum_{i in mask} |x_i|`` for a smooth ``f`` supplied
as a callable returning ``(value, gradient)``.  Every accepted step strictly
lowers the penalised objective; when the line search fails the current point
is returned unchanged.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class NonFiniteObjective(FloatingPointError):
    pass


@dataclass
class OWLQNResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    history: list


def pseudo_gradient(x, g, lam, mask):
    """Minimum-norm subgradient of the penalised objective."""
    if lam == 0:
        return g.copy()
    pg = g.copy()
    m = mask
    xm, gm = x[m], g[m]
    out = np.where(xm > 0, gm + lam, np.where(xm < 0, gm - lam, 0.0))
    at0 = xm == 0
    right = gm + lam
    left = gm - lam
    out = np.where(at0 & (right < 0), right, out)
    out = np.where(at0 & (left > 0), left, out)
    pg[m] = out
    return pg


def _two_loop(pg, pairs):
    q = pg.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


def _project_bounds(pg, x, lower, upper):
    # drop components that would push a coordinate sitting on a bound outside the box
    blocked = ((x <= lower) & (pg > 0)) | ((x >= upper) & (pg < 0))
    pg = pg.copy()
    pg[blocked] = 0.0
    return pg


def owlqn(fun, x0, lam=0.0, mask=None, memory=10, max_iter=200, tol=1e-9, gtol=1e-6,
          max_backtrack=40, lower=None, upper=None):
    x = np.asarray(x0, dtype=float).copy()
    bounded = lower is not None or upper is not None
    if bounded:
        lower = np.full(x.size, -np.inf) if lower is None else np.broadcast_to(lower, x.shape)
        upper = np.full(x.size, np.inf) if upper is None else np.broadcast_to(upper, x.shape)
        x = np.clip(x, lower, upper)
    if mask is None:
        mask = np.ones(x.size, dtype=bool)
    mask = np.asarray(mask, dtype=bool)

    def penalised(x):
        f, g = fun(x)
        f = float(f)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective("objective or gradient is not finite")
        return f + lam * np.abs(x[mask]).sum(), np.asarray(g, dtype=float)

    F, g = penalised(x)
    history = [F]
    pairs: deque = deque(maxlen=memory)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = pseudo_gradient(x, g, lam, mask)
        if bounded:
            pg = _project_bounds(pg, x, lower, upper)
        if np.max(np.abs(pg), initial=0.0) <= gtol:
            converged = True
            break
        d = _two_loop(pg, list(pairs))
        if bounded:
            d[((x <= lower) & (d < 0)) | ((x >= upper) & (d > 0))] = 0.0
        if lam:
            # keep only components that agree with steepest descent on the L1 coordinates
            bad = mask & (d * pg >= 0)
            d[bad] = 0.0
        if d @ pg >= 0:
            pairs.clear()
            d = -pg
        orthant = np.where(x != 0, np.sign(x), np.sign(-pg))
        step = 1.0 if pairs else min(1.0, 1.0 / max(np.linalg.norm(pg), 1e-12))
        accepted = False
        for _ in range(max_backtrack):
            xn = x + step * d
            if lam:
                flip = mask & (np.sign(xn) != orthant)
                xn[flip] = 0.0
            if bounded:
                xn = np.clip(xn, lower, upper)
            try:
                Fn, gn = penalised(xn)
            except NonFiniteObjective:
                step *= 0.5
                continue
            if Fn <= F + 1e-4 * (pg @ (xn - x)) and Fn < F:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        s = xn - x
        y = gn - g
        sy = s @ y
        if sy > 1e-12:
            pairs.append((s, y, 1.0 / sy))
        rel = (F - Fn) / max(abs(F), abs(Fn), 1.0)
        x, F, g = xn, Fn, gn
        history.append(F)
        if rel < tol:
            converged = True
            break
    return OWLQNResult(x, F, it, converged, history)
