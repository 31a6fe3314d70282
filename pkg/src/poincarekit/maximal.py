"""Localized Hardy-Littlewood maximal functions on finite spaces.

Fields are numpy arrays aligned with ``space.nodes``.  Balls are closed, so
the supremum over radii in (0, s] is a maximum over the finitely many
distances d(x, y) <= s; the singleton ball {x} supplies the small-radius
limit.
"""
from __future__ import annotations

import numpy as np

from .errors import NegativeInput, ValidationError
from .space import MetricMeasureSpace, doubling_constant


def _nonneg(space, f, what="f"):
    f = space.field(f)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise NegativeInput(f"{what} must be finite and non-negative")
    return f


def ball_power_averages(space: MetricMeasureSpace, f, p: float) -> np.ndarray:
    """avg_{B(x, d_k)} f^p for every center x and every sorted distance d_k.

    Entries that do not correspond to a complete closed ball are -inf.
    """
    order, _, ends = space.sorted_rows
    w = (np.power(f, p) * space.measure)[order]
    avg = np.cumsum(w, axis=1) / space.cumulative_measure
    return np.where(ends, avg, -np.inf)


def maximal_function(space: MetricMeasureSpace, f, p: float = 1.0, s: float = np.inf) -> np.ndarray:
    """M_{p,s} f(x) = sup_{0 < r <= s} (avg_{B(x,r)} f^p)^{1/p} at every node."""
    if p < 1:
        raise ValidationError("p must be >= 1")
    if not s > 0:
        raise ValidationError("scale s must be positive")
    f = _nonneg(space, f)
    _, dsorted, _ = space.sorted_rows
    avg = ball_power_averages(space, f, p)
    avg = np.where(dsorted <= s, avg, -np.inf)
    best = avg.max(axis=1)
    return best if p == 1 else np.power(best, 1.0 / p)


def maximal_at(space: MetricMeasureSpace, f, p: float, s: float, nodes) -> np.ndarray:
    """M_{p,s} f restricted to a few node indices."""
    f = _nonneg(space, f)
    order, dsorted, ends = space.sorted_rows
    rows = np.atleast_1d(np.asarray(nodes, dtype=np.intp))
    o = order[rows]
    w = (np.power(f, p) * space.measure)[o]
    avg = np.cumsum(w, axis=1) / space.cumulative_measure[rows]
    ok = ends[rows] & (dsorted[rows] <= s)
    best = np.where(ok, avg, -np.inf).max(axis=1)
    return best if p == 1 else np.power(best, 1.0 / p)


def superlevel_set(space, f, p, s, lam) -> np.ndarray:
    """Boolean mask of E = {z : M_{p,s} f(z) > lam}."""
    return maximal_function(space, f, p, s) > lam


def weak_type_margin(space, f, p, s, lam, x, r, doubling=None) -> float:
    """RHS - LHS of the weak-type estimate

        mu({M_{p,s} f > lam} & B(x, r)) <= D^3 ||f 1_{B(x, r+s)}||_p^p / lam^p.
    """
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    f = _nonneg(space, f)
    D = doubling_constant(space) if doubling is None else doubling
    xi = space.idx(x)
    E = superlevel_set(space, f, p, s, lam)
    in_ball = space.metric[xi] <= r
    lhs = float(space.measure[E & in_ball].sum())
    big = space.metric[xi] <= r + s
    rhs = D**3 * float(np.sum(np.power(f[big], p) * space.measure[big])) / lam**p
    return rhs - lhs


def max_max_margin(space, f, p, s, r, lam, x, doubling=None) -> float:
    """D^4 (M_{p,s+r} f(x))^p / lam^p - M_r 1_E(x) with E = {M_{p,s} f > lam}."""
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    f = _nonneg(space, f)
    D = doubling_constant(space) if doubling is None else doubling
    xi = space.idx(x)
    E = superlevel_set(space, f, p, s, lam).astype(float)
    lhs = float(maximal_at(space, E, 1.0, r, xi)[0])
    big = float(maximal_at(space, f, p, s + r, xi)[0])
    return D**4 * big**p / lam**p - lhs


def maximal_scale_table(space: MetricMeasureSpace, f, p: float) -> np.ndarray:
    """Running max of ball power averages along each row of ``space.sorted_rows``.

    Entry [x, k] is (M_{p,s} f(x))^p for any s with the k-th sorted distance
    <= s < the next distinct one.
    """
    f = _nonneg(space, f)
    return np.maximum.accumulate(ball_power_averages(space, f, p), axis=1)


def maximal_at_scales(space: MetricMeasureSpace, f, p: float, nodes, scales) -> np.ndarray:
    """M_{p,s_k} f(x_k) for paired arrays of node indices and scales."""
    table = maximal_scale_table(space, f, p)
    _, dsorted, _ = space.sorted_rows
    nodes = np.asarray(nodes, dtype=np.intp)
    scales = np.asarray(scales, dtype=float)
    out = np.empty(nodes.shape, dtype=float)
    for k, (x, s) in enumerate(zip(nodes.ravel(), scales.ravel())):
        pos = np.searchsorted(dsorted[x], s, side="right") - 1
        out.flat[k] = table[x, pos]
    return out if p == 1 else np.power(out, 1.0 / p)
