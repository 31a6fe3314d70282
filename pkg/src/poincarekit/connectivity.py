"""The connectivity functional alpha^p(C, tau) and A_p-connectivity constants.

For a pair (x, y) with r = d(x, y), an obstacle is a field g with values in
[0, 1] and M_{p,Cr} g(x) + M_{p,Cr} g(y) < tau.  alpha is the worst, over
pairs and obstacles, of the cheapest normalized integral (1/r) int_gamma g
over paths of length <= C r.  Everything reported here is a lower bound
carried by an explicit witness obstacle, exact only for the exhaustive
indicator enumeration on small spaces.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .curves import CurvePath, curve_integral, exact_curve_integral, min_obstruction_path
from .errors import Inadmissible, NoFeasiblePath, ValidationError
from .maximal import maximal_at
from .space import MetricMeasureSpace


@dataclass
class SearchConfig:
    """Knobs for the seeded lower-bound searches (alpha and Poincare)."""

    seed: int = 0
    slack: float = 1e-6
    # alpha search
    oracle_cap: int = 8
    pair_cap: int = 12
    pair_samples: int = 8
    families: tuple = ("indicator", "level", "ascent")
    greedy_steps: int = 8
    greedy_candidates: int = 24
    ascent_starts: int = 1
    ascent_sweeps: int = 2
    ascent_pairs: int = 2
    # Poincare search
    restarts: int = 4
    sweeps: int = 12
    balls_per_radius: int = 2
    greedy_sets: int = 3
    quadratic: bool = True


@dataclass
class ObstacleFunction:
    values: np.ndarray
    x: int
    y: int
    p: float
    C: float
    tau: float
    attained: float

    @property
    def admissible(self) -> bool:
        return (self.attained < self.tau and np.all(self.values >= 0)
                and np.all(self.values <= 1))

    def to_dict(self, space) -> dict:
        return {
            "x": space.nodes[self.x], "y": space.nodes[self.y],
            "p": self.p, "C": self.C, "tau": self.tau, "attained": self.attained,
            "values": {str(v): repr(float(g)) for v, g in zip(space.nodes, self.values)},
        }


@dataclass
class AlphaRow:
    tau: float
    alpha: float
    x: int | None
    y: int | None
    witness: ObstacleFunction | None
    exact: bool = False


@dataclass
class AlphaProfile:
    p: float
    C: float
    r0: float | None
    rows: list = field(default_factory=list)

    def to_rows(self, space):
        out = []
        for row in self.rows:
            pair = ("", "") if row.x is None else (space.nodes[row.x], space.nodes[row.y])
            out.append({"tau": row.tau, "alpha": row.alpha, "x": pair[0], "y": pair[1],
                        "exact": row.exact})
        return out

    def to_dict(self, space) -> dict:
        rows = []
        for row, flat in zip(self.rows, self.to_rows(space)):
            flat = dict(flat)
            flat["witness"] = None if row.witness is None else row.witness.to_dict(space)
            rows.append(flat)
        return {"schema_version": 1, "p": self.p, "C": self.C, "r0": self.r0, "rows": rows}


def endpoint_sum(space, g, p, C, xi, yi) -> float:
    """M_{p,Cr} g(x) + M_{p,Cr} g(y) with r = d(x, y)."""
    r = space.metric[xi, yi]
    m = maximal_at(space, g, p, C * r, [xi, yi])
    return float(m[0] + m[1])


def make_obstacle(space, g, p, C, tau, x, y, *, by_index=True) -> ObstacleFunction:
    xi, yi = (x, y) if by_index else (space.idx(x), space.idx(y))
    g = np.asarray(g, dtype=float)
    return ObstacleFunction(g, xi, yi, p, C, tau, endpoint_sum(space, g, p, C, xi, yi))


def _check(obstacle: ObstacleFunction):
    g = obstacle.values
    if np.any(g < 0) or np.any(g > 1):
        raise Inadmissible("obstacle values must lie in [0, 1]",
                           attained=obstacle.attained, tau=obstacle.tau)
    if not obstacle.attained < obstacle.tau:
        raise Inadmissible(
            f"maximal-function sum {obstacle.attained!r} is not below tau={obstacle.tau!r}",
            attained=obstacle.attained, tau=obstacle.tau)


def alpha_given_g(space: MetricMeasureSpace, p, C, x, y, g, *, tau=None, by_index=True,
                  return_path=False):
    """(1/r) min over paths of length <= C r of the integral of g.

    ``g`` is either an :class:`ObstacleFunction` (its admissibility is
    checked) or a plain field, checked against ``tau`` when given.
    """
    if isinstance(g, ObstacleFunction):
        obstacle = g
        xi, yi = obstacle.x, obstacle.y
        _check(obstacle)
    else:
        xi, yi = (x, y) if by_index else (space.idx(x), space.idx(y))
        if tau is not None:
            _check(make_obstacle(space, g, p, C, tau, xi, yi))
        obstacle = None
    values = obstacle.values if obstacle is not None else np.asarray(g, dtype=float)
    r = space.metric[xi, yi]
    if r <= 0:
        raise ValidationError("alpha needs two distinct points")
    path = min_obstruction_path(space, xi, yi, values, C * r, by_index=True)
    value = curve_integral(path, values) / r
    return (value, path) if return_path else value


def scale_to_admissible(space, shape, p, C, tau, xi, yi, slack=1e-6):
    """Largest c with c*shape in [0, 1] and endpoint sum <= tau (1 - slack).

    Returns the scaled obstacle, or None when shape vanishes or tau <= 0.
    """
    shape = np.asarray(shape, dtype=float)
    top = float(shape.max(initial=0.0))
    if top <= 0 or tau <= 0:
        return None
    S = endpoint_sum(space, shape, p, C, xi, yi)
    c = 1.0 / top
    if S > 0:
        c = min(c, tau * (1.0 - slack) / S)
    for _ in range(60):
        g = np.minimum(c * shape, 1.0)
        ob = make_obstacle(space, g, p, C, tau, xi, yi)
        if ob.admissible:
            return ob
        c *= 1.0 - 1e-9
    return None


def _value(space, ob):
    try:
        return alpha_given_g(space, ob.p, ob.C, ob.x, ob.y, ob)
    except NoFeasiblePath:
        return -math.inf


def probe_pairs(space: MetricMeasureSpace, config: SearchConfig, r0=None, C=None):
    """Pairs (x, y), x < y, probed by the alpha search."""
    n = space.n
    d = space.metric
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)
             if r0 is None or d[i, j] <= r0]
    if C is not None:
        # pairs that admit no path within budget contribute nothing
        pairs = [(i, j) for i, j in pairs if space.dist[i, j] <= C * d[i, j] * (1 + 1e-12)]
    if n <= config.pair_cap or len(pairs) <= config.pair_samples:
        return pairs
    rng = np.random.default_rng(config.seed)
    dvals = np.array([d[i, j] for i, j in pairs])
    far = int(np.argmax(dvals))
    chosen = {pairs[far]}
    # stratify by distance quantile
    order = np.argsort(dvals, kind="stable")
    bins = np.array_split(order, config.pair_samples)
    for b in bins:
        if b.size:
            chosen.add(pairs[int(rng.choice(b))])
    return sorted(chosen)


def _region(space, xi, yi, C):
    """Nodes lying on some path of length <= C r between x and y."""
    r = space.metric[xi, yi]
    return np.flatnonzero(space.dist[xi] + space.dist[yi] <= C * r * (1 + 1e-12))


def _indicator(n, nodes):
    g = np.zeros(n)
    g[list(nodes)] = 1.0
    return g


def _search_pair(space, p, C, tau, xi, yi, config, rng, families):
    n = space.n
    best = (-math.inf, None)

    def consider(shape):
        nonlocal best
        ob = scale_to_admissible(space, shape, p, C, tau, xi, yi, config.slack)
        if ob is None:
            return -math.inf
        val = _value(space, ob)
        if val > best[0]:
            best = (val, ob)
        return val

    region = [int(v) for v in _region(space, xi, yi, C)]
    inner = [v for v in region if v not in (xi, yi)]
    if "indicator" in families:
        geo = min_obstruction_path(space, xi, yi, np.zeros(n), C * space.metric[xi, yi],
                                   by_index=True)
        starts = [set(geo.nodes[1:-1])] if len(geo.nodes) > 2 else []
        if inner:
            mid = min(inner, key=lambda v: (abs(space.metric[xi, v] - space.metric[yi, v]), v))
            starts.append({mid})
        starts.append({xi, yi})
        if len(region) > config.greedy_candidates:
            pool = sorted(int(v) for v in rng.choice(region, config.greedy_candidates, replace=False))
        else:
            pool = region
        for S in starts:
            if not S:
                continue
            S = set(S)
            cur = consider(_indicator(n, S))
            for _ in range(config.greedy_steps):
                moves = []
                for v in sorted(set(pool) | S):
                    T = S ^ {v}
                    if T:
                        moves.append((consider(_indicator(n, T)), v))
                if not moves:
                    break
                val, v = max(moves, key=lambda t: (t[0], -t[1]))
                if val <= cur:
                    break
                S ^= {v}
                cur = val
    if "level" in families:
        for src in (xi, yi):
            levels = np.unique(space.metric[src, region])
            levels = levels[levels > 0]
            for a, b in itertools.combinations_with_replacement(levels, 2):
                shell = (space.metric[src] >= a) & (space.metric[src] <= b)
                consider(shell.astype(float))
        r = space.metric[xi, yi]
        for m in inner:
            for rho in (0.5 * r, r):
                consider(np.maximum(0.0, 1.0 - space.metric[m] / rho))
    return best


def _ascent(space, p, C, tau, ob, config, rng, region):
    """Coordinate ascent on the scaled-obstacle value, starting from ``ob``."""
    xi, yi = ob.x, ob.y
    shape = ob.values.copy()
    cur = _value(space, ob)
    best = (cur, ob)
    for _ in range(config.ascent_sweeps):
        improved = False
        for v in region:
            for new in (0.0, 1.0, min(1.0, 2 * shape[v]), 0.5 * shape[v]):
                if new == shape[v]:
                    continue
                trial = shape.copy()
                trial[v] = new
                cand = scale_to_admissible(space, trial, p, C, tau, xi, yi, config.slack)
                if cand is None:
                    continue
                val = _value(space, cand)
                if val > cur:
                    cur, shape, improved = val, trial, True
                    best = (val, cand)
        if not improved:
            break
    return best


def exhaustive_alpha(space: MetricMeasureSpace, p, C, tau, config: SearchConfig | None = None,
                     r0=None) -> AlphaRow:
    """Best scaled indicator c * 1_S over every node subset S and every pair."""
    config = config or SearchConfig()
    if space.n > config.oracle_cap:
        from .errors import TooLarge
        raise TooLarge(f"{space.n} nodes exceeds the enumeration cap {config.oracle_cap}")
    best = AlphaRow(tau, 0.0, None, None, None, exact=True)
    if tau <= 0:
        return best
    n = space.n
    pairs = probe_pairs(space, SearchConfig(pair_cap=n), r0=r0, C=C)
    for xi, yi in pairs:
        for k in range(1, n + 1):
            for S in itertools.combinations(range(n), k):
                ob = scale_to_admissible(space, _indicator(n, S), p, C, tau, xi, yi, config.slack)
                if ob is None:
                    continue
                val = _value(space, ob)
                if val > best.alpha:
                    best = AlphaRow(tau, val, xi, yi, ob, exact=True)
    return best


def alpha_estimate(space: MetricMeasureSpace, p, C, tau, config: SearchConfig | None = None,
                   r0=None, exhaustive=None) -> AlphaRow:
    """Lower bound on alpha^p(C, tau) (or its localized version with pairs d <= r0).

    Exhaustive over indicator obstacles when the space is within
    ``config.oracle_cap`` nodes (or ``exhaustive=True``); otherwise a seeded
    search over greedy indicator sets, distance-shell and tent obstacles,
    refined by coordinate ascent on the best pairs.
    """
    config = config or SearchConfig()
    if exhaustive is None:
        exhaustive = space.n <= config.oracle_cap
    if tau <= 0:
        return AlphaRow(tau, 0.0, None, None, None, exact=True)
    if exhaustive:
        return exhaustive_alpha(space, p, C, tau, config, r0=r0)
    seed = config.seed + int(round(tau * 1e9)) % (2**31)
    rng = np.random.default_rng(seed)
    per_pair = []
    for xi, yi in probe_pairs(space, config, r0=r0, C=C):
        val, ob = _search_pair(space, p, C, tau, xi, yi, config, rng, config.families)
        per_pair.append((val, xi, yi, ob))
    per_pair.sort(key=lambda t: (-t[0], t[1], t[2]))
    if "ascent" in config.families:
        refined = []
        for val, xi, yi, ob in per_pair[:config.ascent_pairs]:
            region = [int(v) for v in _region(space, xi, yi, C)]
            starts = [ob] if ob is not None else []
            for _ in range(config.ascent_starts):
                shape = rng.random(space.n) * np.isin(np.arange(space.n), region)
                cand = scale_to_admissible(space, shape, p, C, tau, xi, yi, config.slack)
                if cand is not None:
                    starts.append(cand)
            for start in starts:
                v2, ob2 = _ascent(space, p, C, tau, start, config, rng, region)
                refined.append((v2, xi, yi, ob2))
        per_pair.extend(refined)
    per_pair = [t for t in per_pair if t[3] is not None]
    if not per_pair:
        return AlphaRow(tau, 0.0, None, None, None)
    val, xi, yi, ob = max(per_pair, key=lambda t: (t[0], -t[1], -t[2]))
    if val <= 0:
        return AlphaRow(tau, max(val, 0.0), xi, yi, ob)
    return AlphaRow(tau, val, xi, yi, ob)


def alpha_profile(space, p, C, tau_grid, config=None, r0=None, exhaustive=None) -> AlphaProfile:
    """Rows for an increasing tau grid; witnesses carry forward since
    admissible families grow with tau, which keeps the rows monotone."""
    profile = AlphaProfile(p, C, r0)
    prev = None
    for tau in sorted(float(t) for t in tau_grid):
        row = alpha_estimate(space, p, C, tau, config, r0=r0, exhaustive=exhaustive)
        if prev is not None and prev.witness is not None and prev.alpha > row.alpha:
            w = prev.witness
            carried = ObstacleFunction(w.values, w.x, w.y, w.p, w.C, tau, w.attained)
            row = AlphaRow(tau, prev.alpha, w.x, w.y, carried, exact=row.exact)
        profile.rows.append(row)
        prev = row
    return profile


def ap_connectivity_constant(space, p, C, tau_grid, config=None, r0=None, exhaustive=None,
                             return_profile=False):
    """max over the tau grid of alpha(tau) / tau: the smallest C_A consistent
    with alpha(C, tau) <= C_A tau on the probed grid."""
    profile = alpha_profile(space, p, C, [t for t in tau_grid if t > 0], config, r0, exhaustive)
    value = max((row.alpha / row.tau for row in profile.rows), default=0.0)
    return (value, profile) if return_profile else value


def definition_ap_constant(space, p, C, shapes=None, r0=None) -> float:
    """C_A read directly off the A_p-connectivity definition.

    max over pairs and shapes g of (min_{Len <= Cr} int g) / (r (M g(x) + M g(y))).
    The default shapes are all node-subset indicators.
    """
    n = space.n
    if shapes is None:
        shapes = [_indicator(n, S) for k in range(1, n + 1)
                  for S in itertools.combinations(range(n), k)]
    best = 0.0
    for xi, yi in probe_pairs(space, SearchConfig(pair_cap=n), r0=r0, C=C):
        r = space.metric[xi, yi]
        for g in shapes:
            S = endpoint_sum(space, g, p, C, xi, yi)
            if S <= 0:
                continue
            path = min_obstruction_path(space, xi, yi, g, C * r, by_index=True)
            best = max(best, curve_integral(path, g) / (r * S))
    return best


@dataclass
class SublinearityReport:
    K: float
    scaled_admissible: bool
    scaled_attained: float
    cost: Fraction
    scaled_cost: Fraction
    linearity_residual: Fraction
    alpha_slack: float | None

    @property
    def slack(self) -> float:
        vals = [float(-abs(self.linearity_residual))]
        if self.alpha_slack is not None:
            vals.append(self.alpha_slack)
        return min(vals)


def sublinearity_check(space, p, C, tau, K, g: ObstacleFunction, *, exact_alpha=None) -> SublinearityReport:
    """Check alpha(C, K tau) <= K alpha(C, tau) through its mechanism.

    ``g`` must be admissible at level K tau.  Verifies g / K is admissible at
    level tau and that cost(g) = K cost(g / K) in exact rational arithmetic.
    With ``exact_alpha=(alpha_tau, alpha_Ktau)`` also reports
    K alpha(tau) - alpha(K tau).
    """
    if K < 1:
        raise ValidationError("K must be >= 1")
    if abs(g.tau - K * tau) > 1e-12 * max(1.0, K * tau):
        g = ObstacleFunction(g.values, g.x, g.y, g.p, g.C, K * tau, g.attained)
    _check(g)
    xi, yi = g.x, g.y
    r = space.metric[xi, yi]
    Kf = Fraction(K)
    scaled_exact = [Fraction(float(v)) / Kf for v in g.values]
    scaled = np.array([float(v) for v in scaled_exact])
    ob = make_obstacle(space, scaled, p, C, tau, xi, yi)
    path_g = min_obstruction_path(space, xi, yi, list(g.values), C * r, by_index=True, exact=True)
    cost_g = exact_curve_integral(path_g, g.values)
    path_s = _exact_path(space, xi, yi, scaled_exact, C * r)
    cost_s = _exact_integral(path_s, scaled_exact)
    slack = None
    if exact_alpha is not None:
        a_tau, a_Ktau = exact_alpha
        slack = K * a_tau - a_Ktau
    return SublinearityReport(K, ob.admissible, ob.attained, cost_g, cost_s,
                              cost_g - Kf * cost_s, slack)


def _exact_path(space, xi, yi, values, budget):
    from .curves import _solve
    found = _solve(space, xi, yi, values, budget, exact=True)
    if not found:
        raise NoFeasiblePath("no path within budget")
    return CurvePath.from_nodes(space, found[0].path)


def _exact_integral(path, values):
    total = Fraction(0)
    for k, w in enumerate(path.lengths):
        total += Fraction(w) * (values[path.nodes[k]] + values[path.nodes[k + 1]]) / 2
    return total
