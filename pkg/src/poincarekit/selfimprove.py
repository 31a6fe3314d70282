"""Self-improvement machinery: explicit epsilon bounds and the gap-replacement step.

Given an obstacle g admissible for (x, y) at level tau with exponent q and
length factor L = C / (1 - delta), the step builds nested level sets
E_i = {M_{q, delta L r} g > M^i tau / 2}, the stacked field
h = (1/k) sum_i M^i 1_{E_i}, a cheapest curve for h of length <= C r, and
then reroutes the runs of that curve lying in the chosen level set through
cheapest curves for g at the smaller scale.  Every inequality used along
the way is evaluated and returned as part of the trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .connectivity import (ObstacleFunction, SearchConfig, alpha_given_g, endpoint_sum,
                           make_obstacle, _check)
from .curves import (CurvePath, curve_integral, curve_length, exact_curve_integral,
                     min_obstruction_path)
from .errors import (GapInfeasible, InvalidExponent, NoFeasiblePath, NoPathBound,
                     ValidationError, WindowViolated)
from .maximal import maximal_at, maximal_function
from .poincare import pi_constant, pi_ratio
from .space import MetricMeasureSpace, doubling_constant, within_budget

# relative allowance in the window test M^{k(p-q)/p} <= 2, absorbing the
# last-bit rounding of k (p - q)
WINDOW_RTOL = 1e-12

ASYMPTOTIC_NOTE = (
    "As p grows the bound behaves like p / (2^13 C_PI D^3), as follows from the exponent "
    "13p+3 of the explicit formula; the stated asymptotic p / (2^12 C_PI D^3) is a factor "
    "2 larger. Values here evaluate the explicit formula.")


# -- explicit bounds ------------------------------------------------------------

def _check_p(p):
    if not p > 1:
        raise InvalidExponent(f"p must exceed 1, got {p!r}")


def kz_epsilon_log2(D: float, p: float, C_PI: float) -> float:
    """log2 of p / (2^{13p+3} C_PI^p D^{3p+4})^{1/(p-1)}."""
    _check_p(p)
    if D < 1 or not C_PI > 0:
        raise ValidationError("need D >= 1 and C_PI > 0")
    denom = (13 * p + 3) + p * math.log2(C_PI) + (3 * p + 4) * math.log2(D)
    return math.log2(p) - denom / (p - 1)


def kz_epsilon_bound(D: float, p: float, C_PI: float) -> float:
    """The explicit self-improvement bound in terms of D, p and C_PI."""
    return 2.0 ** kz_epsilon_log2(D, p, C_PI)


def kz_epsilon_from_CA_log2(D: float, p: float, C_A: float) -> float:
    _check_p(p)
    if D < 1 or not C_A > 0:
        raise ValidationError("need D >= 1 and C_A > 0")
    denom = (7 * p + 3) + p * math.log2(C_A) + 4 * math.log2(D)
    return math.log2(p) - denom / (p - 1)


def kz_epsilon_from_CA(D: float, p: float, C_A: float) -> float:
    """p / (2^{7p+3} C_A^p D^4)^{1/(p-1)}: the bound in terms of the A_p-connectivity constant."""
    return 2.0 ** kz_epsilon_from_CA_log2(D, p, C_A)


def large_p_ratio(D: float, p: float, C_PI: float, power: int = 13) -> float:
    """epsilon 2^power C_PI D^3 / p, evaluated in the log domain."""
    lg = kz_epsilon_log2(D, p, C_PI) + power + math.log2(C_PI) + 3 * math.log2(D) - math.log2(p)
    return 2.0 ** lg


# -- parameters -----------------------------------------------------------------

@dataclass(frozen=True)
class IterationParams:
    p: float
    q: float
    C: float = 1.0
    M: float = 2.0
    delta: float = 0.5
    k: int = 1
    tau: float = 1.0
    C_A: float | None = None
    D: float | None = None
    x: int | None = None
    y: int | None = None
    r: float | None = None

    def __post_init__(self):
        if not self.q <= self.p:
            raise ValidationError("need q <= p")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if not self.M >= 2:
            raise ValidationError("M must be >= 2")
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.C < 1:
            raise ValidationError("C must be >= 1")

    @property
    def L(self) -> float:
        return self.C / (1.0 - self.delta)

    @property
    def S(self) -> float:
        """C M^k, so that S tau is the first term of the recursion."""
        return _pow(self.M, self.k) * self.C

    def window(self) -> float:
        """M^{k (p - q) / p}; must not exceed 2."""
        return _pow(self.M, self.k * (self.p - self.q) / self.p)


def _pow(base, expo):
    try:
        return float(base) ** expo
    except OverflowError:
        return math.inf


def formula_k(p: float, C_A: float, D: float, delta: float) -> int:
    """ceil((2^{6p+3} C_A^p D^4)^{1/(p-1)} / delta^{p/(p-1)})."""
    _check_p(p)
    lg = ((6 * p + 3) + p * math.log2(C_A) + 4 * math.log2(D)) / (p - 1) \
        - (p / (p - 1)) * math.log2(delta)
    return int(math.ceil(2.0 ** lg))


def default_params(p: float, q: float, *, C_A: float, D: float, C: float = 1.0,
                   delta: float = 0.5, M: float = 2.0, tau: float = 1.0) -> IterationParams:
    """Parameters as chosen in the self-improvement argument, with the window checked."""
    _check_p(p)
    params = IterationParams(p, q, C, M, delta, formula_k(p, C_A, D, delta), tau, C_A, D)
    w = params.window()
    if not w <= 2.0 * (1 + WINDOW_RTOL):
        raise WindowViolated(f"M^(k(p-q)/p) = {w!r} exceeds 2 (k = {params.k}, q = {q!r})")
    return params


# -- level sets -----------------------------------------------------------------

@dataclass
class LevelDecomposition:
    """E_i = {level >= i}; F_i coincides with E_i on a finite space."""

    levels: np.ndarray
    maximal: np.ndarray
    k: int
    M: float
    h: np.ndarray
    h_bound_lhs: float
    h_bound_rhs: float

    def E(self, i: int) -> np.ndarray:
        return self.levels >= i

    F = E

    @property
    def top(self) -> int:
        return int(self.levels.max(initial=0))

    @property
    def h_bound_ok(self) -> bool:
        return self.h_bound_lhs < self.h_bound_rhs


def h_bound_rhs(p, q, D, M, k) -> float:
    """4 (2^{2p+3} D^4 M^{k(p-q)})^{1/p} / k^{(p-1)/p}."""
    lg = 2 + ((2 * p + 3) + 4 * math.log2(D) + k * (p - q) * math.log2(M)) / p \
        - (p - 1) / p * math.log2(k)
    return _pow(2.0, lg)


def _h_values(levels, k, M):
    # (1/k) sum_{i=1}^{level} M^i
    out = np.zeros(levels.shape)
    for lv in np.unique(levels):
        if lv > 0:
            out[levels == lv] = sum(M**i for i in range(1, int(lv) + 1)) / k
    return out


def level_decomposition(space: MetricMeasureSpace, g: ObstacleFunction,
                        params: IterationParams) -> LevelDecomposition:
    """Level sets of M_{q, delta L r} g at heights M^i tau / 2 and the stacked field h."""
    params = _bind(params, g)
    ob = _as_obstacle(space, g, params)
    _check(ob)
    xi, yi = ob.x, ob.y
    r = space.metric[xi, yi]
    m = maximal_function(space, ob.values, params.q, params.delta * params.L * r)
    thresholds_top = min(params.k, _max_level(m, params))
    levels = np.zeros(space.n, dtype=int)
    for i in range(1, thresholds_top + 1):
        levels[m > params.M**i * params.tau / 2] = i
    if levels[xi] or levels[yi]:
        # cannot happen for an admissible obstacle; kept as a guard
        raise ValidationError("endpoint lies in a level set")
    h = _h_values(levels, params.k, params.M)
    D = params.D if params.D is not None else doubling_constant(space)
    hm = maximal_at(space, h, params.p, params.C * r, [xi, yi])
    return LevelDecomposition(levels, m, params.k, params.M, h, float(hm.sum()),
                              h_bound_rhs(params.p, params.q, D, params.M, params.k))


def _max_level(m, params):
    top = float(m.max(initial=0.0))
    if top <= 0 or params.tau <= 0:
        return 0
    # largest i with M^i tau / 2 < top, plus one for safety against rounding
    return max(0, int(math.floor(math.log(2 * top / params.tau, params.M))) + 1)


def _bind(params, g):
    """Take the pair and level from an obstacle, leaving plain fields alone."""
    if isinstance(g, ObstacleFunction):
        return replace(params, x=g.x, y=g.y, tau=g.tau)
    return params


def _as_obstacle(space, g, params) -> ObstacleFunction:
    if isinstance(g, ObstacleFunction):
        if (g.p, g.C, g.tau) == (params.q, params.L, params.tau):
            return g
        xi, yi, g = g.x, g.y, g.values
    else:
        xi, yi = params.x, params.y
    if xi is None or yi is None:
        raise ValidationError("the pair (x, y) is needed to check admissibility")
    return make_obstacle(space, np.asarray(g, dtype=float), params.q, params.L, params.tau, xi, yi)


# -- level selection ------------------------------------------------------------

@dataclass
class LevelCertificate:
    i0: int
    level_integrals: list
    mean: Fraction
    bound: float
    r: float

    @property
    def ok(self) -> bool:
        return (min(self.level_integrals) <= self.mean
                and self.mean < Fraction(self.bound) * Fraction(self.r))


def _exact_level_integral(path, mask):
    total = Fraction(0)
    for k, w in enumerate(path.lengths):
        a, b = bool(mask[path.nodes[k]]), bool(mask[path.nodes[k + 1]])
        if a or b:
            total += Fraction(w) * (int(a) + int(b)) / 2
    return total


def select_level(space: MetricMeasureSpace, path: CurvePath, decomposition: LevelDecomposition,
                 bound: float, r: float) -> LevelCertificate:
    """Index i0 minimizing int_path M^i 1_{E_i} (smallest index on ties).

    Certifies min <= mean = int_path h < bound * r in exact arithmetic; the
    precondition int_path h < bound * r raises NoPathBound when it fails.
    """
    M = Fraction(decomposition.M)
    k = decomposition.k
    last = min(k, decomposition.top + 1)
    ints = [M**i * _exact_level_integral(path, decomposition.E(i)) for i in range(1, last + 1)]
    # levels beyond `last` are empty and contribute 0; the mean uses all k levels
    mean = sum(ints, Fraction(0)) / k
    rhs = Fraction(bound) * Fraction(r)
    if not mean < rhs:
        raise NoPathBound(f"int h = {float(mean)!r} is not below {float(rhs)!r}",
                          lhs=float(mean), rhs=float(rhs))
    best = min(ints)
    i0 = ints.index(best) + 1
    return LevelCertificate(i0, ints, mean, bound, r)


# -- the step -------------------------------------------------------------------

@dataclass
class Gap:
    start: int
    end: int
    a: int
    b: int
    traversed: float
    d: float
    replacement: CurvePath
    cost: float
    endpoint_sum: float
    sub_trace: "IterationTrace | None" = None

    @property
    def alpha(self) -> float:
        return self.cost / self.d if self.d > 0 else 0.0


@dataclass
class IterationTrace:
    params: IterationParams
    x: int
    y: int
    r: float
    decomposition: LevelDecomposition
    gamma: CurvePath
    h_integral: float
    certificate: LevelCertificate
    gaps: list
    gamma_prime: CurvePath
    kept_integral: float
    total_integral: float
    checks: dict = field(default_factory=dict)

    @property
    def i0(self) -> int:
        return self.certificate.i0

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def gap_alpha(self) -> float:
        return max((gp.alpha for gp in self.gaps), default=0.0)

    def to_dict(self, space) -> dict:
        ids = lambda path: [space.nodes[v] for v in path.nodes]
        P = self.params
        return {
            "schema_version": 1,
            "params": {"p": P.p, "q": P.q, "C": P.C, "M": P.M, "delta": P.delta, "k": P.k,
                       "tau": P.tau, "L": P.L, "S": P.S},
            "x": space.nodes[self.x], "y": space.nodes[self.y], "r": self.r,
            "levels": {str(space.nodes[v]): int(lv) for v, lv in enumerate(self.decomposition.levels)
                       if lv},
            "h_bound": [self.decomposition.h_bound_lhs, self.decomposition.h_bound_rhs],
            "gamma": ids(self.gamma), "h_integral": self.h_integral,
            "i0": self.i0,
            "level_integrals": [float(v) for v in self.certificate.level_integrals],
            "gaps": [{"a": space.nodes[gp.a], "b": space.nodes[gp.b], "traversed": gp.traversed,
                      "d": gp.d, "replacement": ids(gp.replacement), "cost": gp.cost,
                      "endpoint_sum": gp.endpoint_sum} for gp in self.gaps],
            "gamma_prime": ids(self.gamma_prime),
            "kept_integral": self.kept_integral, "total_integral": self.total_integral,
            "checks": {k: bool(v) for k, v in self.checks.items()},
        }


def find_gaps(path: CurvePath, mask) -> list:
    """Maximal runs of interior path positions inside mask, as (first, last) positions."""
    runs = []
    start = None
    for pos, v in enumerate(path.nodes):
        if mask[v]:
            if start is None:
                start = pos
        elif start is not None:
            runs.append((start, pos - 1))
            start = None
    if start is not None:
        raise ValidationError("path ends inside the level set")
    return runs


def iteration_step(space: MetricMeasureSpace, g, params: IterationParams,
                   depth: int = 1) -> IterationTrace:
    """One round of gap replacement for an admissible obstacle g.

    ``params.x``/``params.y`` give the pair unless g is an ObstacleFunction.
    ``depth > 1`` reroutes each gap by a nested step at level M^{i0} tau
    instead of a direct cheapest curve (exploration only).
    """
    params = _bind(params, g)
    ob = _as_obstacle(space, g, params)
    _check(ob)
    xi, yi = ob.x, ob.y
    r = float(space.metric[xi, yi])
    params = replace(params, x=xi, y=yi, r=r)
    gv = ob.values
    dec = level_decomposition(space, ob, params)
    gamma = min_obstruction_path(space, xi, yi, dec.h, params.C * r, by_index=True)
    h_int = curve_integral(gamma, dec.h)
    # discrete gaps may be up to twice the trapezoid integral of the indicator
    cert = select_level(space, gamma, dec, params.delta / 2, r)
    i0 = cert.i0
    mask = dec.E(i0)
    gaps = []
    new_nodes = [gamma.nodes[0]]
    cursor = 0
    for s, e in find_gaps(gamma, mask):
        a, b = gamma.nodes[s - 1], gamma.nodes[e + 1]
        new_nodes.extend(gamma.nodes[cursor + 1:s])
        traversed = sum(gamma.lengths[s - 1:e + 1])
        d = float(space.metric[a, b])
        esum = _pair_sum(space, gv, params.q, params.L, d, a, b)
        sub = None
        if depth > 1 and d > 0:
            sub_params = replace(params, tau=params.M**i0 * params.tau * (1 + 1e-9),
                                 x=a, y=b, r=None)
            try:
                sub = iteration_step(space, gv, sub_params, depth - 1)
            except (NoPathBound, GapInfeasible):
                sub = None
        try:
            if sub is not None:
                rep = sub.gamma_prime
            else:
                rep = min_obstruction_path(space, a, b, gv, params.L * d, by_index=True)
        except NoFeasiblePath:
            raise GapInfeasible(f"no curve between gap endpoints {space.nodes[a]!r} and "
                                f"{space.nodes[b]!r} within length {params.L * d!r}") from None
        gaps.append(Gap(s, e, a, b, traversed, d, rep, curve_integral(rep, gv), esum, sub))
        new_nodes.extend(rep.nodes[1:-1])
        cursor = e
    new_nodes.extend(gamma.nodes[cursor + 1:])
    gamma_prime = CurvePath.from_nodes(space, new_nodes)

    kept = _kept_edges(gamma, mask)
    kept_exact = sum((Fraction(w) * (Fraction(gv[u]) + Fraction(gv[v])) / 2 for u, v, w in kept),
                     Fraction(0))
    total_exact = exact_curve_integral(gamma_prime, gv)
    reps_exact = sum((exact_curve_integral(gp.replacement, gv) for gp in gaps), Fraction(0))

    outside = [v for v in gamma.nodes if not mask[v]]
    Mk_tau = _pow(params.M, params.k) * params.tau
    sum_d = sum(gp.d for gp in gaps)
    sum_traversed = sum(gp.traversed for gp in gaps)
    gap_budget = params.delta * params.M**(-i0) * r
    checks = {
        "endpoints_outside_levels": not dec.levels[xi] and not dec.levels[yi],
        "levels_nested": bool(np.all(np.diff(
            [dec.E(i).sum() for i in range(1, min(params.k, dec.top + 1) + 1)]) <= 0)),
        "h_bound": dec.h_bound_ok,
        "gamma_length": within_budget(curve_length(gamma), params.C * r),
        "level_selection": cert.ok,
        "gap_budget": sum_d <= sum_traversed * (1 + 1e-12) and sum_traversed < gap_budget,
        "gap_endpoints": all(gp.endpoint_sum <= params.M**i0 * params.tau * (1 + 1e-12)
                             for gp in gaps),
        "final_length": within_budget(curve_length(gamma_prime), params.L * r),
        "on_curve_bound": all(gv[v] <= Mk_tau for v in outside),
        "decomposition": total_exact == kept_exact + reps_exact,
        "kept_bound": kept_exact <= Fraction(params.C * r) * Fraction(max(
            (float(gv[v]) for v in outside), default=0.0)) * (1 + Fraction(1, 10**12)),
    }
    return IterationTrace(params, xi, yi, r, dec, gamma, h_int, cert, gaps, gamma_prime,
                          float(kept_exact), float(total_exact), checks)


def _pair_sum(space, g, q, L, d, a, b):
    m = maximal_at(space, g, q, L * d, [a, b]) if d > 0 else np.array([g[a], g[b]])
    return float(m.sum())


def _kept_edges(gamma, mask):
    out = []
    for k, w in enumerate(gamma.lengths):
        u, v = gamma.nodes[k], gamma.nodes[k + 1]
        if not mask[u] and not mask[v]:
            out.append((u, v, w))
    return out


def choose_k(space: MetricMeasureSpace, g, params: IterationParams, k_max: int = 64) -> IterationParams:
    """Smallest k <= k_max whose cheapest h-curve has int h < (delta / 2) r."""
    params = _bind(params, g)
    for k in range(1, k_max + 1):
        trial = replace(params, k=k)
        ob = _as_obstacle(space, g, trial)
        dec = level_decomposition(space, ob, trial)
        r = space.metric[ob.x, ob.y]
        gamma = min_obstruction_path(space, ob.x, ob.y, dec.h, trial.C * r, by_index=True)
        h_exact = sum((Fraction(dec.M)**i * _exact_level_integral(gamma, dec.E(i))
                       for i in range(1, min(k, dec.top + 1) + 1)), Fraction(0)) / k
        if h_exact < Fraction(trial.delta / 2) * Fraction(r):
            return trial
    raise NoPathBound(f"no k <= {k_max} brings the h-integral below delta r / 2")


# -- the recursion --------------------------------------------------------------

@dataclass
class CrucialMargin:
    tau: float
    x: int
    y: int
    lhs: float
    rhs: float
    i0: int
    gap_alpha: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def crucial_inequality_check(space: MetricMeasureSpace, params: IterationParams, g_suite,
                             *, auto_k: bool = True, k_max: int = 64) -> list:
    """RHS - LHS of alpha^q(L, tau) <= S tau + delta M^{-i0} alpha_{i0} per obstacle.

    LHS is the exact cheapest normalized g-integral at length budget L r;
    alpha_{i0} is the largest gap-replacement value realized in the step.
    ``g_suite`` holds ObstacleFunctions built with exponent q and factor L.
    """
    out = []
    for ob in g_suite:
        P = replace(params, tau=ob.tau, x=ob.x, y=ob.y)
        if auto_k:
            P = choose_k(space, ob, P, k_max)
        trace = iteration_step(space, ob, P)
        lhs = alpha_given_g(space, P.q, P.L, ob.x, ob.y, ob)
        rhs = P.S * P.tau + P.delta * P.M**(-trace.i0) * trace.gap_alpha()
        out.append(CrucialMargin(ob.tau, ob.x, ob.y, lhs, rhs, trace.i0, trace.gap_alpha()))
    return out


# -- empirical scan -------------------------------------------------------------

@dataclass
class ScanRow:
    q: float
    search: float
    pooled: float
    within: bool


@dataclass
class KZScan:
    p: float
    C: float
    base: float
    doubling: float
    epsilon_bound: float
    epsilon_from_CA: float | None
    blowup: float
    rows: list
    note: str = ASYMPTOTIC_NOTE

    def to_rows(self) -> list:
        return [{"q": r.q, "C_PI_search": r.search, "C_PI_pooled": r.pooled,
                 "within_blowup": r.within} for r in self.rows]

    @property
    def monotone(self) -> bool:
        pooled = [r.pooled for r in sorted(self.rows, key=lambda r: -r.q)]
        return all(b >= a for a, b in zip(pooled, pooled[1:]))


def kz_empirical_scan(space: MetricMeasureSpace, p: float, C: float, q_grid,
                      config: SearchConfig | None = None, blowup: float = 10.0,
                      r_max=None, C_A: float | None = None) -> KZScan:
    """C_PI(q) over a q grid, searched per q and pooled over all witnesses.

    The pooled column evaluates every witness found at any q at each q; for a
    fixed witness the ratio grows as q decreases, so that column is monotone.
    """
    _check_p(p)
    qs = sorted({float(q) for q in q_grid} | {float(p)}, reverse=True)
    if any(not 1 < q <= p for q in qs):
        raise InvalidExponent("q grid must lie in (1, p]")
    reports = {q: pi_constant(space, q, C, r_max, config) for q in qs}
    pool = [w for rep in reports.values() for w in rep.witnesses]
    base = reports[float(p)].C_PI
    rows = []
    for q in qs:
        pooled = max((pi_ratio(space, w.f, w.center, w.radius, C, q, by_index=True)
                      for w in pool), default=0.0)
        rows.append(ScanRow(q, reports[q].C_PI, pooled, pooled <= blowup * base))
    D = doubling_constant(space, r_max)
    eps = kz_epsilon_bound(D, p, base) if base > 0 else math.inf
    eps_ca = kz_epsilon_from_CA(D, p, C_A) if C_A else None
    return KZScan(p, C, base, D, eps, eps_ca, blowup, rows)
