"""Discrete (1,p)-Poincare constants, the pointwise inequality and their cross-checks.

For a ball B = B(x, r) and its inflation CB = B(x, C r) the Poincare ratio of
a field f is

    avg_B |f - f_B|  /  ( r (avg_CB (Lip f)^p)^{1/p} )

with Lip f the largest slope of f along an edge at each node.  All constants
here are lower bounds carried by explicit witnesses.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .connectivity import (SearchConfig, alpha_profile, endpoint_sum, probe_pairs)
from .curves import (cost_distances, curve_integral, curve_length, min_obstruction_path,
                     upper_gradient_check)
from .errors import DegenerateDenominator, NoFeasiblePath, NotUpperGradient, ValidationError
from .maximal import maximal_at_scales
from .space import MetricMeasureSpace, doubling_constant, quasiconvexity_constant

# ratios closer than this to the running best do not displace it
_IMPROVE_RTOL = 1e-12


# -- fields ---------------------------------------------------------------------

def lip_field(space: MetricMeasureSpace, f) -> np.ndarray:
    """Lip f(x) = max over neighbours y of |f(x) - f(y)| / len(x, y)."""
    f = space.field(f)
    return lip_batch(space, f[None, :])[0]


def lip_batch(space: MetricMeasureSpace, F: np.ndarray) -> np.ndarray:
    """lip_field applied to every row of F."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if space.edge_len.size == 0:
        return np.zeros_like(F)
    slopes = np.abs(F[:, space.edge_u] - F[:, space.edge_v]) / space.edge_len
    eids, offsets, _ = space.incidence
    return np.maximum.reduceat(slopes[:, eids], offsets, axis=1)


# -- the ratio ------------------------------------------------------------------

def _ratio_parts(space, F, lip, xi, r, C, p):
    d = space.metric[xi]
    inner = d <= r
    outer = d <= C * r
    mu = space.measure
    muB = mu[inner]
    FB = F[:, inner]
    mean = (FB @ muB) / muB.sum()
    num = (np.abs(FB - mean[:, None]) @ muB) / muB.sum()
    muC = mu[outer]
    avg = (np.power(lip[:, outer], p) @ muC) / muC.sum()
    den = r * (avg if p == 1 else np.power(avg, 1.0 / p))
    return num, den


def _safe_ratio(num, den):
    out = np.zeros_like(num)
    pos = num > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[pos] = num[pos] / den[pos]
    # positive oscillation with a vanishing gradient cannot occur on a
    # connected ball; flag it as infinite so it is never mistaken for small
    out[pos & (den <= 0)] = math.inf
    return out


def ratio_batch(space, F, xi, r, C, p, lip=None) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    lip = lip_batch(space, F) if lip is None else lip
    return _safe_ratio(*_ratio_parts(space, F, lip, xi, r, C, p))


def pi_ratio(space: MetricMeasureSpace, f, x, r: float, C: float, p: float, *, by_index=False) -> float:
    """Poincare ratio of f on B(x, r) with inflation C; 0 when f is constant on B."""
    if p < 1:
        raise ValidationError("p must be >= 1")
    if not r > 0:
        raise ValidationError("radius must be positive")
    xi = x if by_index else space.idx(x)
    F = space.field(f)[None, :]
    num, den = _ratio_parts(space, F, lip_batch(space, F), xi, r, C, p)
    if num[0] <= 0:
        return 0.0
    if den[0] <= 0:
        raise DegenerateDenominator(
            f"oscillation {num[0]!r} on B({x!r}, {r!r}) with zero gradient on the inflated ball")
    return float(num[0] / den[0])


# -- search ---------------------------------------------------------------------

@dataclass
class PIWitness:
    center: int
    radius: float
    f: np.ndarray
    ratio: float

    def to_dict(self, space) -> dict:
        return {"center": space.nodes[self.center], "radius": self.radius, "ratio": self.ratio,
                "f": {str(v): repr(float(t)) for v, t in zip(space.nodes, self.f)}}


@dataclass
class PIReport:
    p: float
    C: float
    r0: float | None
    seed: int
    C_PI: float
    witness: PIWitness | None
    witnesses: list = field(default_factory=list)
    per_radius: list = field(default_factory=list)
    doubling: float | None = None
    quasiconvexity: float | None = None
    C_PPI: float | None = None
    C_A: float | None = None
    margins: dict = field(default_factory=dict)

    def to_dict(self, space) -> dict:
        return {
            "schema_version": 1, "seed": self.seed, "p": self.p, "C": self.C, "r_max": self.r0,
            "doubling": self.doubling, "quasiconvexity": self.quasiconvexity,
            "C_PI": self.C_PI, "C_PPI": self.C_PPI, "C_A": self.C_A, "margins": self.margins,
            "per_radius": [{"radius": r, "ratio": v} for r, v in self.per_radius],
            "witness": None if self.witness is None else self.witness.to_dict(space),
            "witnesses": [w.to_dict(space) for w in self.witnesses],
        }


def pi_radii(space: MetricMeasureSpace, C: float, r_max=None) -> np.ndarray:
    """Radii where B(x, r) or B(x, C r) can change: {d} and {d / C}, below r_max."""
    d = space.metric[np.triu_indices(space.n, k=1)]
    d = d[d > 0]
    radii = np.unique(np.concatenate([d, d / C]))
    if r_max is not None:
        radii = radii[radii < r_max]
    return radii


def screening_family(space: MetricMeasureSpace, levels: int = 8) -> np.ndarray:
    """Distance fields d(., z) and their truncations min(d(., z), t)."""
    D = np.asarray(space.dist)
    rows = [D]
    vals = np.unique(D)
    vals = vals[vals > 0]
    if vals.size > 1:
        picks = np.unique(np.quantile(vals, np.linspace(0, 1, levels + 1)[1:-1], method="nearest"))
        for t in picks:
            rows.append(np.minimum(D, t))
    return np.vstack(rows)


def _ball_seed(seed, xi, r):
    return zlib.crc32(f"{seed}:{xi}:{r!r}".encode())


def _local_nodes(space, xi, Cr):
    inside = np.flatnonzero(space.metric[xi] <= Cr)
    local = set(int(v) for v in inside)
    for v in inside:
        local.update(j for j, _ in space.adjacency[v])
    return np.array(sorted(local), dtype=np.intp)


def _quadratic_candidates(space, xi, r, C):
    """Generalized eigenvectors of variance on B against a quadratic slope form on CB."""
    from scipy.linalg import eigh

    local = _local_nodes(space, xi, C * r)
    pos = {int(v): k for k, v in enumerate(local)}
    m = local.size
    d = space.metric[xi]
    mu = space.measure
    inB = (d[local] <= r).astype(float)
    inCB = d[local] <= C * r
    w = mu[local] * inB
    W = w.sum()
    A = np.diag(w) - np.outer(w, w) / W
    Q = np.zeros((m, m))
    for u, v, le in zip(space.edge_u, space.edge_v, space.edge_len):
        if int(u) not in pos or int(v) not in pos:
            continue
        a, b = pos[int(u)], pos[int(v)]
        wt = (mu[u] * inCB[a] + mu[v] * inCB[b]) / 2.0 / le**2
        if wt == 0:
            continue
        Q[a, a] += wt
        Q[b, b] += wt
        Q[a, b] -= wt
        Q[b, a] -= wt
    Q += np.eye(m) * 1e-9 * max(np.trace(Q), 1e-300) / m
    try:
        _, vecs = eigh(A, Q)
    except np.linalg.LinAlgError:
        return np.zeros((0, space.n))
    out = np.zeros((min(2, m), space.n))
    for k in range(out.shape[0]):
        out[k, local] = vecs[:, -1 - k]
    return out


def _ascent(space, f, xi, r, C, p, rng, sweeps):
    """Best-improvement single-coordinate moves on the local nodes."""
    local = _local_nodes(space, xi, C * r)
    f = f.copy()
    cur = ratio_batch(space, f, xi, r, C, p)[0]
    spread = float(np.ptp(f[local])) or 1.0
    step = 0.5 * spread
    for _ in range(sweeps):
        moves = []
        for s in (step, -step, 0.25 * step, -0.25 * step):
            M = np.repeat(f[None, :], local.size, axis=0)
            M[np.arange(local.size), local] += s
            moves.append(M)
        M = np.vstack(moves)
        vals = ratio_batch(space, M, xi, r, C, p)
        k = int(np.argmax(vals))
        if vals[k] > cur * (1 + _IMPROVE_RTOL) and np.isfinite(vals[k]):
            f, cur = M[k], vals[k]
        else:
            step *= 0.5
    return f, cur


def _refine_ball(space, xi, r, C, p, config, start):
    rng = np.random.default_rng(_ball_seed(config.seed, xi, r))
    cands = [start]
    # greedy growth of S for distance fields d(., S)
    S_dist = space.dist[xi].copy()
    for _ in range(config.greedy_sets):
        trial = np.minimum(S_dist[None, :], space.dist)
        vals = ratio_batch(space, trial, xi, r, C, p)
        k = int(np.argmax(vals))
        S_dist = trial[k]
    cands.append(S_dist)
    if config.quadratic and p == 2:
        cands.extend(_quadratic_candidates(space, xi, r, C))
    local = _local_nodes(space, xi, C * r)
    for _ in range(config.restarts):
        f = np.zeros(space.n)
        f[local] = rng.standard_normal(local.size)
        cands.append(f)
    best_f, best = start, -math.inf
    for f in cands:
        g, val = _ascent(space, f, xi, r, C, p, rng, config.sweeps)
        if val > best:
            best_f, best = g, val
    return best_f


def pi_constant(space: MetricMeasureSpace, p: float, C: float = 1.0, r_max=None,
                config: SearchConfig | None = None) -> PIReport:
    """Lower bound on the (1,p)-Poincare constant with inflation C, radii below r_max.

    Every ball at a critical radius is screened against distance and
    truncated-distance fields; at each distinct radius the best
    ``balls_per_radius`` balls are refined by greedy distance-to-set fields,
    generalized eigenvectors (p = 2) and seeded coordinate ascent.  The
    per-radius results are independent of r_max, so the estimate is
    monotone in r_max.
    """
    if p < 1:
        raise ValidationError("p must be >= 1")
    if C < 1:
        raise ValidationError("C must be >= 1")
    config = config or SearchConfig()
    family = screening_family(space)
    lip = lip_batch(space, family)
    witnesses, per_radius = [], []
    for r in pi_radii(space, C, r_max):
        r = float(r)
        scored = []
        for xi in range(space.n):
            vals = _safe_ratio(*_ratio_parts(space, family, lip, xi, r, C, p))
            k = int(np.argmax(vals))
            scored.append((float(vals[k]), xi, k))
        scored.sort(key=lambda t: (-t[0], t[1]))
        best_w = None
        for val, xi, k in scored[:config.balls_per_radius]:
            candidates = [family[k]]
            if config.restarts or config.greedy_sets or config.quadratic:
                candidates.append(_refine_ball(space, xi, r, C, p, config, family[k]))
            for f in candidates:
                ratio = pi_ratio(space, f, xi, r, C, p, by_index=True)
                if best_w is None or ratio > best_w.ratio * (1 + _IMPROVE_RTOL):
                    best_w = PIWitness(xi, r, np.array(f, dtype=float), ratio)
        if best_w is not None:
            witnesses.append(best_w)
            per_radius.append((r, best_w.ratio))
    top = max(witnesses, key=lambda w: w.ratio, default=None)
    return PIReport(p, C, r_max, config.seed, 0.0 if top is None else top.ratio, top,
                    witnesses, per_radius)


def witness_ratio(space, w: PIWitness, p: float, C: float) -> float:
    return pi_ratio(space, w.f, w.center, w.radius, C, p, by_index=True)


# -- pointwise inequality -------------------------------------------------------

def _pairs(n):
    return np.triu_indices(n, k=1)


def ppi_ratio(space: MetricMeasureSpace, f, g, p: float, C: float, r_max=None):
    """max over pairs of |f(x) - f(y)| / (r (M_{p,Cr} g(x) + M_{p,Cr} g(y))), r = d(x, y).

    Returns (value, (x_index, y_index)); (0.0, None) with no eligible pair.
    """
    f = space.field(f)
    g = space.field(g)
    xs, ys = _pairs(space.n)
    r = space.metric[xs, ys]
    if r_max is not None:
        keep = r <= r_max
        xs, ys, r = xs[keep], ys[keep], r[keep]
    if xs.size == 0:
        return 0.0, None
    S = maximal_at_scales(space, g, p, xs, C * r) + maximal_at_scales(space, g, p, ys, C * r)
    diff = np.abs(f[xs] - f[ys])
    vals = np.zeros_like(diff)
    pos = diff > 0
    with np.errstate(divide="ignore"):
        vals[pos] = diff[pos] / (r[pos] * S[pos])
    k = int(np.argmax(vals))
    return float(vals[k]), (int(xs[k]), int(ys[k]))


def pointwise_pi_margin(space: MetricMeasureSpace, f, g, p: float, C: float, C_PPI: float,
                        ug_tol: float = 1e-9) -> float:
    """min over pairs of C_PPI r (M g(x) + M g(y)) - |f(x) - f(y)|, r = d(x, y).

    Raises NotUpperGradient when g fails the edge-path upper gradient test
    (relative tolerance ``ug_tol`` against the size of f).
    """
    f = space.field(f)
    g = space.field(g)
    ug = upper_gradient_check(space, f, g)
    if ug < -ug_tol * max(1.0, float(np.max(np.abs(f), initial=0.0))):
        raise NotUpperGradient(f"upper gradient margin {ug!r} is negative")
    xs, ys = _pairs(space.n)
    if xs.size == 0:
        return 0.0
    r = space.metric[xs, ys]
    S = maximal_at_scales(space, g, p, xs, C * r) + maximal_at_scales(space, g, p, ys, C * r)
    diff = np.abs(f[xs] - f[ys])
    scale = r * S
    out = np.empty_like(diff)
    pos = scale > 0
    # written as scale * (C_PPI - ratio) so the maximizing pair gives exactly 0
    out[pos] = scale[pos] * (C_PPI - diff[pos] / scale[pos])
    out[~pos] = -diff[~pos]
    return float(out.min())


# -- cross-checks -------------------------------------------------------------

@dataclass
class PtPIWitness:
    f: np.ndarray
    g: np.ndarray
    kind: str
    ratio: float
    pair: tuple | None


@dataclass
class ConsistencyReport:
    p: float
    C: float
    C_PI: float
    C_PPI: float
    C_A: float
    tolerance: float
    ptpi_witnesses: list
    # (i): per gradient witness, cost ratio at its worst pair minus its PtPI ratio
    ap_to_ptpi: list
    # (ii): per obstacle witness, (4 C_PPI r S - int g, 5 C_PPI r - Len)
    ptpi_to_ap: list
    not_established: int = 0

    @property
    def ok(self) -> bool:
        first = all(m >= -self.tolerance for m in self.ap_to_ptpi)
        second = all(a >= 0 and b >= 0 for a, b in self.ptpi_to_ap)
        return first and second

    def to_dict(self) -> dict:
        return {"p": self.p, "C": self.C, "C_PI": self.C_PI, "C_PPI": self.C_PPI, "C_A": self.C_A,
                "tolerance": self.tolerance, "ap_to_ptpi": self.ap_to_ptpi,
                "ptpi_to_ap": [list(t) for t in self.ptpi_to_ap],
                "not_established": self.not_established, "ok": self.ok}


def _obstacle_suite(space, p, C, config, tau_grid):
    """(shape, x, y) obstacle witnesses: alpha-search winners plus ball indicators."""
    out = []
    try:
        prof = alpha_profile(space, p, C, tau_grid, config)
        for row in prof.rows:
            if row.witness is not None:
                out.append((row.witness.values, row.x, row.y))
    except NoFeasiblePath:
        pass
    rng = np.random.default_rng(config.seed)
    for xi, yi in probe_pairs(space, config, C=C):
        mid = int(np.argmin(np.abs(space.metric[xi] - space.metric[yi]) + 1e-9 * np.arange(space.n)))
        for rad in (0.0, 0.5 * space.metric[xi, yi]):
            shape = (space.metric[mid] <= rad).astype(float)
            out.append((shape, xi, yi))
        out.append((rng.random(space.n), xi, yi))
    return out


def _f_witness(space, g, xi, yi, p, C):
    """The distance-to-x field for g + S and its cheapest x-y curve."""
    S = endpoint_sum(space, g, p, C, xi, yi)
    if S <= 0:
        return None
    gs = g + S
    F = cost_distances(space, gs, sources=[xi])[0]
    path = min_obstruction_path(space, xi, yi, gs, math.inf, by_index=True)
    F[yi] = curve_integral(path, gs)
    return F, gs, S, path


def characterization_consistency(space: MetricMeasureSpace, p: float, C_grid=(1.0,),
                                 tolerance: float = 1e-9, config: SearchConfig | None = None,
                                 tau_grid=(0.25, 0.5, 1.0), r_max=None) -> list:
    """Quantitative implications between the pointwise inequality and A_p-connectivity.

    For each C: (i) along the cheapest curve of length <= C r, the integral
    of an upper gradient g dominates |f(x) - f(y)|, so every gradient witness
    has cost ratio >= PtPI ratio at its worst pair; (ii) for each obstacle g
    and pair with S = M g(x) + M g(y) > 0, the cheapest curve for g + S has
    int g <= 4 C_PPI r S and length <= 5 C_PPI r.  C_PPI is the largest
    PtPI ratio over the gradient witnesses and the distance-to-x fields of
    (ii).  Pairs with no curve within C r count as not established.
    """
    config = config or SearchConfig()
    reports = []
    for C in C_grid:
        pi = pi_constant(space, p, C, r_max, config)
        witnesses = []
        for w in pi.witnesses:
            g = lip_field(space, w.f)
            val, pair = ppi_ratio(space, w.f, g, p, C)
            witnesses.append(PtPIWitness(w.f, g, "gradient", val, pair))
        built = []
        for shape, xi, yi in _obstacle_suite(space, p, C, config, tau_grid):
            fw = _f_witness(space, np.asarray(shape, dtype=float), xi, yi, p, C)
            if fw is None:
                continue
            F, gs, S, path = fw
            val, pair = ppi_ratio(space, F, gs, p, C)
            witnesses.append(PtPIWitness(F, gs, "distance", val, pair))
            built.append((np.asarray(shape, dtype=float), xi, yi, S, path))
        C_PPI = max((w.ratio for w in witnesses), default=0.0)

        first, not_est = [], 0
        for w in witnesses:
            if w.pair is None:
                continue
            xi, yi = w.pair
            r = space.metric[xi, yi]
            S = endpoint_sum(space, w.g, p, C, xi, yi)
            try:
                path = min_obstruction_path(space, xi, yi, w.g, C * r, by_index=True)
            except NoFeasiblePath:
                not_est += 1
                continue
            first.append(curve_integral(path, w.g) / (r * S) - w.ratio)

        second = []
        C_A = 0.0
        for g, xi, yi, S, path in built:
            r = space.metric[xi, yi]
            integral = curve_integral(path, g)
            length = curve_length(path)
            second.append((4 * C_PPI * r * S - integral, 5 * C_PPI * r - length))
            try:
                best = min_obstruction_path(space, xi, yi, g, C * r, by_index=True)
                C_A = max(C_A, curve_integral(best, g) / (r * S))
            except NoFeasiblePath:
                not_est += 1
        reports.append(ConsistencyReport(p, C, pi.C_PI, C_PPI, C_A, tolerance, witnesses,
                                         first, second, not_est))
    return reports


def analyze(space: MetricMeasureSpace, p: float, C: float = 1.0, r_max=None,
            config: SearchConfig | None = None, tau_grid=(0.25, 0.5, 1.0)) -> PIReport:
    """Doubling, quasiconvexity, C_PI, C_PPI and C_A for one space, with margins."""
    config = config or SearchConfig()
    report = pi_constant(space, p, C, r_max, config)
    report.doubling = doubling_constant(space, r_max)
    report.quasiconvexity = quasiconvexity_constant(space)
    cons = characterization_consistency(space, p, (C,), config=config, tau_grid=tau_grid,
                                        r_max=r_max)[0]
    report.C_PPI = cons.C_PPI
    report.C_A = cons.C_A
    ptpi = min((pointwise_pi_margin(space, w.f, w.g, p, C, cons.C_PPI)
                for w in cons.ptpi_witnesses), default=0.0)
    report.margins = {
        "pointwise": ptpi,
        "ap_to_ptpi": min(cons.ap_to_ptpi, default=0.0),
        "ptpi_to_ap_integral": min((a for a, _ in cons.ptpi_to_ap), default=0.0),
        "ptpi_to_ap_length": min((b for _, b in cons.ptpi_to_ap), default=0.0),
        "not_established": cons.not_established,
    }
    return report


def pi_radius_profile(space: MetricMeasureSpace, p: float, C: float = 1.0,
                      config: SearchConfig | None = None) -> list:
    """(radius, best ratio) pairs, for spotting growth of the ratio with scale."""
    return pi_constant(space, p, C, None, config).per_radius
