"""Edge paths, curve integrals and the length-budgeted minimum-obstruction solver.

Curve integrals use the trapezoid rule on each traversed edge,
``len(u, v) * (g(u) + g(v)) / 2``, accumulated left to right along the path.
The solver and the brute-force oracle accumulate in exactly that order, so
their optima agree bit for bit.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import NoFeasiblePath, TooLarge, ValidationError
from .space import MetricMeasureSpace, within_budget


@dataclass(frozen=True)
class CurvePath:
    """A walk along graph edges, stored by node index."""

    nodes: tuple
    lengths: tuple

    def __post_init__(self):
        if len(self.lengths) != max(len(self.nodes) - 1, 0):
            raise ValidationError("need one length per traversed edge")

    @classmethod
    def from_nodes(cls, space: MetricMeasureSpace, nodes: Sequence[int]) -> "CurvePath":
        nodes = tuple(int(v) for v in nodes)
        if not nodes:
            raise ValidationError("empty path")
        lengths = []
        for u, v in zip(nodes, nodes[1:]):
            try:
                lengths.append(space.edge_length(u, v))
            except KeyError:
                raise ValidationError(f"({u}, {v}) is not an edge") from None
        return cls(nodes, tuple(lengths))

    @classmethod
    def from_ids(cls, space, ids) -> "CurvePath":
        return cls.from_nodes(space, [space.idx(v) for v in ids])

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def end(self) -> int:
        return self.nodes[-1]

    def ids(self, space) -> list:
        return [space.nodes[i] for i in self.nodes]


def curve_length(path: CurvePath) -> float:
    total = 0.0
    for w in path.lengths:
        total = total + w
    return total


def curve_integral(path: CurvePath, g) -> float:
    """Trapezoid-rule line integral of a non-negative node field along ``path``."""
    total = 0.0
    nodes = path.nodes
    for k, w in enumerate(path.lengths):
        total = total + w * (g[nodes[k]] + g[nodes[k + 1]]) / 2
    return total


def exact_curve_integral(path: CurvePath, g) -> Fraction:
    total = Fraction(0)
    nodes = path.nodes
    for k, w in enumerate(path.lengths):
        total += Fraction(w) * (Fraction(g[nodes[k]]) + Fraction(g[nodes[k + 1]])) / 2
    return total


@dataclass(frozen=True)
class Label:
    cost: float
    length: float
    path: tuple


def _solve(space, xi, yi, g, budget, frontier=False, exact=False):
    adj = space.adjacency
    lower = space.dist[:, yi]
    if exact:
        g = [v if isinstance(v, Fraction) else Fraction(float(v)) for v in g]
        adj = [[(j, Fraction(w)) for j, w in nbrs] for nbrs in adj]
        zero = Fraction(0)
    else:
        g = [float(v) for v in g]
        zero = 0.0
    slack = 1.0 - 1e-9
    best_len = [math.inf] * space.n
    heap = [(zero, zero, (xi,))]
    found = []
    while heap:
        c, l, path = heapq.heappop(heap)
        v = path[-1]
        if l >= best_len[v]:
            continue
        best_len[v] = l
        if v == yi:
            found.append(Label(c, l, path))
            if not frontier:
                break
            continue
        gv = g[v]
        for w, le in adj[v]:
            nl = l + le
            if nl >= best_len[w]:
                continue
            if budget != math.inf and not within_budget(float(nl) + lower[w] * slack, budget):
                continue
            if not within_budget(nl, budget):
                continue
            heapq.heappush(heap, (c + le * (gv + g[w]) / 2, nl, path + (w,)))
    return found


def min_obstruction_path(space: MetricMeasureSpace, x, y, g, length_budget: float,
                         *, by_index=False, exact=False) -> CurvePath:
    """Path x -> y of length <= ``length_budget`` minimizing the integral of ``g``.

    Label setting over (cost, length) with Pareto dominance; labels are popped
    in (cost, length, node sequence) order, so ties go to the shorter path and
    then to the lexicographically smaller index sequence.  With ``exact`` the
    search runs in rational arithmetic.
    """
    xi, yi = (x, y) if by_index else (space.idx(x), space.idx(y))
    g = np.asarray(g, dtype=float) if not exact else g
    if not within_budget(space.dist[xi, yi], length_budget):
        raise NoFeasiblePath(
            f"length budget {length_budget!r} is below the distance {space.dist[xi, yi]!r}")
    found = _solve(space, xi, yi, g, length_budget, exact=exact)
    if not found:
        raise NoFeasiblePath("no path within the length budget")
    return CurvePath.from_nodes(space, found[0].path)


def min_obstruction_cost(space, x, y, g, length_budget, *, by_index=False, exact=False):
    path = min_obstruction_path(space, x, y, g, length_budget, by_index=by_index, exact=exact)
    if exact:
        return exact_curve_integral(path, g), path
    return curve_integral(path, g), path


def pareto_frontier(space: MetricMeasureSpace, x, y, g, length_budget: float, *, by_index=False):
    """All non-dominated (length, cost) labels at y, cheapest first."""
    xi, yi = (x, y) if by_index else (space.idx(x), space.idx(y))
    if not within_budget(space.dist[xi, yi], length_budget):
        raise NoFeasiblePath("length budget below distance")
    found = _solve(space, xi, yi, np.asarray(g, dtype=float), length_budget, frontier=True)
    return [(lab.length, lab.cost, CurvePath.from_nodes(space, lab.path)) for lab in found]


def enumerate_paths_oracle(space: MetricMeasureSpace, x, y, length_budget: float,
                           node_cap: int = 10, g=None, max_edge_uses: int = 2,
                           *, by_index=False) -> list:
    """Every walk x -> y within budget that uses each edge at most twice.

    Brute force, for cross-checking the solver.  Sorted by (cost, length,
    node sequence) when ``g`` is given, else by (length, node sequence).
    """
    if space.n > node_cap:
        raise TooLarge(f"{space.n} nodes exceeds the oracle cap {node_cap}")
    xi, yi = (x, y) if by_index else (space.idx(x), space.idx(y))
    adj = space.adjacency
    uses = {}
    out = []
    stack_nodes = [xi]

    def walk(v, length):
        if v == yi:
            out.append(tuple(stack_nodes))
        for w, le in adj[v]:
            key = (min(v, w), max(v, w))
            if uses.get(key, 0) >= max_edge_uses:
                continue
            nl = length + le
            if not within_budget(nl, length_budget):
                continue
            uses[key] = uses.get(key, 0) + 1
            stack_nodes.append(w)
            walk(w, nl)
            stack_nodes.pop()
            uses[key] -= 1

    walk(xi, 0.0)
    paths = [CurvePath.from_nodes(space, p) for p in out]
    if g is not None:
        gv = np.asarray(g, dtype=float)
        paths.sort(key=lambda c: (curve_integral(c, gv), curve_length(c), c.nodes))
    else:
        paths.sort(key=lambda c: (curve_length(c), c.nodes))
    return paths


def cost_distances(space: MetricMeasureSpace, g, sources=None) -> np.ndarray:
    """Unbudgeted minimum trapezoid cost of g between nodes (Dijkstra)."""
    g = np.asarray(g, dtype=float)
    n = space.n
    sources = range(n) if sources is None else sources
    sources = list(sources)
    out = np.full((len(sources), n), math.inf)
    for k, s in enumerate(sources):
        row = out[k]
        row[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > row[u]:
                continue
            for v, w in space.adjacency[u]:
                nd = d + w * (g[u] + g[v]) / 2
                if nd < row[v]:
                    row[v] = nd
                    heapq.heappush(heap, (nd, v))
    return out


def upper_gradient_check(space: MetricMeasureSpace, f, g) -> float:
    """min over pairs of (cheapest g-integral between them) - |f(x) - f(y)|.

    Non-negative iff g is a discrete upper gradient of f for edge paths.
    """
    f = space.field(f)
    g = space.field(g)
    if np.any(g < 0):
        raise ValidationError("g must be non-negative")
    if space.n < 2:
        return 0.0
    costs = cost_distances(space, g)
    gaps = costs - np.abs(f[:, None] - f[None, :])
    iu = np.triu_indices(space.n, k=1)
    return float(gaps[iu].min())
