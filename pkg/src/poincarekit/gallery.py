"""Deterministic example spaces: grids, paths, theta graphs, snowflakes, weighted lines."""
from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from .errors import NonpositiveWeight, ValidationError
from .space import MetricMeasureSpace, build_space
from .weights import WeightedLine


def grid_node(row: int, col: int, width: int) -> int:
    return row * width + col


def make_grid(width: int, height: int, edge_len: float = 1.0, measure: float = 1.0) -> MetricMeasureSpace:
    """4-neighbour grid; node ``row * width + col``."""
    if width < 1 or height < 1:
        raise ValidationError("grid dimensions must be >= 1")
    nodes = list(range(width * height))
    edges = []
    for r in range(height):
        for c in range(width):
            v = grid_node(r, c, width)
            if c + 1 < width:
                edges.append((v, v + 1, edge_len))
            if r + 1 < height:
                edges.append((v, v + width, edge_len))
    return MetricMeasureSpace(nodes, edges, np.full(len(nodes), float(measure)))


def make_path(n: int, edge_len: float = 1.0, measure=1.0) -> MetricMeasureSpace:
    edges = [(i, i + 1, edge_len) for i in range(n - 1)]
    mu = np.broadcast_to(np.asarray(measure, dtype=float), (n,)).copy()
    return MetricMeasureSpace(range(n), edges, mu)


def make_complete(n: int, edge_len: float = 1.0, measure: float = 1.0) -> MetricMeasureSpace:
    edges = [(i, j, edge_len) for i, j in itertools.combinations(range(n), 2)]
    return MetricMeasureSpace(range(n), edges, np.full(n, float(measure)))


def make_theta(short_len: float = 2.0, long_len: float = 4.0, subdivisions: int = 1,
               measure: float = 1.0) -> MetricMeasureSpace:
    """Two arcs joining "x" to "y", of lengths ``short_len`` and ``long_len``.

    Each arc is cut into ``round(length * subdivisions)`` equal edges; interior
    nodes are "s1", "s2", ... on the short arc and "l1", "l2", ... on the long one.
    """
    if short_len <= 0 or long_len <= 0:
        raise ValidationError("arc lengths must be positive")
    if subdivisions < 1:
        raise ValidationError("subdivisions must be >= 1")
    nodes = ["x", "y"]
    edges = []
    for tag, length in (("s", short_len), ("l", long_len)):
        k = max(1, int(round(length * subdivisions)))
        step = length / k
        inner = [f"{tag}{i}" for i in range(1, k)]
        nodes.extend(inner)
        chain = ["x"] + inner + ["y"]
        edges.extend((a, b, step) for a, b in zip(chain, chain[1:]))
    return MetricMeasureSpace(nodes, edges, np.full(len(nodes), float(measure)))


def snowflake_view(space: MetricMeasureSpace, exponent: float) -> MetricMeasureSpace:
    """Same graph and measure, with d^exponent attached as the metric."""
    if not 0 < exponent <= 1:
        raise ValidationError("snowflake exponent must lie in (0, 1]")
    if exponent == 1:
        return space
    return space.with_override(np.power(space.dist, exponent))


def make_weighted_line(n: int, weight_fn: Callable, half_width: float = 1.0):
    """n equal cells tiling [-half_width, half_width]; omega evaluated at cell midpoints.

    Returns the :class:`WeightedLine` and its path-graph space with mu = omega * lambda.
    """
    if n < 2:
        raise ValidationError("need at least two cells")
    h = 2.0 * half_width / n
    mid = -half_width + h * (np.arange(n) + 0.5)
    omega = np.array([float(weight_fn(x)) for x in mid])
    line = WeightedLine(mid, np.full(n, h), omega)
    return line, line_space(line)


def power_weight_line(n: int, exponent: float, half_width: float = 1.0):
    """Weight |x|^exponent averaged exactly over each of n cells of [-half_width, half_width].

    Cell averages stay positive on the cell containing 0, where point
    evaluation would vanish.
    """
    if n < 2:
        raise ValidationError("need at least two cells")
    h = 2.0 * half_width / n
    edges = -half_width + h * np.arange(n + 1)

    def antideriv(t):
        return np.sign(t) * np.abs(t) ** (exponent + 1) / (exponent + 1)

    omega = (antideriv(edges[1:]) - antideriv(edges[:-1])) / h
    mid = 0.5 * (edges[1:] + edges[:-1])
    line = WeightedLine(mid, np.full(n, h), omega)
    return line, line_space(line)


def line_space(line: WeightedLine) -> MetricMeasureSpace:
    # adjacent centers are half a cell apart on each side; using widths keeps
    # uniform cells exactly equidistant
    w = line.widths
    edges = [(i, i + 1, float(w[i] + w[i + 1]) / 2) for i in range(len(w) - 1)]
    return build_space(edges, line.mu, nodes=range(len(w)))


def random_connected(n: int, rng, extra_edges: int = 0, lengths=(1, 2, 3), measures=(1, 2, 3)):
    """Random spanning tree plus ``extra_edges`` chords; small-integer lengths and measures."""
    nodes = list(range(n))
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges[(u, v)] = float(rng.choice(lengths))
    pairs = [(i, j) for i, j in itertools.combinations(nodes, 2) if (i, j) not in edges]
    if pairs and extra_edges:
        pick = rng.choice(len(pairs), size=min(extra_edges, len(pairs)), replace=False)
        for k in pick:
            edges[pairs[int(k)]] = float(rng.choice(lengths))
    mu = rng.choice(np.asarray(measures, dtype=float), size=n)
    return MetricMeasureSpace(nodes, [(u, v, w) for (u, v), w in edges.items()], mu)


__all__ = [
    "grid_node", "make_grid", "make_path", "make_complete", "make_theta", "snowflake_view",
    "make_weighted_line", "power_weight_line", "line_space", "random_connected",
    "NonpositiveWeight",
]
