"""Finite metric measure spaces backed by weighted undirected graphs.

The metric is always the shortest-path metric of the edge lengths.  A second
"override" metric may be attached (see :func:`poincarekit.gallery.snowflake_view`);
when present it is the metric used for balls, maximal functions and
distances d(x, y), while curve lengths remain sums of edge lengths.
"""
from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DisconnectedGraph, NonpositiveWeight, ParseError, ValidationError

# Relative slack on length budgets; absorbs last-bit disagreement between
# shortest-path sums accumulated from either endpoint.
BUDGET_RTOL = 1e-12


def within_budget(length, budget) -> bool:
    if budget == math.inf:
        return True
    return length <= budget * (1.0 + BUDGET_RTOL)


class MetricMeasureSpace:
    """Immutable finite metric measure space.

    Nodes are arbitrary hashable ids; internally everything is indexed by
    position in ``nodes``.  Parallel edges are collapsed to the shortest one.
    """

    def __init__(self, nodes, edges, measure, override_dist=None):
        self.nodes = tuple(nodes)
        self.index = {v: i for i, v in enumerate(self.nodes)}
        if len(self.index) != len(self.nodes):
            raise ValidationError("duplicate node ids")
        if not self.nodes:
            raise ValidationError("empty node set")
        n = len(self.nodes)

        self.edges = tuple((u, v, float(w)) for u, v, w in edges)
        best = {}
        for u, v, w in self.edges:
            if u not in self.index or v not in self.index:
                raise ValidationError(f"edge ({u!r}, {v!r}) references an unknown node")
            if not (w > 0) or not math.isfinite(w):
                raise NonpositiveWeight(f"edge ({u!r}, {v!r}) has non-positive length {w!r}")
            i, j = self.index[u], self.index[v]
            if i == j:
                raise ValidationError(f"self-loop at node {u!r}")
            key = (min(i, j), max(i, j))
            if key not in best or w < best[key]:
                best[key] = w
        self._edge_len = best
        self.adjacency = [[] for _ in range(n)]
        for (i, j), w in sorted(best.items()):
            self.adjacency[i].append((j, w))
            self.adjacency[j].append((i, w))
        for nbrs in self.adjacency:
            nbrs.sort()
        keys = sorted(best)
        self.edge_u = np.array([k[0] for k in keys], dtype=np.intp)
        self.edge_v = np.array([k[1] for k in keys], dtype=np.intp)
        self.edge_len = np.array([best[k] for k in keys], dtype=float)

        if isinstance(measure, Mapping):
            missing = [v for v in self.nodes if v not in measure]
            if missing:
                raise ValidationError(f"measure missing for nodes {missing[:5]!r}")
            mu = np.array([float(measure[v]) for v in self.nodes])
        else:
            mu = np.asarray(measure, dtype=float).reshape(-1)
            if mu.size == 1 and n > 1:
                mu = np.full(n, float(mu[0]))
            if mu.size != n:
                raise ValidationError("measure has wrong length")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise NonpositiveWeight("measure must be strictly positive on every node")
        self.measure = mu
        self.measure.setflags(write=False)

        self.dist = _all_pairs_dijkstra(self.adjacency)
        if not np.all(np.isfinite(self.dist)):
            raise DisconnectedGraph("graph is not connected")
        self.dist.setflags(write=False)

        if override_dist is not None:
            od = np.array(override_dist, dtype=float)
            if od.shape != (n, n):
                raise ValidationError("override metric has wrong shape")
            od.setflags(write=False)
            self.override_dist = od
        else:
            self.override_dist = None

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        tag = ", override metric" if self.override_dist is not None else ""
        return f"MetricMeasureSpace({len(self.nodes)} nodes, {len(self.edge_len)} edges{tag})"

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def metric(self) -> np.ndarray:
        """The metric d used for balls and for d(x, y)."""
        return self.dist if self.override_dist is None else self.override_dist

    def idx(self, node) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise ValidationError(f"unknown node {node!r}") from None

    def edge_length(self, u: int, v: int) -> float:
        return self._edge_len[(min(u, v), max(u, v))]

    def field(self, values) -> np.ndarray:
        """Coerce a mapping node -> value, or a sequence in node order, to an array."""
        if isinstance(values, Mapping):
            return np.array([float(values[v]) for v in self.nodes])
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 0:
            return np.full(self.n, float(arr))
        if arr.shape != (self.n,):
            raise ValidationError(f"field has shape {arr.shape}, expected ({self.n},)")
        return arr

    def with_override(self, override_dist) -> "MetricMeasureSpace":
        return MetricMeasureSpace(self.nodes, self.edges, self.measure, override_dist)

    @cached_property
    def sorted_rows(self):
        """Per-center ordering of nodes by distance.

        Returns (order, dsorted, ends): ``order[x]`` lists node indices by
        increasing d(x, .), ``dsorted`` the matching distances and ``ends`` marks
        the last position of each group of tied distances, i.e. the positions
        at which a closed ball is complete.
        """
        d = self.metric
        order = np.argsort(d, axis=1, kind="stable")
        dsorted = np.take_along_axis(d, order, axis=1)
        ends = np.ones_like(dsorted, dtype=bool)
        ends[:, :-1] = dsorted[:, :-1] < dsorted[:, 1:]
        return order, dsorted, ends

    @cached_property
    def cumulative_measure(self) -> np.ndarray:
        order, _, _ = self.sorted_rows
        return np.cumsum(self.measure[order], axis=1)

    @cached_property
    def incidence(self):
        """(edge ids sorted by endpoint, offsets) for per-node reductions over incident edges."""
        ends = np.concatenate([self.edge_u, self.edge_v])
        eids = np.concatenate([np.arange(len(self.edge_u)), np.arange(len(self.edge_u))])
        perm = np.argsort(ends, kind="stable")
        counts = np.bincount(ends, minlength=self.n)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return eids[perm], offsets, counts


def _all_pairs_dijkstra(adjacency) -> np.ndarray:
    # Distances accumulate left to right from the source, the same order in
    # which curve lengths are summed.
    n = len(adjacency)
    out = np.full((n, n), math.inf)
    for s in range(n):
        row = out[s]
        row[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > row[u]:
                continue
            for v, w in adjacency[u]:
                nd = d + w
                if nd < row[v]:
                    row[v] = nd
                    heapq.heappush(heap, (nd, v))
    # symmetrize: sums from either end may disagree in the last bit
    return np.minimum(out, out.T)


@dataclass(frozen=True)
class Ball:
    center: Hashable
    radius: float
    members: frozenset
    mask: np.ndarray = field(repr=False, compare=False)
    mass: float = field(compare=False, default=0.0)


def build_space(edges: Iterable[Sequence], measure, nodes=None, override_dist=None) -> MetricMeasureSpace:
    """Build a space from ``(u, v, length)`` triples and a node measure.

    ``nodes`` fixes the node order; by default nodes appear in the order of
    the measure mapping, or of first appearance in ``edges``.
    """
    edges = [tuple(e) for e in edges]
    if nodes is None:
        if isinstance(measure, Mapping):
            nodes = list(measure)
        else:
            seen = {}
            for u, v, _ in edges:
                seen.setdefault(u, None)
                seen.setdefault(v, None)
            nodes = list(seen)
    return MetricMeasureSpace(nodes, edges, measure, override_dist)


def ball(space: MetricMeasureSpace, x, r: float) -> Ball:
    xi = space.idx(x)
    if r < 0:
        raise ValidationError("radius must be non-negative")
    mask = space.metric[xi] <= r
    members = frozenset(space.nodes[i] for i in np.flatnonzero(mask))
    return Ball(x, float(r), members, mask, float(space.measure[mask].sum()))


def ball_mass(space: MetricMeasureSpace, xi: int, r) -> np.ndarray:
    """mu(B(x, r)) for one center index and an array of radii."""
    _, dsorted, _ = space.sorted_rows
    pos = np.searchsorted(dsorted[xi], np.asarray(r, dtype=float), side="right") - 1
    return space.cumulative_measure[xi][pos]


def critical_radii(space: MetricMeasureSpace, xi: int) -> np.ndarray:
    """Positive radii at which mu(B(x, r)) or mu(B(x, 2r)) can jump."""
    d = space.metric[xi]
    d = d[d > 0]
    return np.unique(np.concatenate([d, d / 2.0]))


def doubling_constant(space: MetricMeasureSpace, r_max: float | None = None) -> float:
    """sup over x and 0 < r (< r_max) of mu(B(x, 2r)) / mu(B(x, r)).

    Both ball masses are right-continuous step functions of r, so the sup
    is attained at a critical radius or is the trivial ratio 1.
    """
    best = 1.0
    for xi in range(space.n):
        radii = critical_radii(space, xi)
        if r_max is not None:
            radii = radii[radii < r_max]
        if radii.size == 0:
            continue
        ratio = ball_mass(space, xi, 2.0 * radii) / ball_mass(space, xi, radii)
        best = max(best, float(ratio.max()))
    return best


def quasiconvexity_constant(space: MetricMeasureSpace, override_dist=None) -> float:
    """max over pairs of (path-metric distance) / (comparison distance).

    The comparison distance defaults to the space's own metric, so this is 1
    unless an override metric is attached or passed in.
    """
    ref = space.metric if override_dist is None else np.asarray(override_dist, dtype=float)
    if ref.ndim == 0:
        ref = np.full((space.n, space.n), float(ref))
    iu = np.triu_indices(space.n, k=1)
    if iu[0].size == 0:
        return 1.0
    return float(np.max(space.dist[iu] / ref[iu]))


# -- file formats -------------------------------------------------------------

def _decode_id(raw):
    if isinstance(raw, list):
        return tuple(_decode_id(r) for r in raw)
    return raw


def _decode_number(raw, where):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: not a number: {raw!r}") from None


def space_to_dict(space: MetricMeasureSpace) -> dict:
    doc = {
        "schema_version": 1,
        "nodes": list(space.nodes),
        "edges": [[u, v, repr(w)] for u, v, w in space.edges],
        "measure": {str(v): repr(float(m)) for v, m in zip(space.nodes, space.measure)},
    }
    if space.override_dist is not None:
        doc["override_metric"] = [[repr(float(t)) for t in row] for row in space.override_dist]
    return doc


def space_from_dict(doc) -> MetricMeasureSpace:
    if not isinstance(doc, Mapping):
        raise ParseError("space file must hold a JSON object")
    for key in ("nodes", "edges", "measure"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}")
    nodes = [_decode_id(v) for v in doc["nodes"]]
    if not isinstance(doc["edges"], list):
        raise ParseError("key 'edges' must be a list")
    edges = []
    for k, e in enumerate(doc["edges"]):
        if not isinstance(e, list) or len(e) != 3:
            raise ParseError(f"key 'edges'[{k}] must be [u, v, length]")
        edges.append((_decode_id(e[0]), _decode_id(e[1]), _decode_number(e[2], f"edges[{k}]")))
    raw_measure = doc["measure"]
    if not isinstance(raw_measure, Mapping):
        raise ParseError("key 'measure' must be an object")
    measure = {}
    for v in nodes:
        key = str(v)
        if key not in raw_measure:
            raise ParseError(f"key 'measure' has no entry for node {key!r}")
        measure[v] = _decode_number(raw_measure[key], f"measure[{key!r}]")
    override = None
    if "override_metric" in doc:
        raw = doc["override_metric"]
        if not isinstance(raw, list) or len(raw) != len(nodes):
            raise ParseError("key 'override_metric' must be a square matrix over the nodes")
        override = [[_decode_number(t, f"override_metric[{i}]") for t in row]
                    for i, row in enumerate(raw)]
    return MetricMeasureSpace(nodes, edges, measure, override)


def save_json(space: MetricMeasureSpace, path) -> None:
    with open(path, "w") as fh:
        json.dump(space_to_dict(space), fh, indent=1)


def load_json(path) -> MetricMeasureSpace:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return space_from_dict(doc)


def _maybe_int(tokens):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        return list(tokens)


def save_csv(space: MetricMeasureSpace, edges_path, measure_path) -> None:
    with open(edges_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "length"])
        for u, v, length in space.edges:
            w.writerow([u, v, repr(length)])
    with open(measure_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "measure"])
        for v, m in zip(space.nodes, space.measure):
            w.writerow([v, repr(float(m))])


def load_csv(edges_path, measure_path) -> MetricMeasureSpace:
    """Edge list ``u,v,length`` plus a separate ``node,measure`` table."""
    rows = []
    with open(edges_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["u", "v", "length"]:
            raise ParseError(f"{edges_path}: line 1: expected header u,v,length")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{edges_path}: line {lineno}: expected 3 columns")
            rows.append((row[0], row[1], _decode_number(row[2], f"{edges_path}: line {lineno}")))
    mrows = []
    with open(measure_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["node", "measure"]:
            raise ParseError(f"{measure_path}: line 1: expected header node,measure")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{measure_path}: line {lineno}: expected 2 columns")
            mrows.append((row[0], _decode_number(row[1], f"{measure_path}: line {lineno}")))
    ids = _maybe_int([r[0] for r in mrows] + [r[0] for r in rows] + [r[1] for r in rows])
    k = len(mrows)
    m = len(rows)
    node_ids = ids[:k]
    us, vs = ids[k:k + m], ids[k + m:]
    edges = [(u, v, r[2]) for u, v, r in zip(us, vs, rows)]
    measure = {v: r[1] for v, r in zip(node_ids, mrows)}
    return MetricMeasureSpace(node_ids, edges, measure)
