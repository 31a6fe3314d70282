"""Discrete Muckenhoupt conditions on weighted 1-D grids.

A :class:`WeightedLine` is a row of n cells with positions, widths lambda_i
and weight values omega_i; the weighted measure is mu_i = omega_i lambda_i.
The balls are the contiguous intervals [i..j].
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NegativeInput, NonpositiveWeight, ParseError, ValidationError


@dataclass(frozen=True)
class WeightedLine:
    positions: np.ndarray
    widths: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        lam = np.asarray(self.widths, dtype=float)
        om = np.asarray(self.omega, dtype=float)
        if x.ndim != 1 or lam.shape != x.shape or om.shape != x.shape:
            raise ValidationError("positions, widths and omega must be 1-D of equal length")
        if x.size < 1:
            raise ValidationError("empty line")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("positions must be strictly increasing")
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise NonpositiveWeight("cell widths must be positive")
        if np.any(om <= 0) or not np.all(np.isfinite(om)):
            raise NonpositiveWeight("weight must be strictly positive")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "widths", lam)
        object.__setattr__(self, "omega", om)

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def mu(self) -> np.ndarray:
        return self.omega * self.widths


def _prefix(a):
    return np.concatenate([[0.0], np.cumsum(a)])


def _interval_sums(a):
    """S[i, j] = sum a[i..j] for i <= j (upper triangle; lower triangle is nan)."""
    P = _prefix(a)
    S = P[None, 1:] - P[:-1, None]
    S[np.tril_indices(a.size, k=-1)] = np.nan
    return S


def ap_integral_constant(line: WeightedLine, p: float, classical: bool = False,
                         return_interval: bool = False):
    """max over intervals B of (avg_B omega)(avg_B omega^{1-p})^{1/(p-1)}.

    With ``classical`` the textbook form (avg_B omega)(avg_B omega^{1/(1-p)})^{p-1}
    is used instead.  Averages are taken with respect to the cell widths.
    """
    if not p > 1:
        raise ValidationError("p must be > 1")
    lam = line.widths
    L = _interval_sums(lam)
    W = _interval_sums(line.omega * lam) / L
    if classical:
        V = np.power(_interval_sums(np.power(line.omega, 1.0 / (1.0 - p)) * lam) / L, p - 1.0)
    else:
        V = np.power(_interval_sums(np.power(line.omega, 1.0 - p) * lam) / L, 1.0 / (p - 1.0))
    prod = W * V
    k = int(np.nanargmax(prod))
    value = float(prod.flat[k])
    if return_interval:
        return value, divmod(k, line.n)
    return value


def average_bound_margin(line: WeightedLine, p: float, f, interval, C: float) -> float:
    """C (mu(B)^{-1} int_B f^p dmu)^{1/p} - avg_B f dlambda on B = cells interval[0]..interval[1]."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise NegativeInput("f must be non-negative")
    i, j = interval
    if not 0 <= i <= j < line.n:
        raise ValidationError(f"bad interval {interval!r}")
    sl = slice(i, j + 1)
    mu, lam = line.mu[sl], line.widths[sl]
    lp = (np.sum(np.power(f[sl], p) * mu) / mu.sum()) ** (1.0 / p)
    return float(C * lp - np.sum(f[sl] * lam) / lam.sum())


def _set_ratio(lamE, lamB, muE, muB, p):
    return (lamE / lamB) / (muE / muB) ** (1.0 / p)


def set_bound_constant(line: WeightedLine, p: float, return_witness: bool = False):
    """max over intervals B and nonempty E in B of (lambda(E)/lambda(B)) / (mu(E)/mu(B))^{1/p}.

    For each B and each cardinality m, E takes the m cells of smallest
    omega.  With uniform widths this is the exact maximizer, since lambda(E)
    is then fixed by m and mu(E) is minimized.  Nonuniform widths give a
    lower bound.
    """
    if not p >= 1:
        raise ValidationError("p must be >= 1")
    n = line.n
    best, wit = 0.0, None
    for i in range(n):
        for j in range(i, n):
            om = line.omega[i:j + 1]
            lam = line.widths[i:j + 1]
            order = np.argsort(om, kind="stable")
            lamE = np.cumsum(lam[order])
            muE = np.cumsum((om * lam)[order])
            r = _set_ratio(lamE, lamE[-1], muE, muE[-1], p)
            m = int(np.argmax(r))
            if r[m] > best:
                best = float(r[m])
                wit = (i, j, tuple(int(i + t) for t in sorted(order[:m + 1])))
    return (best, wit) if return_witness else best


def set_bound_brute_force(line: WeightedLine, p: float, max_cells: int = 15) -> float:
    """Same quantity by enumerating every subset of every interval of <= max_cells cells."""
    n = line.n
    best = 0.0
    for i in range(n):
        for j in range(i, min(n, i + max_cells)):
            lam = line.widths[i:j + 1]
            mu = line.mu[i:j + 1]
            lamB, muB = lam.sum(), mu.sum()
            m = j - i + 1
            for k in range(1, m + 1):
                for E in itertools.combinations(range(m), k):
                    E = list(E)
                    best = max(best, float(_set_ratio(lam[E].sum(), lamB, mu[E].sum(), muB, p)))
    return best


def interval_maximal(line: WeightedLine, f) -> np.ndarray:
    """Uncentered maximal function: max over intervals containing i of avg f dlambda."""
    f = np.asarray(f, dtype=float)
    avg = _interval_sums(f * line.widths) / _interval_sums(line.widths)
    avg = np.where(np.isnan(avg), -np.inf, avg)
    # tail[a, i] = max over b >= i of avg[a, b]
    tail = np.maximum.accumulate(avg[:, ::-1], axis=1)[:, ::-1]
    tail[np.tril_indices(line.n, k=-1)] = -np.inf
    return tail.max(axis=0)


def maximal_bound_ratio(line: WeightedLine, p: float, f_suite) -> float:
    """max over the suite of ||M f||_{L^p(mu)} / ||f||_{L^p(mu)}."""
    best = 0.0
    for f in f_suite:
        f = np.asarray(f, dtype=float)
        if np.any(f < 0):
            raise NegativeInput("fields must be non-negative")
        den = np.sum(np.power(f, p) * line.mu)
        if den <= 0:
            continue
        num = np.sum(np.power(interval_maximal(line, f), p) * line.mu)
        best = max(best, float((num / den) ** (1.0 / p)))
    return best


def spike_suite(line: WeightedLine, count: int | None = None) -> list:
    """Unit spikes at evenly spread cells, a default suite for the maximal bound."""
    n = line.n
    cells = range(n) if count is None or count >= n else np.linspace(0, n - 1, count).round().astype(int)
    out = []
    for c in sorted(set(int(c) for c in cells)):
        f = np.zeros(n)
        f[c] = 1.0
        out.append(f)
    return out


def save_line_csv(line: WeightedLine, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position", "lambda", "omega"])
        for row in zip(line.positions, line.widths, line.omega):
            w.writerow([repr(float(v)) for v in row])


def load_line_csv(path) -> WeightedLine:
    cols = ([], [], [])
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["position", "lambda", "omega"]:
            raise ParseError(f"{path}:1: expected header position,lambda,omega")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns")
            for col, raw in zip(cols, row):
                try:
                    col.append(float(raw))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: not a number: {raw!r}") from None
    return WeightedLine(*(np.array(c) for c in cols))
