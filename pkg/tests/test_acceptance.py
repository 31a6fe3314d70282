"""Ten acceptance criteria, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from poincarekit import (IterationParams, SearchConfig, ap_connectivity_constant,
                         characterization_consistency, crucial_inequality_check,
                         definition_ap_constant, doubling_constant, enumerate_paths_oracle,
                         exhaustive_alpha, kz_empirical_scan, kz_epsilon_bound,
                         kz_epsilon_from_CA, make_complete, make_grid, make_obstacle,
                         make_path, make_theta, max_max_margin, min_obstruction_path,
                         pi_constant, power_weight_line, ap_integral_constant,
                         scale_to_admissible, sublinearity_check, weak_type_margin)
from poincarekit.curves import curve_integral
from poincarekit.gallery import random_connected
from poincarekit.selfimprove import ASYMPTOTIC_NOTE, choose_k, iteration_step, large_p_ratio


def report(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line, file=sys.__stdout__, flush=True)
    return ok


# -- 1 and 2: maximal function estimates ------------------------------------------

def _maximal_suite(seed=2024, spaces=125, per_space=8):
    rng = np.random.default_rng(seed)
    for _ in range(spaces):
        n = int(rng.integers(2, 41))
        space = random_connected(n, rng, extra_edges=int(rng.integers(0, n)))
        D = doubling_constant(space)
        for _ in range(per_space):
            p = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
            f = rng.random(n) * (rng.random(n) < 0.6) * float(rng.choice([1.0, 10.0]))
            diam = float(space.metric.max())
            s = float(rng.uniform(0, diam))
            r = float(rng.uniform(0, diam))
            lam = float(rng.uniform(0.01, 1.2) * max(f.max(), 1e-3))
            x = int(rng.integers(n))
            yield space, f, p, s, r, lam, x, D


def test_criterion_1_max_max():
    t0 = time.perf_counter()
    worst, count = math.inf, 0
    for space, f, p, s, r, lam, x, D in _maximal_suite():
        xid = space.nodes[x]
        worst = min(worst, max_max_margin(space, f, p, s, r, lam, xid, doubling=D))
        count += 1
    dt = time.perf_counter() - t0
    ok = count >= 1000 and worst >= 0 and dt < 60
    report(1, ok, f"max-max margin min={worst:.3g} over {count} instances in {dt:.1f}s")
    assert ok


def test_criterion_2_weak_type():
    t0 = time.perf_counter()
    worst, count = math.inf, 0
    for space, f, p, s, r, lam, x, D in _maximal_suite():
        worst = min(worst, weak_type_margin(space, f, p, s, lam, space.nodes[x], r, doubling=D))
        count += 1
    dt = time.perf_counter() - t0
    ok = count >= 1000 and worst >= 0 and dt < 60
    report(2, ok, f"weak-type margin min={worst:.3g} over {count} instances in {dt:.1f}s")
    assert ok


# -- 3: solver exactness ----------------------------------------------------------

def test_criterion_3_solver_vs_oracle():
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    mismatches, count = 0, 0
    while count < 500:
        n = int(rng.integers(2, 10))
        space = random_connected(n, rng, extra_edges=int(rng.integers(0, 3)))
        xi, yi = (int(v) for v in rng.choice(n, 2, replace=False))
        d = space.metric[xi, yi]
        budget = d * float(rng.choice([1.0, 1.25, 1.5, 2.0]))
        if rng.random() < 0.5:
            g = rng.random(n)
        else:
            g = rng.integers(0, 4, n).astype(float)
        path = min_obstruction_path(space, xi, yi, g, budget, by_index=True)
        walks = enumerate_paths_oracle(space, xi, yi, budget, node_cap=9, g=g, by_index=True)
        best = min(curve_integral(w, g) for w in walks)
        if curve_integral(path, g) != best:
            mismatches += 1
        count += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 120
    report(3, ok, f"{mismatches} mismatches over {count} instances in {dt:.1f}s")
    assert ok


# -- 4: alpha characterization ----------------------------------------------------

TAU_GRID = (0.02, 0.05, 0.1, 0.25, 0.5, 1.0)


def test_criterion_4_alpha_characterization():
    cases = [("K3", make_complete(3), 1.0, 1.0), ("theta", make_theta(2, 4, 1), 1.0, 1.0),
             ("theta", make_theta(2, 4, 1), 1.0, 2.0), ("theta", make_theta(2, 4, 1), 2.0, 1.0)]
    details, ok = [], True
    for name, space, p, C in cases:
        via_alpha = ap_connectivity_constant(space, p, C, TAU_GRID, exhaustive=True)
        direct = definition_ap_constant(space, p, C)
        rel = abs(via_alpha - direct) / direct
        ok &= rel < 0.01
        details.append(f"{name}(p={p:g},C={C:g}) {via_alpha:.6f} vs {direct:.6f}")
    report(4, ok, "; ".join(details))
    assert ok


# -- 5: sublinearity --------------------------------------------------------------

def test_criterion_5_sublinearity():
    rng = np.random.default_rng(5)
    spaces = [make_complete(3), make_theta(2, 4, 1), make_path(4)]
    spaces += [random_connected(int(rng.integers(3, 6)), rng, extra_edges=1) for _ in range(3)]
    cfg = SearchConfig()
    worst_slack, worst_resid, count = math.inf, Fraction(0), 0
    for space in spaces:
        for C in (1.0, 2.0):
            for tau in (0.1, 0.2, 0.3):
                base = exhaustive_alpha(space, 1.0, C, tau, cfg)
                for K in (1, 2, 3):
                    top = exhaustive_alpha(space, 1.0, C, K * tau, cfg)
                    if top.witness is None:
                        continue
                    rep = sublinearity_check(space, 1.0, C, tau, K, top.witness,
                                             exact_alpha=(base.alpha, top.alpha))
                    worst_slack = min(worst_slack, rep.alpha_slack)
                    worst_resid = max(worst_resid, abs(rep.linearity_residual))
                    count += 1
    ok = count > 0 and worst_slack >= -1e-12 and worst_resid == 0
    report(5, ok, f"min slack {worst_slack:.3g}, max linearity residual {worst_resid} "
                  f"over {count} instances")
    assert ok


# -- 6: epsilon formulas ----------------------------------------------------------

def test_criterion_6_epsilon_formulas():
    a = kz_epsilon_bound(2, 2, 1)
    b = kz_epsilon_from_CA(1, 2, 1)
    ratio = large_p_ratio(1.0, 1e6, 1.0)
    ok = a == 2.0**-38 and b == 2.0**-16 and abs(ratio - 1) < 0.01 and "2^12" in ASYMPTOTIC_NOTE
    report(6, ok, f"eps(2,2,1)=2^{math.log2(a):g}, eps_CA(1,2,1)=2^{math.log2(b):g}, "
                  f"large-p ratio {ratio:.6f}; {ASYMPTOTIC_NOTE}")
    assert ok


# -- 7: iteration-step certificates -----------------------------------------------

def _wall(space, w, h, diag, gap_col=None):
    g = np.zeros(space.n)
    for r in range(h):
        c = diag - r
        if 0 <= c < w and c != gap_col:
            g[r * w + c] = 1.0
    return g


def iteration_instances(seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for size in (7, 8, 9):
        space = make_grid(size, size)
        x, y = 0, size * size - 1
        for diag in range(2, 2 * size - 3):
            for tau in (0.3, 0.5, 0.7, 0.9):
                gap = None if rng.random() < 0.5 else int(rng.integers(size))
                shape = _wall(space, size, size, diag, gap)
                out.append((space, shape, x, y, tau))
        for _ in range(30):
            shape = (rng.random(space.n) < 0.25).astype(float) * rng.uniform(0.5, 1.0, space.n)
            xi, yi = (int(v) for v in rng.choice(space.n, 2, replace=False))
            out.append((space, shape, xi, yi, float(rng.uniform(0.2, 1.0))))
    for sub in (1, 2, 3):
        space = make_theta(2, 4, sub)
        x, y = space.idx("x"), space.idx("y")
        short = np.array([1.0 if str(v).startswith("s") else 0.0 for v in space.nodes])
        for tau in (0.3, 0.5, 0.7, 0.9):
            out.append((space, short, x, y, tau))
            out.append((space, rng.random(space.n), x, y, tau))
    return out


def _run_iteration(space, shape, x, y, tau, q=1.99, p=2.0):
    params = IterationParams(p, q, C=1.0, tau=tau)
    ob = scale_to_admissible(space, shape, q, params.L, tau, x, y)
    if ob is None:
        return None
    P = choose_k(space, ob, params)
    trace = iteration_step(space, ob, P)
    margin = crucial_inequality_check(space, params, [ob])[0].margin
    return trace, margin


def test_criterion_7_iteration_certificates():
    t0 = time.perf_counter()
    count, violations, gaps, worst = 0, [], 0, math.inf
    for space, shape, x, y, tau in iteration_instances():
        res = _run_iteration(space, shape, x, y, tau)
        if res is None:
            continue
        trace, margin = res
        count += 1
        gaps += len(trace.gaps)
        violations += [k for k, v in trace.checks.items() if not v]
        worst = min(worst, margin)
    dt = time.perf_counter() - t0
    ok = count >= 200 and not violations and worst >= 0
    report(7, ok, f"{count} instances ({gaps} gaps), {len(violations)} violations, "
                  f"min crucial margin {worst:.3g}, {dt:.1f}s")
    assert ok


# -- 8: characterization consistency ----------------------------------------------

def test_criterion_8_characterization_consistency():
    fixtures = [("K3", make_complete(3)), ("path5", make_path(5)),
                ("theta", make_theta(2, 4, 1)), ("grid3", make_grid(3, 3))]
    details, ok = [], True
    for name, space in fixtures:
        for rep in characterization_consistency(space, 2.0, C_grid=(1.0, 2.0)):
            integral = min((a for a, _ in rep.ptpi_to_ap), default=0.0)
            length = min((b for _, b in rep.ptpi_to_ap), default=0.0)
            good = rep.ok and integral >= 0 and length >= 0 and rep.ptpi_to_ap
            ok &= bool(good)
            details.append(f"{name}/C={rep.C:g} C_PPI={rep.C_PPI:.3f} "
                           f"C_A margin {integral:.3g} len margin {length:.3g}")
    report(8, ok, "; ".join(details))
    assert ok


# -- 9: weights regime ------------------------------------------------------------

def test_criterion_9_weights_regime():
    sizes = (101, 201, 401)
    mild = [ap_integral_constant(power_weight_line(n, 0.5)[0], 2.0) for n in sizes]
    steep = [ap_integral_constant(power_weight_line(n, 1.5)[0], 2.0) for n in sizes]
    spread = (max(mild) - min(mild)) / min(mild)
    growth = steep[-1] / steep[0] - 1
    ok = spread < 0.10 and growth > 0.50
    report(9, ok, f"|x|^0.5: {[round(v, 4) for v in mild]} (spread {spread:.1%}); "
                  f"|x|^1.5: {[round(v, 2) for v in steep]} (growth {growth:.0%})")
    assert ok


# -- 10: empirical scan -----------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_kz_scan():
    t0 = time.perf_counter()
    space = make_grid(9, 9)
    D = doubling_constant(space)
    base = pi_constant(space, 2.0, 1.0).C_PI
    eps = kz_epsilon_bound(D, 2.0, base)
    fine = [2.0 - eps, 2.0 - eps / 2]
    coarse = [1.5, 1.625, 1.75, 1.875]
    scan_fine = kz_empirical_scan(space, 2.0, 1.0, fine)
    scan = kz_empirical_scan(space, 2.0, 1.0, coarse)
    within = all(r.search <= 10 * scan_fine.base and r.pooled <= 10 * scan_fine.base
                 for r in scan_fine.rows)
    dt = time.perf_counter() - t0
    ok = within and scan.monotone and dt < 600
    table = ", ".join(f"q={r.q:g}:{r.pooled:.4f}" for r in scan.rows)
    report(10, ok, f"eps={eps:.3g}, C_PI(2)={scan_fine.base:.4f}, window within 10x: {within}; "
                   f"coarse table {table} monotone={scan.monotone}; {dt:.1f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
