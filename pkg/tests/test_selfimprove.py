import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poincarekit import (InvalidExponent, IterationParams, NoPathBound, ValidationError,
                         WindowViolated, crucial_inequality_check, default_params,
                         iteration_step, kz_empirical_scan, kz_epsilon_bound, kz_epsilon_from_CA,
                         level_decomposition, make_grid, make_path, make_theta,
                         scale_to_admissible, select_level)
from poincarekit.curves import CurvePath
from poincarekit.selfimprove import (ASYMPTOTIC_NOTE, choose_k, find_gaps, formula_k,
                                     h_bound_rhs, kz_epsilon_log2, large_p_ratio)


def wall_obstacle(size=9, diag=8, tau=0.6, q=1.99):
    space = make_grid(size, size)
    g = np.zeros(space.n)
    for r in range(size):
        c = diag - r
        if 0 <= c < size:
            g[r * size + c] = 1.0
    params = IterationParams(2.0, q, tau=tau)
    ob = scale_to_admissible(space, g, q, params.L, tau, 0, space.n - 1)
    return space, ob, params


def test_epsilon_values():
    assert kz_epsilon_bound(2, 2, 1) == 2.0**-38
    assert kz_epsilon_from_CA(1, 2, 1) == 2.0**-16
    # log2: 1 - (29 + 10 log2 D) at p = 2, C_PI = 1
    assert kz_epsilon_log2(4, 2, 1) == 1 - 29 - 20


def test_epsilon_monotone_in_constants():
    assert kz_epsilon_bound(3, 2, 1) < kz_epsilon_bound(2, 2, 1)
    assert kz_epsilon_bound(2, 2, 2) < kz_epsilon_bound(2, 2, 1)
    assert kz_epsilon_from_CA(2, 2, 1) < kz_epsilon_from_CA(1, 2, 1)
    assert kz_epsilon_from_CA(1, 2, 3) < kz_epsilon_from_CA(1, 2, 1)


def test_epsilon_log_domain_large_p():
    # epsilon approaches p / (2^13 C_PI D^3) for large p
    assert kz_epsilon_bound(2, 1e6, 1) == pytest.approx(1e6 / (2**13 * 8), rel=1e-3)
    assert math.isfinite(kz_epsilon_log2(2, 1e300, 1))
    assert large_p_ratio(1, 1e6, 1) == pytest.approx(1, rel=0.01)
    assert large_p_ratio(1, 1e6, 1, power=12) == pytest.approx(0.5, rel=0.01)
    assert "2^13" in ASYMPTOTIC_NOTE


def test_epsilon_rejects_bad_exponent():
    with pytest.raises(InvalidExponent):
        kz_epsilon_bound(2, 1.0, 1)
    with pytest.raises(ValidationError):
        kz_epsilon_bound(0.5, 2, 1)


def test_formula_k_and_window():
    # (2^15)^{1/1} / 2^{-2}
    assert formula_k(2, 1, 1, 0.5) == 2**17
    params = default_params(2.0, 2.0, C_A=1, D=1)
    assert params.k == 2**17 and params.window() == 1.0
    with pytest.raises(WindowViolated):
        default_params(2.0, 1.99, C_A=1, D=1)


def test_params_validation():
    with pytest.raises(ValidationError):
        IterationParams(2.0, 2.5)
    with pytest.raises(ValidationError):
        IterationParams(2.0, 1.5, delta=1.0)
    with pytest.raises(ValidationError):
        IterationParams(2.0, 1.5, M=1.5)
    P = IterationParams(2.0, 1.5, C=2.0, M=2.0, delta=0.5, k=3)
    assert P.L == 4.0 and P.S == 16.0


def test_h_bound_rhs_value():
    assert h_bound_rhs(2, 2, 1, 2, 1) == pytest.approx(2**5.5)


def test_level_decomposition_nested():
    space, ob, params = wall_obstacle()
    dec = level_decomposition(space, ob, IterationParams(2.0, 1.99, tau=ob.tau, k=4))
    sizes = [dec.E(i).sum() for i in range(1, 5)]
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[0] > 0
    assert not dec.E(1)[0] and not dec.E(1)[-1]
    assert dec.h_bound_ok


def test_find_gaps():
    space = make_path(6)
    path = CurvePath.from_nodes(space, range(6))
    mask = np.array([0, 1, 1, 0, 1, 0], dtype=bool)
    assert find_gaps(path, mask) == [(1, 2), (4, 4)]
    with pytest.raises(ValidationError):
        find_gaps(path, np.array([0, 0, 0, 0, 0, 1], dtype=bool))


def test_select_level_raises_without_bound():
    space, ob, params = wall_obstacle()
    P = IterationParams(2.0, 1.99, tau=ob.tau, k=1)
    dec = level_decomposition(space, ob, P)
    straight = CurvePath.from_nodes(space, list(range(9)) + [17 + 9 * i for i in range(8)])
    with pytest.raises(NoPathBound):
        select_level(space, straight, dec, 1e-6, 16.0)


def test_iteration_step_on_wall():
    space, ob, params = wall_obstacle()
    P = choose_k(space, ob, params)
    trace = iteration_step(space, ob, P)
    assert trace.ok, trace.checks
    assert len(trace.gaps) >= 1
    assert trace.gamma_prime.start == 0 and trace.gamma_prime.end == space.n - 1
    doc = trace.to_dict(space)
    json.dumps(doc)
    assert all(doc["checks"].values())


def test_iteration_step_depth_two():
    space, ob, params = wall_obstacle(diag=6)
    P = choose_k(space, ob, params)
    trace = iteration_step(space, ob, P, depth=2)
    assert trace.ok


def test_iteration_on_theta():
    t = make_theta(2, 4, 2)
    g = np.array([1.0 if v.startswith("s") else 0.0 for v in t.nodes])
    params = IterationParams(2.0, 1.99, tau=0.5)
    ob = scale_to_admissible(t, g, 1.99, params.L, 0.5, t.idx("x"), t.idx("y"))
    trace = iteration_step(t, ob, choose_k(t, ob, params))
    assert trace.ok


@given(st.integers(0, 2**31 - 1), st.floats(0.2, 1.0))
def test_crucial_margin_nonnegative(seed, tau):
    rng = np.random.default_rng(seed)
    space = make_grid(6, 6)
    shape = (rng.random(36) < 0.3) * rng.random(36)
    xi, yi = (int(v) for v in rng.choice(36, 2, replace=False))
    params = IterationParams(2.0, 1.9, tau=tau)
    ob = scale_to_admissible(space, shape, 1.9, params.L, tau, xi, yi)
    if ob is None:
        return
    m = crucial_inequality_check(space, params, [ob])[0]
    assert m.margin >= 0


def test_scan_small_grid():
    space = make_grid(5, 5)
    scan = kz_empirical_scan(space, 2.0, 1.0, [1.5, 1.75], C_A=0.5)
    assert [r.q for r in scan.rows] == [2.0, 1.75, 1.5]
    assert scan.monotone
    assert all(r.within for r in scan.rows)
    assert scan.epsilon_bound > 0 and scan.epsilon_from_CA > 0
    assert len(scan.to_rows()) == 3
    with pytest.raises(InvalidExponent):
        kz_empirical_scan(space, 2.0, 1.0, [0.9])
