import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmtfb.analytic import (
    InfeasibleRateError,
    MultiplexPoint,
    SweepAxis,
    SystemConfig,
    c_recursion,
    cbar_recursion,
    check_feasible,
    cut_branch,
    cut_index,
    d_exponent,
    d_opt,
    d_opt_piecewise_ymn,
    feasible_grid,
    g_exponent,
    hel_holds,
    sample_curve,
    verify_closed_forms,
)

from oracles import brute_subsets, g_grid_infimum


# -- g_exponent ---------------------------------------------------------------


@pytest.mark.parametrize(
    "m, n, r, p, expected",
    [
        (3, 4, 0.0, 1.0, 12.0),
        (3, 4, 3.0, 1.0, 0.0),
        (3, 4, 1.5, 1.0, 4.0),
        (1, 1, 0.3, 1.0, 0.7),
    ],
)
def test_g_exponent_examples(m, n, r, p, expected):
    assert g_exponent(m, n, r, p) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("m, n, r, p", [(3, 4, 1.5, 1.0), (1, 1, 0.3, 1.0), (2, 3, 0.75, 1.5)])
def test_g_exponent_examples_against_grid_oracle(m, n, r, p):
    assert g_exponent(m, n, r, p) == pytest.approx(g_grid_infimum(m, n, r, p), abs=1e-9)


def test_g_exponent_beyond_last_breakpoint_is_zero():
    assert g_exponent(2, 5, 7.3, 1.0) == 0.0
    assert g_exponent(2, 5, 4.0, 2.0) == 0.0


@pytest.mark.parametrize("p", [0.0, -1.0])
def test_g_exponent_rejects_nonpositive_power(p):
    with pytest.raises(ValueError):
        g_exponent(2, 2, 0.5, p)


@given(
    m=st.integers(1, 6), n=st.integers(1, 6),
    p=st.floats(0.01, 50, allow_nan=False), data=st.data(),
)
def test_g_exponent_exact_at_breakpoints(m, n, p, data):
    k = data.draw(st.integers(0, min(m, n)))
    assert g_exponent(m, n, k * p, p) == pytest.approx(p * (m - k) * (n - k), rel=1e-12, abs=1e-12)


@given(
    m=st.integers(1, 5), n=st.integers(1, 5),
    r1=st.floats(0, 6), r2=st.floats(0, 6),
    p1=st.floats(0.05, 20), p2=st.floats(0.05, 20),
)
def test_g_exponent_monotone(m, n, r1, r2, p1, p2):
    lo, hi = sorted((r1, r2))
    assert g_exponent(m, n, hi, p1) <= g_exponent(m, n, lo, p1) + 1e-9
    plo, phi = sorted((p1, p2))
    assert g_exponent(m, n, r1, plo) <= g_exponent(m, n, r1, phi) + 1e-9


# -- d_exponent ---------------------------------------------------------------


def test_d_exponent_examples():
    assert d_exponent(SystemConfig(3, 4, 1), (0.0,), 1.0) == 12.0
    assert d_exponent(SystemConfig(3, 4, 2), (1.5, 1.5), 1.0) == pytest.approx(3.0)
    assert d_exponent(SystemConfig(1, 2, 2), (0.0, 0.0), 1.0) == 2.0


def test_d_exponent_matches_explicit_subset_enumeration():
    cfg = SystemConfig(2, 3, 3)
    r = (0.4, 0.7, 0.9)
    by_subset = {
        S: g_exponent(len(S) * 2, 3, sum(r[i] for i in S), 1.7) for S in brute_subsets(3)
    }
    assert d_exponent(cfg, r, 1.7) == min(by_subset.values())


def test_infeasible_rates_name_the_subset():
    with pytest.raises(InfeasibleRateError) as err:
        d_exponent(SystemConfig(3, 4, 2), (2.0, 2.0), 1.0)
    assert err.value.subset == (0, 1)
    assert err.value.limit == 4
    with pytest.raises(InfeasibleRateError):
        check_feasible(SystemConfig(1, 1), (1.0,))  # boundary is excluded


@settings(max_examples=60)
@given(st.lists(st.floats(0, 1.0), min_size=2, max_size=3), st.floats(0.1, 5))
def test_d_exponent_below_single_user_terms(r, p):
    cfg = SystemConfig(2, 3, len(r))
    try:
        d = d_exponent(cfg, r, p)
    except InfeasibleRateError:
        return
    for s in range(len(r)):
        assert d <= g_exponent(2, 3, r[s], p) + 1e-12


# -- recursions -----------------------------------------------------------------


def unrolled_c(m, n, r, j):
    c = 0.0
    for _ in range(j):
        c = g_exponent(m, n, r, 1 + c)
    return c


def test_c_recursion_examples():
    assert c_recursion(SystemConfig(3, 4), (0.0,), 2) == 156.0
    assert c_recursion(SystemConfig(2, 2, 3), (0.3, 0.1, 0.2), 0) == 0.0
    assert c_recursion(SystemConfig(1, 1), (0.25,), 3) == pytest.approx(2.25)
    assert c_recursion(SystemConfig(1, 1), (0.25,), 3) == pytest.approx(unrolled_c(1, 1, 0.25, 3))


def test_cbar_recursion_examples():
    assert cbar_recursion(SystemConfig(3, 4, y=12), (0.0,), 2) == 156.0
    assert cbar_recursion(SystemConfig(3, 4, y=12), (0.0,), 1) == 12.0
    assert cbar_recursion(SystemConfig(1, 1, y=0.2), (0.5,), 2) == pytest.approx(0.7)
    # unrolled: G_{1,1}(0.5, 1 + min(0.2, G_{1,1}(0.5, 1)))
    assert cbar_recursion(SystemConfig(1, 1, y=0.2), (0.5,), 2) == pytest.approx(
        g_exponent(1, 1, 0.5, 1 + min(0.2, g_exponent(1, 1, 0.5, 1))))


@settings(max_examples=60)
@given(m=st.integers(1, 4), n=st.integers(1, 4), frac=st.floats(0, 0.99), y=st.floats(0, 30))
def test_recursion_properties(m, n, frac, y):
    r = (frac * min(m, n),)
    cfg = SystemConfig(m, n, 1, 1, y)
    cs = [c_recursion(cfg, r, j) for j in range(5)]
    assert all(b > a for a, b in zip(cs, cs[1:]))
    assert cbar_recursion(cfg, r, 1) == cs[1]
    perfect = cfg.with_(y=math.inf)
    assert [cbar_recursion(perfect, r, j) for j in range(5)] == cs


# -- d_opt ------------------------------------------------------------------------


def test_d_opt_examples():
    assert d_opt(SystemConfig(3, 4, 1, 2, 12), (0.0,)) == 24.0
    assert d_opt(SystemConfig(3, 4, 1, 1, 12), (0.0,)) == 12.0
    assert d_opt(SystemConfig(1, 1, 1, 4, math.inf), (0.5,)) == pytest.approx(2.0)


@settings(max_examples=60)
@given(m=st.integers(1, 3), n=st.integers(1, 4), K=st.integers(1, 6),
       r1=st.floats(0, 1), r2=st.floats(0, 1))
def test_d_opt_limits(m, n, K, r1, r2):
    cfg = SystemConfig(m, n, 2, K, math.inf)
    r = (r1, r2)
    try:
        check_feasible(cfg, r)
    except InfeasibleRateError:
        return
    assert d_opt(cfg, r) == c_recursion(cfg, r, K)
    assert d_opt(cfg.with_(y=0.0), r) == pytest.approx(c_recursion(cfg, r, 1), abs=1e-12)


@settings(max_examples=40)
@given(m=st.integers(1, 3), n=st.integers(1, 4), K=st.integers(1, 5), y=st.floats(0, 20),
       a=st.floats(0, 0.98), b=st.floats(0, 0.98))
def test_d_opt_non_increasing_in_r(m, n, K, y, a, b):
    cfg = SystemConfig(m, n, 1, K, y)
    top = min(m, n)
    lo, hi = sorted((a * top, b * top))
    assert d_opt(cfg, (hi,)) <= d_opt(cfg, (lo,)) + 1e-9


def test_doubling_on_small_grid():
    for m in range(1, 5):
        for n in range(1, 5):
            base = SystemConfig(m, n, 1, 1, m * n)
            assert d_opt(base, (0.0,)) == m * n
            for K in range(2, 7):
                assert d_opt(base.with_(K=K), (0.0,)) == 2 * m * n


# -- three-branch form ---------------------------------------------------------------


def test_piecewise_examples():
    cfg = SystemConfig(3, 4, 1, 1, 12)
    assert d_opt_piecewise_ymn(cfg, (0.0,), 1) == 12.0
    assert d_opt_piecewise_ymn(cfg, (0.0,), 5) == 24.0
    siso = SystemConfig(1, 1, 1, 1, 1)
    assert cut_index(siso, (0.5,)) == 2
    assert d_opt_piecewise_ymn(siso, (0.5,), 3) == pytest.approx(1.5)
    assert d_opt_piecewise_ymn(siso, (0.5,), 3) == pytest.approx(d_opt(siso.with_(K=3), (0.5,)))
    assert cut_branch(siso, (0.5,), 3) == "j=k+1"


def test_piecewise_requires_y_equal_mn():
    with pytest.raises(ValueError):
        d_opt_piecewise_ymn(SystemConfig(3, 4, 1, 1, 11), (0.0,), 2)
    with pytest.raises(ValueError):
        d_opt_piecewise_ymn(SystemConfig(3, 4, 1, 1), (0.0,), 2)


def test_piecewise_tie_counts_as_j_le_k():
    # SISO r = 0: C_1 = 1 = mn exactly, so k = 1
    siso = SystemConfig(1, 1, 1, 1, 1)
    assert cut_index(siso, (0.0,)) == 1
    assert cut_branch(siso, (0.0,), 1) == "j<=k"


@pytest.mark.parametrize("m, n, L", [(1, 1, 1), (2, 2, 1), (2, 3, 2)])
def test_hel_and_cut_on_grid(m, n, L):
    cfg = SystemConfig(m, n, L, 1, m * n)
    for r in feasible_grid(cfg, 150):
        assert hel_holds(cfg, r)
        for j in range(1, 7):
            assert d_opt_piecewise_ymn(cfg, r, j) == pytest.approx(
                d_opt(cfg.with_(K=j), r), abs=1e-9)


# -- curves ----------------------------------------------------------------------------


def test_sample_curve_siso_no_feedback_is_a_line():
    curve = sample_curve(SystemConfig(1, 1, 1, 1), SweepAxis(0, (0.0,)), 50)
    np.testing.assert_allclose(curve.d, 1 - curve.r, atol=1e-12)
    assert curve.breakpoints == []
    assert curve.r[0] == 0 and curve.r[-1] < 1


def test_sample_curve_mimo_feedback_endpoint_and_kinks():
    curve = sample_curve(SystemConfig(3, 4, 1, 2, 12), SweepAxis(0, (0.0,)), 300)
    assert curve.samples[0][1] == 24.0
    assert np.all(np.diff(curve.d) <= 1e-12)
    assert np.all(np.diff(curve.r) > 0)
    # each kink is where the sampled slope changes
    for b in curve.breakpoints:
        h = 1e-4
        f = lambda t: d_opt(SystemConfig(3, 4, 1, 2, 12), (t,))
        left = (f(b) - f(b - h)) / h
        right = (f(b + h) - f(b)) / h
        assert abs(left - right) > 1e-6


def test_sample_curve_no_feedback_kinks_at_integers():
    curve = sample_curve(SystemConfig(3, 4, 1, 1, 12), SweepAxis(0, (0.0,)), 300)
    assert curve.breakpoints == pytest.approx([1.0, 2.0])


def test_sample_curve_mac_spot_points():
    cfg = SystemConfig(3, 4, 2, 3, 12)
    curve = sample_curve(cfg, SweepAxis(1, (1.5, 0.0)), 100)
    assert curve.r[-1] < 2.5  # sum-rate limit min(6, 4) - 1.5
    for idx in (0, 17, 42, 66, 99):
        r2, d, _ = curve.samples[idx]
        c = [0.0]
        for _ in range(3):
            c.append(d_exponent(cfg, (1.5, r2), 1 + min(12, c[-1])))
        expected = min(c[3], 12 + d_exponent(cfg, (1.5, r2), 1))
        assert d == pytest.approx(expected, abs=1e-12)


def test_sample_curve_empty_range():
    with pytest.raises(ValueError):
        sample_curve(SystemConfig(1, 1, 2), SweepAxis(1, (1.0, 0.0)), 10)


# -- closed forms -------------------------------------------------------------------------


def test_verify_closed_forms_examples():
    checks = {c.name: c for c in verify_closed_forms(SystemConfig(2, 2, 1, 3))}
    assert checks["C_K(0)"].computed == 84 and checks["C_K(0)"].passed
    one = {c.name: c for c in verify_closed_forms(SystemConfig(1, 1, 1, 1))}
    assert one["C_K(0)"].computed == 1 and one["Cbar_K(0)"].computed == 1
    assert one["d_opt(0)=2mn"].status == "skipped"
    two = {c.name: c for c in verify_closed_forms(SystemConfig(2, 3, 1, 2, 6))}
    assert two["Cbar_K(0)"].computed == 42 and two["Cbar_K(0)"].passed


def test_multiplex_point_rejects_bad_values():
    with pytest.raises(ValueError):
        MultiplexPoint((-0.1,))
    with pytest.raises(ValueError):
        MultiplexPoint((math.nan,))
    with pytest.raises(ValueError):
        SystemConfig(0, 1)
    with pytest.raises(ValueError):
        SystemConfig(1, 1, y=-1)
