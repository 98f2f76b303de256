"""Barriers, the radial IVP, the singular BVP and normalization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from solitonlab import profiles as P


# ---------------------------------------------------------------------------
# barriers
# ---------------------------------------------------------------------------

def test_barrier_w_closed_form_n2():
    # n = 2: integrand K / sqrt(s^2 + K^2), antiderivative K asinh(t/K)
    assert P.barrier_w(1.0, 2, 1.0) == pytest.approx(np.log(1 + np.sqrt(2)), abs=1e-10)
    assert P.barrier_w(2.0, 2, 3.0) == pytest.approx(2.0 * np.arcsinh(1.5), abs=1e-10)


def test_barrier_w_constant_integrand_n1():
    # n = 1: integrand K / sqrt(1 + K^2) is constant
    assert P.barrier_w(1.0, 1, 2.0) == pytest.approx(2.0 / np.sqrt(2.0), abs=1e-10)


def test_barrier_w_tilde_closed_form_n1():
    assert P.barrier_w_tilde(1.0, 1, 1.0) == pytest.approx(np.arcsinh(1.0), abs=1e-10)


def test_barrier_large_K_limit():
    assert P.barrier_w(1000.0, 2, 1.0) == pytest.approx(1.0, abs=1e-3)
    assert P.barrier_w_tilde(1000.0, 3, 0.5) == pytest.approx(0.5, abs=1e-3)


def test_barrier_odd_symmetry_exact():
    # odd symmetry is exact by construction (sign factored out)
    assert P.barrier_w(-1.0, 2, 1.0) == -P.barrier_w(1.0, 2, 1.0)
    assert P.barrier_w_tilde(-1.0, 2, 1.0) == -P.barrier_w_tilde(1.0, 2, 1.0)


def test_barrier_domain_errors():
    with pytest.raises(ValueError):
        P.barrier_w(0.0, 2, 1.0)
    with pytest.raises(ValueError):
        P.barrier_w(1.0, 2, -0.5)
    with pytest.raises(ValueError):
        P.barrier_residuals(1.0, 2, [0.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(K=st.floats(0.05, 50.0), n=st.integers(1, 5), t=st.floats(0.0, 10.0))
def test_barriers_weakly_spacelike(K, n, t):
    # |w_K(t)| <= t and |wt_K(t)| <= t, and odd symmetry in K
    w = P.barrier_w(K, n, t)
    wt = P.barrier_w_tilde(K, n, t)
    assert abs(w) <= t + 1e-12
    assert abs(wt) <= t + 1e-12
    assert P.barrier_w(-K, n, t) == -w
    assert P.barrier_w_tilde(-K, n, t) == -wt


def test_barrier_residual_identities():
    ts = np.linspace(0.1, 5.0, 60)
    rw, rwt = P.barrier_residuals(1.0, 2, ts)
    assert np.max(np.abs(rw)) <= 1e-8
    assert np.max(np.abs(rwt)) <= 1e-8
    rw, rwt = P.barrier_residuals(2.0, 3, np.array([0.5, 1.0, 2.0]))
    assert np.max(np.abs(rw)) <= 1e-8
    assert np.max(np.abs(rwt)) <= 1e-8


def test_barrier_residual_n1_linear():
    # n = 1: w_K is linear, both operator terms vanish separately
    rw, _ = P.barrier_residuals(1.0, 1, np.array([1.0]))
    assert abs(rw[0]) <= 1e-14


# ---------------------------------------------------------------------------
# radial IVP
# ---------------------------------------------------------------------------

def test_radial_n1_log_cosh():
    prof = P.solve_radial_ivp(1, 0.0, 5.0, h=0.005)
    assert np.max(np.abs(prof.values - np.log(np.cosh(prof.grid)))) <= 1e-6
    assert np.max(np.abs(prof.slopes - np.tanh(prof.grid))) <= 1e-8


def test_radial_n3_growth_window():
    prof = P.solve_radial_ivp(3, 0.0, 12.0)
    val = prof(10.0) - prof.values[0]
    assert 7.0 <= val <= 10.0


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_radial_bounds_and_residual(n):
    prof = P.solve_radial_ivp(n, 0.0, 50.0)
    res = np.abs(prof.ode_residual()[1:])
    assert res.max() <= 1e-6
    slacks = P.radial_bound_slacks(prof)
    assert slacks["lower"] >= -1e-8
    assert slacks["upper"] >= -1e-8
    assert slacks["slope"] >= -1e-8
    assert slacks["mean_curvature"] >= -1e-8


def test_radial_slope_strictness_via_rapidity():
    prof = P.solve_radial_ivp(2, 0.0, 50.0)
    assert np.all(np.isfinite(prof.rapidity))  # strict spacelikeness witness
    assert np.all(np.abs(prof.slopes) <= 1.0)
    prof.validate()


def test_radial_c_positive_regularization():
    # psi''(0) = (1 + c)/n drives the series start
    prof = P.solve_radial_ivp(2, 1.0, 5.0)
    h = prof.grid[1]
    assert prof.values[1] == pytest.approx(0.5 * (2.0 / 2.0) * h * h, rel=5e-3)
    assert np.max(np.abs(prof.ode_residual()[1:])) <= 1e-6
    # spacelikeness forces psi - psi(0) <= r even for c > 0
    assert np.all(prof.values - prof.values[0] <= prof.grid + 1e-12)


def test_mean_curvature_growth():
    prof = P.solve_radial_ivp(2, 0.0, 50.0)
    H = P.mean_curvature(prof)
    i1, i10 = np.searchsorted(prof.grid, [1.0, 10.0])
    assert H[i1] < H[i10] < H[-1]
    assert H[-1] >= np.sqrt(4.0 + 2500.0) / 2.0
    assert np.all(np.diff(H) >= -1e-9)


def test_radial_ivp_argument_errors():
    with pytest.raises(ValueError):
        P.solve_radial_ivp(0, 0.0, 5.0)
    with pytest.raises(ValueError):
        P.solve_radial_ivp(2, -0.5, 5.0)
    with pytest.raises(ValueError):
        P.solve_radial_ivp(2, 0.0, -1.0)


def test_profile_csv_round_numbers():
    prof = P.solve_radial_ivp(2, 0.0, 1.0, h=0.1)
    text = prof.to_csv()
    head, cols = text.splitlines()[:2]
    assert "n=2" in head and "c=0" in head and "shift=0" in head
    assert cols == "t,value,slope,ode_residual"
    assert len(text.splitlines()) == 2 + len(prof.grid)


# ---------------------------------------------------------------------------
# normalization at infinity
# ---------------------------------------------------------------------------

def test_normalize_n1_log2():
    prof = P.solve_radial_ivp(1, 0.0, 60.0)
    gamma = P.normalize_at_infinity(prof)
    assert gamma == pytest.approx(-np.log(2.0), abs=1e-6)
    shifted = prof.shifted(gamma)
    assert abs(shifted.values[-1] - shifted.grid[-1]) <= 1e-3


def test_normalize_n2_window_and_idempotence():
    prof = P.solve_radial_ivp(2, 0.0, 100.0)
    gamma = P.normalize_at_infinity(prof)
    assert -2.0 <= gamma <= 0.0
    again = P.normalize_at_infinity(prof.shifted(gamma))
    assert abs(again) <= 1e-9


def test_normalize_requires_c0_and_range():
    prof = P.solve_radial_ivp(2, 1.0, 60.0)
    with pytest.raises(ValueError):
        P.normalize_at_infinity(prof)
    short = P.solve_radial_ivp(2, 0.0, 10.0)
    with pytest.raises(ValueError):
        P.normalize_at_infinity(short)


# ---------------------------------------------------------------------------
# the singular BVP
# ---------------------------------------------------------------------------

def test_bvp_upper_case_sandwich():
    # r^2 = 0.81 <= (n-1) C = 0.85: C t / r <= phi <= w_K1
    prof = P.solve_bvp(2, 0.0, 0.9, 0.85)
    assert prof.values[0] == 0.0
    assert prof.values[-1] == pytest.approx(0.85, abs=1e-9)
    assert np.all(np.isfinite(prof.rapidity))
    sw = P.bvp_sandwich_slacks(prof)
    assert sw["case"] == "upper"
    assert sw["lower_slack"] >= -1e-5
    assert sw["upper_slack"] >= -1e-5
    # K1 solves K asinh(r/K) = C for n = 2
    K1 = sw["K"]
    assert K1 * np.arcsinh(0.9 / K1) == pytest.approx(0.85, abs=1e-9)


def test_bvp_lower_case_sandwich():
    # spec's (r=0.5, C=-0.3) fails the K2^2 hypothesis; use a pair that meets it
    n, r, C = 2, 0.5, -0.475
    K2 = P.find_k2(n, r, C)
    assert K2 * K2 >= r ** (2 * n + 2) / (1.0 - r * r)
    prof = P.solve_bvp(n, 0.0, r, C)
    sw = P.bvp_sandwich_slacks(prof)
    assert sw["case"] == "lower"
    assert sw["lower_slack"] >= -1e-5
    assert sw["upper_slack"] >= -1e-5


def test_bvp_k2_hypothesis_detects_failure():
    # at (0.5, -0.3) the hypothesis genuinely fails: no case applies
    K2 = P.find_k2(2, 0.5, -0.3)
    assert K2 * K2 < 0.5 ** 6 / 0.75
    prof = P.solve_bvp(2, 0.0, 0.5, -0.3)
    assert P.bvp_sandwich_slacks(prof)["case"] is None


def test_bvp_zero_boundary_dips_negative():
    prof = P.solve_bvp(2, 0.0, 1.0, 0.0)
    inner = prof.values[1:-1]
    assert np.max(inner) < 0.0          # not identically zero, and negative inside
    assert np.min(inner) < -0.05


def test_bvp_uniqueness_two_schedules():
    r, C = 0.9, 0.85
    s1 = [2.0 ** -j for j in range(9, 14)]
    s2 = [3.0 ** -j for j in range(6, 10)]
    p1 = P.solve_bvp(2, 0.0, r, C, eps_schedule=s1)
    p2 = P.solve_bvp(2, 0.0, r, C, eps_schedule=s2)
    assert np.max(np.abs(p1.values - p2.values)) <= 1e-5


def test_bvp_domain_errors():
    with pytest.raises(ValueError):
        P.solve_bvp(2, 0.0, 1.0, 1.0)   # |C| >= r
    with pytest.raises(ValueError):
        P.solve_bvp(1, 0.0, 1.0, 0.5)   # n >= 2
    with pytest.raises(ValueError):
        P.find_k1(2, 1.0, -0.5)


def test_bvp_c_positive_solves():
    prof = P.solve_bvp(2, 1.0, 0.8, 0.3)
    assert prof.values[-1] == pytest.approx(0.3, abs=1e-8)
    assert np.all(np.isfinite(prof.rapidity))
