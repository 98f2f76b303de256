"""Dirichlet solver: oracle agreement, certificates, geometric identities."""

import numpy as np
import pytest

from solitonlab import profiles as P
from solitonlab.dirichlet import (CertificateError, SolverConfig, comparison_check,
                                  convexity_certificate, field_from_function,
                                  gradient_certificate, induced_laplacian_check,
                                  level_set_identity, residual_field, sigma_rescale_check,
                                  solve_dirichlet)
from solitonlab.fd import GridGeometry
from solitonlab.geometry import ConvexDomain

H = 1.0 / 64.0


@pytest.fixture(scope="module")
def disk2():
    return ConvexDomain.disk(2.0)


@pytest.fixture(scope="module")
def solve2(disk2):
    return solve_dirichlet(disk2, 0.0, 0.0, SolverConfig(h=H))


@pytest.fixture(scope="module")
def radial2():
    return P.solve_radial_ivp(2, 0.0, 2.5, h=0.005)


def test_oracle_agreement(solve2, radial2):
    r = np.hypot(solve2.geo.xs, solve2.geo.ys)
    err = np.max(np.abs(solve2.u - (radial2(r) - radial2(2.0))))
    assert err <= 5 * H * H
    # center value in the barrier window, solution dips below its boundary value
    j = int(np.argmin(r))
    assert -2.0 <= solve2.u[j] <= 0.0
    assert np.max(solve2.u) <= 1e-10


def test_literal_residual_contract(solve2):
    di = solve2.diagnostics
    assert di["residual_sup"] <= di["residual_allowance"]
    res, norms = residual_field(solve2)
    assert norms["sup"] == pytest.approx(di["residual_sup"], rel=1e-9)
    assert norms["superluminal_nodes"] == 0


def test_vertical_shift_invariance(disk2, solve2):
    shifted = solve_dirichlet(disk2, 0.0, 7.0, SolverConfig(h=H))
    # shift realization makes this exact node-for-node
    assert np.max(np.abs(shifted.u - (solve2.u + 7.0))) == 0.0


def test_constant_field_residual(solve2):
    from solitonlab.dirichlet import GridField
    const = GridField(solve2.geo, np.full(solve2.geo.n, 0.3), 0.3, 0.0)
    res, norms = residual_field(const, 0.0)
    assert np.allclose(res, -1.0, atol=1e-9)


def test_one_dimensional_solution_residual(disk2):
    # log cosh(x1) extended constantly in x2 solves the c = 0 equation
    geo = GridGeometry(disk2, H)
    fld = field_from_function(geo, lambda p: np.log(np.cosh(np.atleast_2d(p)[:, 0])))
    res, norms = residual_field(fld, 0.0)
    assert norms["sup"] <= 30.0 * H * H  # pure truncation, O(h^2)


def test_gradient_certificate_disk2(solve2):
    rep = gradient_certificate(solve2)
    assert rep["max_gradient"] <= np.tanh(4.0) + 5 * H
    assert rep["max_principle_slack"] >= 0.0


def test_gradient_certificate_small_disk():
    dom = ConvexDomain.disk(0.5)
    fld = solve_dirichlet(dom, 0.0, 0.0, SolverConfig(h=1.0 / 128.0))
    rep = gradient_certificate(fld)
    assert rep["max_gradient"] <= np.tanh(1.0) + 5.0 / 128.0


def test_convexity_certificate(solve2, radial2):
    rep = convexity_certificate(solve2)
    assert rep["min_eigenvalue"] >= -10 * H
    # radial solution eigenvalues psi'' and psi'/r are positive
    assert rep["min_eigenvalue_scaled"] >= -10 * H / 0.1


def test_convexity_certificate_c1(disk2):
    fld = solve_dirichlet(disk2, 1.0, 0.0, SolverConfig(h=H))
    rep = convexity_certificate(fld)
    assert rep["min_eigenvalue"] >= -10 * H


def test_convexity_hypothesis_guard():
    dom = ConvexDomain.disk(0.5)  # boundary curvature 2 > 1
    fld = solve_dirichlet(dom, 0.0, 0.0, SolverConfig(h=1.0 / 128.0))
    with pytest.raises(CertificateError):
        convexity_certificate(fld)


def test_level_set_identity_radial(solve2, radial2):
    umin = float(np.min(solve2.u))
    rep = level_set_identity(solve2, 0.5 * umin)
    assert rep["samples"] > 100
    assert rep["residual_sup"] <= 0.1
    assert rep["ugg_recovery_sup"] <= 0.1
    # the level circle of the radial solution has curvature 1/r0
    r0 = float(np.interp(0.5 * umin, radial2.values - radial2(2.0), radial2.grid))
    assert rep["mean_curve_curvature"] == pytest.approx(1.0 / r0, rel=0.05)


def test_level_set_critical_point_skip(solve2):
    umin = float(np.min(solve2.u))
    rep = level_set_identity(solve2, umin + 1e-4, grad_min=0.05)
    assert rep["skipped"] >= 0  # near the bottom, gradients are tiny


def test_induced_laplacian(solve2):
    rep = induced_laplacian_check(solve2)
    assert rep["residual_sup"] <= 0.1


def test_induced_laplacian_log_cosh():
    # 1-D solution: Delta_M u = cosh^2(x1) = 1/v^2 exactly
    dom = ConvexDomain.disk(1.0)
    geo = GridGeometry(dom, 1.0 / 64.0)
    fld = field_from_function(geo, lambda p: np.log(np.cosh(np.atleast_2d(p)[:, 0])))
    rep = induced_laplacian_check(fld)
    assert rep["residual_sup"] <= 0.05


def test_comparison_with_translated_barrier(solve2):
    # w_K(|x - y0|) + const has L = 0 <= 1: a supersolution
    geo = solve2.geo
    K = 1.0
    y0 = np.array([3.0, 0.0])

    def barrier(p):
        t = np.linalg.norm(np.atleast_2d(p) - y0, axis=-1)
        tt = np.unique(np.round(t, 12))
        vals = {ti: P.barrier_w(K, 2, ti) for ti in tt}
        return np.array([vals[ti] for ti in np.round(t, 12)])

    ubar = field_from_function(geo, barrier)
    rep = comparison_check(solve2, ubar, "super")
    assert rep["margin"] <= 0.0


def test_comparison_self(solve2):
    rep_sup = comparison_check(solve2, solve2, "super")
    rep_sub = comparison_check(solve2, solve2, "sub")
    assert rep_sup["margin"] <= 0.0 and rep_sub["margin"] <= 0.0


def test_comparison_two_sided_log_cosh(solve2):
    # +-(log cosh x1 - log cosh y1) traps the zero-boundary solution on a strip
    geo = solve2.geo
    y1 = 2.0

    def phi(p):
        return np.log(np.cosh(np.atleast_2d(p)[:, 0])) - np.log(np.cosh(y1))

    lower = field_from_function(geo, phi)            # solves L = 1 (subsolution)
    upper = field_from_function(geo, lambda p: -phi(p))
    assert comparison_check(solve2, lower, "sub")["margin"] <= 0.0
    assert comparison_check(solve2, upper, "super")["margin"] <= 0.0


def test_comparison_c1_below_c0(disk2, solve2):
    fld1 = solve_dirichlet(disk2, 1.0, 0.0, SolverConfig(h=H))
    assert np.max(fld1.u - solve2.u) <= 5 * H


def test_sigma_rescale_consistency(disk2):
    rep = sigma_rescale_check(disk2, 0.5, 0.0, SolverConfig(h=H))
    assert rep["residual_sup_interior"] <= 50.0 * H * H


def test_gradient_max_principle_property(solve2):
    rep = gradient_certificate(solve2)
    assert rep["interior_sq_max"] <= rep["ring_sq_max"] + 5 * H


def test_csv_dump(solve2):
    text = solve2.to_csv()
    lines = text.splitlines()
    assert lines[0] == "x,y,u,ux,uy,v,H,residual"
    assert len(lines) == 1 + solve2.geo.n
