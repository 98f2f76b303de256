"""Cones, mollification contracts, sublevel domains, boundary curvature."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from solitonlab import geometry as G

E1 = np.array([[1.0, 0.0], [-1.0, 0.0]])


def pm_e1():
    return G.AsymptoticData(mode="cone", lams=E1, K=5.0)


# ---------------------------------------------------------------------------
# cone evaluation
# ---------------------------------------------------------------------------

def test_eval_cone_basics():
    assert G.eval_cone(E1, np.array([3.0, 4.0])) == 3.0
    assert G.eval_cone(E1, np.array([0.0, 4.0])) == 0.0
    assert G.eval_cone(E1, np.zeros(2)) == 0.0


def test_eval_truncated_cone_basics():
    assert G.eval_truncated_cone(E1, 5.0, np.array([0.0, 10.0])) == 5.0
    assert G.eval_truncated_cone(E1, 5.0, np.array([10.0, 0.0])) == 10.0
    assert G.eval_truncated_cone(E1, 5.0, np.zeros(2)) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.1, 10.0))
def test_cone_homogeneous_and_lipschitz(x, y, s):
    p = np.array([x, y])
    v = G.eval_cone(E1, p)
    assert G.eval_cone(E1, s * p) == pytest.approx(s * v, rel=1e-12, abs=1e-12)
    # Lipschitz-1: |V(p) - V(q)| <= |p - q|
    q = p + np.array([0.3, -0.4])
    assert abs(G.eval_cone(E1, q) - v) <= 0.5 + 1e-12


def test_asymptotic_data_invariants():
    with pytest.raises(ValueError):
        G.AsymptoticData(mode="cone", lams=np.array([[1.0, 0.1]]), K=5.0)  # not unit
    with pytest.raises(ValueError):
        G.AsymptoticData(mode="cone", lams=np.array([[1.0, 0.0]]), K=5.0)  # single dir
    with pytest.raises(ValueError):
        G.AsymptoticData(mode="cone", lams=np.array([[1.0, 0.0], [1.0, 0.0]]), K=5.0)
    with pytest.raises(ValueError):
        G.AsymptoticData(mode="cone", lams=E1, K=0.0)
    rt = G.AsymptoticData.from_dict(pm_e1().to_dict())
    assert np.allclose(rt.lams, E1) and rt.K == 5.0


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def test_mollify_constant_field():
    const = lambda p: np.full(len(np.atleast_2d(p)), 3.5)
    v, g, H = G.mollify(const, 0.5, np.array([[0.0, 0.0], [1.0, 2.0]]))
    assert np.allclose(v, 3.5, atol=1e-12)
    assert np.allclose(g, 0.0, atol=1e-10)
    assert np.allclose(H, 0.0, atol=1e-9)


def test_mollify_affine_exact():
    lin = lambda p: 0.3 * np.atleast_2d(p)[:, 0] - 0.2 * np.atleast_2d(p)[:, 1] + 1.0
    pts = np.array([[0.0, 0.0], [2.0, -1.0], [5.0, 5.0]])
    v, g, H = G.mollify(lin, 0.7, pts)
    assert np.allclose(v, lin(pts), atol=1e-12)
    assert np.allclose(g, [0.3, -0.2], atol=1e-9)
    assert np.allclose(H, 0.0, atol=1e-9)


def test_mollify_contracts_on_truncated_cone():
    data = pm_e1()
    eps = 2.0 * G.PLANE_DIM * G.kernel_c4()
    mf = data.mollified(eps)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-30, 30, size=(200, 2))
    v, g, H = mf.with_hessian(pts)
    exact = data.field()(pts)
    assert np.max(np.abs(v - exact)) <= eps
    assert np.max(np.linalg.norm(g, axis=1)) <= 1.0 + 1e-12
    assert np.max(np.abs(H)) <= G.kernel_c4() / eps + 1e-8
    # convexity of the smoothed cone survives: Hessian PSD up to rounding
    lam_min = 0.5 * (H[:, 0] + H[:, 2]) - np.sqrt(
        0.25 * (H[:, 0] - H[:, 2]) ** 2 + H[:, 1] ** 2)
    assert lam_min.min() >= -1e-10


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_mollify_contract_random_lipschitz_cones(seed):
    # random finite direction sets are exactly the Lipschitz-1 test class
    rng = np.random.default_rng(seed)
    m = rng.integers(2, 6)
    th = rng.uniform(0, 2 * np.pi, size=m)
    lams = np.stack([np.cos(th), np.sin(th)], axis=1)
    if np.max(np.linalg.norm(lams[:, None] - lams[None, :], axis=-1)) < 1e-9:
        lams = np.array([[1.0, 0.0], [0.0, 1.0]])
    data = G.AsymptoticData(mode="cone", lams=lams, K=float(rng.uniform(1, 8)))
    eps = float(rng.uniform(0.5, 6.0))
    mf = data.mollified(eps)
    pts = rng.uniform(-15, 15, size=(40, 2))
    v, g, H = mf.with_hessian(pts)
    assert np.max(np.abs(v - data.field()(pts))) <= eps
    assert np.max(np.linalg.norm(g, axis=1)) <= 1.0 + 1e-12
    assert np.max(np.abs(H)) <= G.kernel_c4() / eps + 1e-8


def test_mollify_bound_radius_error():
    fld = lambda p: np.linalg.norm(np.atleast_2d(p), axis=-1)
    with pytest.raises(ValueError):
        G.mollify(fld, 1.0, np.array([[9.5, 0.0]]), bound_radius=10.0)


def test_kernel_c4_value():
    # int |D rho| for the normalized planar bump; fixed by the kernel choice
    assert G.kernel_c4() == pytest.approx(2.98995, abs=2e-4)


# ---------------------------------------------------------------------------
# sublevel domains
# ---------------------------------------------------------------------------

def test_sublevel_of_exact_norm_is_disk():
    mf = G.MollifiedField(lambda p: np.linalg.norm(np.atleast_2d(p), axis=-1), 0.2,
                          field_grad=lambda p: (lambda q: q / np.maximum(
                              np.linalg.norm(q, axis=-1, keepdims=True), 1e-30))(
                              np.atleast_2d(p)))
    dom = G.sublevel_domain(mf, 7.0, n_theta=180)
    assert dom.radii.max() - dom.radii.min() <= 1e-9
    kap = G.boundary_curvature(mf, dom)
    assert np.allclose(kap, 1.0 / dom.radii.mean(), atol=1e-4)
    assert dom.meta["boundary_value_error"] <= 1e-9


def test_sublevel_domain_contracts():
    data = pm_e1()
    eps = 2.0 * G.PLANE_DIM * G.kernel_c4()
    mf = data.mollified(eps)
    dom = G.sublevel_domain(mf, 20.0, n_theta=240)
    # boundary value pinned, convex, in the predicted annulus
    assert dom.meta["boundary_value_error"] <= 1e-9
    assert dom.convexity_slack() >= -1e-9 * dom.radii.max() ** 2
    assert dom.radii.min() >= 20.0 - eps - 1e-6
    assert dom.radii.max() <= 20.0 + 5.0 + eps + 1e-6
    kap = G.boundary_curvature(mf, dom)
    assert kap.min() >= -1e-8
    assert kap.max() <= 2.0 * G.PLANE_DIM * G.kernel_c4() / eps + 1e-6


def test_sublevel_nesting():
    data = pm_e1()
    eps = 2.0 * G.PLANE_DIM * G.kernel_c4()
    mf = data.mollified(eps)
    d1 = G.sublevel_domain(mf, 20.0, n_theta=120)
    d2 = G.sublevel_domain(mf, 26.0, n_theta=120)
    assert np.all(d2.radii > d1.radii)


def test_sublevel_slope_condition_failure():
    data = pm_e1()
    eps = 2.0 * G.PLANE_DIM * G.kernel_c4()
    mf = data.mollified(eps)
    with pytest.raises(G.SlopeConditionError):
        G.sublevel_domain(mf, 2.0, n_theta=60)  # origin not interior at this level


def test_choose_epsilon_returns_first_certified():
    eps = G.choose_epsilon(E1, 5.0, 20.0, n_theta=180)
    assert eps == pytest.approx(2.0 * G.PLANE_DIM * G.kernel_c4(), rel=1e-12)


def test_domain_serialization():
    dom = G.ConvexDomain.disk(2.0, n_theta=90)
    text = dom.to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# {")
    assert lines[1] == "theta,r,kappa"
    assert len(lines) == 2 + 90
    assert dom.diameter == pytest.approx(4.0, rel=1e-3)
    assert dom.inradius == pytest.approx(2.0)


def test_sphere_data_derivatives():
    f = G.SphereData.from_callable(lambda th: 0.1 * np.cos(th))
    th = np.linspace(0, 2 * np.pi, 50)
    assert np.allclose(f(th), 0.1 * np.cos(th), atol=1e-8)
    assert np.allclose(f(th, nu=1), -0.1 * np.sin(th), atol=1e-6)
