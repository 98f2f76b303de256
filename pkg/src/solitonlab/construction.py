"""Exhaustion construction of entire solutions with prescribed asymptotics.

Pipeline (cone data): truncate the prescribed cone V to
Vt = max(V, |x| - K), mollify at the curvature-certified eps, extract the
convex sublevel domains Omega_k = {Vt_eps < k}, solve the Dirichlet
problem with boundary value k on each, certify convexity and the sandwich

    Vt - eps <= u_k <= Vt + n + eps        (n = 2, up to grid tolerance)

on every grid node, and measure the blow-down deviation u(r x)/r - V(x).
The limit is reported as the last two solves on a fixed probe grid and
their gap (a Cauchy surrogate at desk scale; no extrapolation).

C^2 sphere data: domains come from mollifying |x| + f(x/|x|) at a
per-level eps_k = min(eps0, 10/k); the boundary deviation of u_k from
|x| + f is within eps_k, the deviation profile decays outward, and the
solution is trapped between the support-function bounds q1, q2 built from
the normalized radial profile.

Large solves run with the coefficient floor (see ``dirichlet``) and, when
the asymptotic data shares the reflection symmetries of the axes, on a
half/quarter grid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import profiles
from .dirichlet import (GridField, SolverConfig, convexity_certificate,
                        gradient_certificate, solve_dirichlet)
from .geometry import (AsymptoticData, ConvexDomain, MollifiedField, SphereData,
                       boundary_curvature, eval_cone, kernel_c4, sublevel_domain)

__all__ = [
    "ConstructionRun",
    "construction_config",
    "construct_blowdown",
    "blowdown_ratio",
    "construct_c2_data",
    "build_support_fields",
    "q_bounds",
    "StageError",
]

PLANE_N = 2  # the sandwich constant of the exhaustion is the dimension


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage and level."""


def construction_config(h: float = 1.0 / 64.0, c: float = 0.0) -> SolverConfig:
    """Solver defaults for exhaustion-scale runs (coefficient-floor policy)."""
    return SolverConfig(h=h, c=c, cap_mode="floor", v_floor=1e-3,
                        picard_tol=1e-8, max_iter=60)


@dataclass
class ConstructionRun:
    """Record of one exhaustion run: domains, solves, margins, probes."""

    data: AsymptoticData
    c: float
    k_list: list
    eps: list                       # eps used per level (constant in cone mode)
    domains: list
    fields: list                    # GridField per level (reduced grid if symmetric)
    symmetry: tuple
    sandwich: list = dc_field(default_factory=list)
    certificates: list = dc_field(default_factory=list)
    probe_points: np.ndarray | None = None
    probe_values: np.ndarray | None = None
    cauchy_gap: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def field_at(self, level_index: int, points) -> np.ndarray:
        """Evaluate u_k at arbitrary points (mapping through the symmetry)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if self.symmetry[0]:
            pts[:, 0] = np.abs(pts[:, 0])
        if self.symmetry[1]:
            pts[:, 1] = np.abs(pts[:, 1])
        return self.fields[level_index].interpolate(pts)

    def summary(self) -> dict:
        return {
            "mode": self.data.mode,
            "c": self.c,
            "k_list": list(map(float, self.k_list)),
            "eps": list(map(float, self.eps)),
            "symmetry": list(self.symmetry),
            "sandwich": self.sandwich,
            "certificates": self.certificates,
            "cauchy_gap": self.cauchy_gap,
            **self.meta,
        }


def _symmetry_flags(data: AsymptoticData) -> tuple:
    """Reflection symmetries shared by the asymptotic data (and its domains)."""
    if data.mode == "cone":
        lams = data.lams
        def closed_under(sign):
            ref = lams * sign
            d = np.linalg.norm(ref[:, None, :] - lams[None, :, :], axis=-1)
            return bool(np.all(d.min(axis=1) < 1e-12))
        return (closed_under(np.array([-1.0, 1.0])), closed_under(np.array([1.0, -1.0])))
    th = data.f.thetas
    vals = data.f.values
    even_y = np.allclose(vals, data.f(-th), atol=1e-12)          # f(-t) = f(t)
    even_x = np.allclose(vals, data.f(np.pi - th), atol=1e-12)   # f(pi-t) = f(t)
    return (even_x, even_y)


def _principled_initial_guess(data: AsymptoticData, k: float):
    fld = data.field()
    return lambda pts: np.asarray(fld(pts), dtype=float) - k


def _psi_profile(c: float, r_max: float) -> profiles.RadialProfile:
    return profiles.solve_radial_ivp(PLANE_N, c, r_max, h=0.01)


# ---------------------------------------------------------------------------
# cone mode
# ---------------------------------------------------------------------------

def construct_blowdown(data: AsymptoticData, c: float, k_list,
                       config: SolverConfig | None = None,
                       eps: float | None = None,
                       sandwich_tol: float | None = None,
                       n_theta: int = 720,
                       use_symmetry: bool = True) -> ConstructionRun:
    """Run the full cone-mode exhaustion over the given levels.

    Per level k: extract Omega_k = {Vt_eps < k}, certify max boundary
    curvature <= 1, solve with boundary value k, certify convexity, and
    check the sandwich Vt - eps <= u_k <= Vt + 2 + eps (within
    ``sandwich_tol``, default 10h) on every grid node, plus the per-ray
    lower barriers u_k >= <lambda, x> - eps and the upper inf-convolution
    barrier against the radial profile at probe points.

    Any stage failure raises StageError naming the stage and level.
    """
    if data.mode != "cone":
        raise ValueError("construct_blowdown needs cone-mode data")
    cfg = config or construction_config(c=c)
    tol = 10.0 * cfg.h if sandwich_tol is None else sandwich_tol
    k_list = sorted(float(k) for k in k_list)
    sym = _symmetry_flags(data) if use_symmetry else (False, False)

    if eps is None:
        eps = 2.0 * PLANE_N * kernel_c4()
    mf = data.mollified(eps)
    fld_exact = data.field()

    run = ConstructionRun(data=data, c=float(c), k_list=k_list,
                          eps=[float(eps)] * len(k_list), domains=[], fields=[],
                          symmetry=sym)
    psi = _psi_profile(c, 2.0 * (k_list[-1] + data.K) + 20.0)

    prev_dom = None
    for k in k_list:
        t0 = time.time()
        try:
            dom = sublevel_domain(mf, k, n_theta=n_theta)
            kap = boundary_curvature(mf, dom)
        except Exception as exc:
            raise StageError(f"domain extraction failed at k={k}: {exc}") from exc
        if kap.max() > 1.0:
            raise StageError(f"curvature certification failed at k={k}: "
                             f"max kappa = {kap.max():.4f}")
        if prev_dom is not None and np.any(dom.radii <= prev_dom.radii):
            raise StageError(f"domain nesting violated between levels at k={k}")
        prev_dom = dom

        try:
            u_k = solve_dirichlet(dom, c, k, cfg,
                                  initial_guess=_principled_initial_guess(data, k),
                                  symmetry=sym)
        except Exception as exc:
            raise StageError(f"Dirichlet solve failed at k={k}: {exc}") from exc

        certs = {"solve": {kk: u_k.diagnostics[kk] for kk in
                           ("iterations", "residual_sup", "scaled_residual",
                            "theta_min", "saturated_nodes", "sigma_stages")}}
        try:
            certs["convexity"] = convexity_certificate(u_k)
            certs["gradient"] = gradient_certificate(u_k)
        except Exception as exc:
            raise StageError(f"certificate failed at k={k}: {exc}") from exc

        pts = u_k.geo.points()
        vt = fld_exact(pts)
        lower_slack = float(np.min(u_k.u - (vt - eps)))
        upper_slack = float(np.min((vt + PLANE_N + eps) - u_k.u))
        lam_slacks = {}
        for lam in data.lams:
            lam_slacks[f"({lam[0]:+.3f},{lam[1]:+.3f})"] = float(
                np.min(u_k.u - (pts @ lam - eps)))
        sw = {"k": k, "lower_slack": lower_slack, "upper_slack": upper_slack,
              "per_direction_lower": lam_slacks, "tol": tol,
              "seconds": time.time() - t0}
        if lower_slack < -tol or upper_slack < -tol:
            raise StageError(f"sandwich failed at k={k}: lower {lower_slack:.4f}, "
                             f"upper {upper_slack:.4f} (tol {tol:.4f})")
        if min(lam_slacks.values()) < -tol:
            raise StageError(f"per-direction lower barrier failed at k={k}")

        run.domains.append(dom)
        run.fields.append(u_k)
        run.sandwich.append(sw)
        run.certificates.append(certs)

    # upper inf-convolution barrier at probe points (sampled minimization)
    run.probe_points = _probe_grid(run.domains[0])
    probs = []
    for i in range(len(k_list)):
        probs.append(run.field_at(i, run.probe_points))
    run.probe_values = np.stack(probs)
    if len(k_list) >= 2:
        run.cauchy_gap = float(np.max(np.abs(run.probe_values[-1] - run.probe_values[-2])))
        if run.cauchy_gap > 10.0 * tol:
            raise StageError(f"probe values not Cauchy: gap {run.cauchy_gap:.4f} "
                             f"> {10.0 * tol:.4f}")
    ub = _upper_infconv_slack(run, psi, fld_exact, eps, tol)
    run.meta["upper_infconv_min_slack"] = ub
    if ub < -tol:
        raise StageError(f"inf-convolution upper barrier failed: slack {ub:.4f}")
    run.meta["psi_r_max"] = psi.r_max
    return run


def _probe_grid(smallest_dom: ConvexDomain) -> np.ndarray:
    """Fixed probe points well inside the smallest domain."""
    rin = smallest_dom.inradius
    radii = np.array([0.0, 0.25, 0.5, 0.75]) * 0.9 * rin
    th = np.pi / 8.0 + np.pi / 4.0 * np.arange(8)
    pts = [np.zeros(2)]
    for r in radii[1:]:
        pts.extend(np.stack([r * np.cos(th), r * np.sin(th)], axis=1))
    return np.asarray(pts)


def _upper_infconv_slack(run: ConstructionRun, psi, fld_exact, eps, tol) -> float:
    """min over probes of inf_y {Vt(y) + psi(|x-y|)} + n + eps - u_last(x)."""
    last = len(run.k_list) - 1
    R = float(run.domains[last].radii.max())
    g = np.linspace(-R - 10.0, R + 10.0, 61)
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    vtY = fld_exact(Y)
    worst = np.inf
    uvals = run.field_at(last, run.probe_points)
    for x, ux in zip(run.probe_points, uvals):
        dist = np.linalg.norm(Y - x, axis=1)
        bound = float(np.min(vtY + psi(dist))) + PLANE_N + eps
        worst = min(worst, bound - ux)
    return float(worst)


def blowdown_ratio(run: ConstructionRun, radii, directions=None) -> dict:
    """Sup over (r, direction) of |u_last(r x) / r - V(x)| with its bound.

    Directions default to 8 uniform unit vectors; probe points outside the
    largest solved domain are skipped and reported.
    """
    if directions is None:
        th = np.pi / 8.0 + np.pi / 4.0 * np.arange(8)
        directions = np.stack([np.cos(th), np.sin(th)], axis=1)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    last = len(run.k_list) - 1
    rin = run.domains[last].inradius
    eps = run.eps[last]

    rows = []
    skipped = 0
    worst = 0.0
    for r in radii:
        if r > rin:
            skipped += len(directions)
            continue
        pts = r * directions
        u = run.field_at(last, pts)
        V = run.data.blowdown(directions)
        dev = np.abs(u / r - V)
        worst = max(worst, float(dev.max()))
        for d, x in enumerate(directions):
            rows.append({"r": float(r), "direction": [float(x[0]), float(x[1])],
                         "deviation": float(dev[d])})
    return {"sup_deviation": worst,
            "bound": float((PLANE_N + 2.0 * eps) / radii.min()),
            "table": rows, "skipped": skipped}


# ---------------------------------------------------------------------------
# C^2 sphere data mode
# ---------------------------------------------------------------------------

def construct_c2_data(f: SphereData, c: float = 0.0, k_list=(20.0, 30.0),
                      config: SolverConfig | None = None,
                      eps0: float = 0.5,
                      n_theta: int = 720,
                      use_symmetry: bool = True) -> ConstructionRun:
    """Exhaustion with smooth sphere data: u_k -> |x| + f(x/|x|) at infinity.

    Per level: eps_k = min(eps0, 10/k) (halved until the curvature
    certificate passes; recorded), Omega_k = {(|x| + f)_eps_k < k}, solve
    with boundary value k, certify convexity, check the boundary deviation
    |u_k - |x| - f| <= eps_k + grid slack, the outward-decaying deviation
    profile, and the q1/q2 trap at probe points.
    """
    data = AsymptoticData(mode="sphere_data", f=f)
    cfg = config or construction_config(c=c)
    k_list = sorted(float(k) for k in k_list)
    sym = _symmetry_flags(data) if use_symmetry else (False, False)
    fld_exact = data.field()

    run = ConstructionRun(data=data, c=float(c), k_list=k_list, eps=[],
                          domains=[], fields=[], symmetry=sym)
    psi = _psi_profile(c, 2.0 * k_list[-1] + 20.0)
    gamma = profiles.normalize_at_infinity(psi) if c == 0.0 else 0.0
    psi_norm = psi.shifted(gamma)

    prev_eps = np.inf
    for k in k_list:
        t0 = time.time()
        eps_k = min(eps0, 10.0 / k, prev_eps)
        dom = None
        for _ in range(8):
            try:
                mf = data.mollified(eps_k)
                dom = sublevel_domain(mf, k, n_theta=n_theta)
                kap = boundary_curvature(mf, dom)
                if kap.max() <= 1.0:
                    break
            except Exception:
                pass
            eps_k *= 0.5
            dom = None
        if dom is None:
            raise StageError(f"curvature certification failed for all eps at k={k}")
        prev_eps = eps_k
        run.eps.append(float(eps_k))

        bpts = dom.boundary_points()
        bdev = float(np.max(np.abs(k - fld_exact(bpts))))
        lip = 1.0 + float(np.max(np.abs(f(f.thetas, nu=1)))) / max(1.0, dom.inradius)
        if bdev > eps_k * lip + 1e-6:
            raise StageError(f"boundary deviation {bdev:.4e} exceeds eps_k={eps_k:.4e} at k={k}")

        try:
            u_k = solve_dirichlet(dom, c, k, cfg,
                                  initial_guess=_principled_initial_guess(data, k),
                                  symmetry=sym)
        except Exception as exc:
            raise StageError(f"Dirichlet solve failed at k={k}: {exc}") from exc
        certs = {"convexity": convexity_certificate(u_k),
                 "boundary_deviation": bdev,
                 "solve": {kk: u_k.diagnostics[kk] for kk in
                           ("iterations", "residual_sup", "theta_min",
                            "saturated_nodes")}}
        run.domains.append(dom)
        run.fields.append(u_k)
        run.certificates.append(certs)
        run.sandwich.append({"k": k, "eps_k": eps_k, "boundary_deviation": bdev,
                             "seconds": time.time() - t0})

    # deviation profile |u_k - |x| - f| on rings: must decay outward
    last = len(k_list) - 1
    rin = run.domains[last].inradius
    ring_r = np.linspace(0.3, 0.95, 14) * rin
    th = 2.0 * np.pi * np.arange(32) / 32
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    ring_sup = []
    for r in ring_r:
        pts = r * dirs
        dev = np.abs(run.field_at(last, pts) - fld_exact(pts))
        ring_sup.append(float(dev.max()))
    run.meta["deviation_rings"] = {"r": ring_r.tolist(), "sup": ring_sup}
    slack = 5.0 * cfg.h
    if np.any(np.diff(ring_sup) > slack):
        raise StageError("deviation profile is not decaying outward: "
                         f"{ring_sup}")

    # q1/q2 trap at probes
    p1, p2, lam_used = build_support_fields(f)
    run.probe_points = _probe_grid(run.domains[0]) + 0.0
    # keep probes away from the origin (psi(|x + p|) needs |x| >= |p| margin)
    keep = np.linalg.norm(run.probe_points, axis=1) > 2.0
    probes = run.probe_points[keep]
    q1, q2 = q_bounds(f, p1, p2, psi_norm, probes)
    uvals = run.field_at(last, probes)
    s_obs = _observed_support_gap(f, p1, p2, psi_norm, run.domains[last])
    eps_last = run.eps[last]
    margin = s_obs + eps_last + 10.0 * cfg.h
    q1_slack = float(np.min(uvals - (q1 - margin)))
    q2_slack = float(np.min((q2 + margin) - uvals))
    run.meta.update(q_trap={"q1_min_slack": q1_slack, "q2_min_slack": q2_slack,
                            "s_observed": s_obs, "margin": margin,
                            "lambda_support": lam_used})
    if q1_slack < 0 or q2_slack < 0:
        raise StageError(f"q1/q2 trap failed: slacks {q1_slack:.4f}, {q2_slack:.4f}")

    run.probe_values = np.stack([run.field_at(i, probes) for i in range(len(k_list))])
    if len(k_list) >= 2:
        run.cauchy_gap = float(np.max(np.abs(run.probe_values[-1] - run.probe_values[-2])))
    run.meta["gamma"] = gamma
    return run


def _observed_support_gap(f, p1, p2, psi_norm, dom) -> float:
    """Numerical stand-in for the vanishing gap between q1, q2 and r + f."""
    th = 2.0 * np.pi * np.arange(64) / 64
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    r = 0.9 * dom.inradius
    pts = r * dirs
    q1, q2 = q_bounds(f, p1, p2, psi_norm, pts)
    target = r + f(th)
    return float(max(np.max(q1 - target), np.max(target - q2), 0.0))


# ---------------------------------------------------------------------------
# support bounds q1 <= u <= q2
# ---------------------------------------------------------------------------

def build_support_fields(f: SphereData, m: int = 360, lam_max: float = 64.0):
    """Support vector fields p1, p2 with the two-sided sampled inequality.

    p1 = grad_T f + lam * eta and p2 = grad_T f - lam * eta with the
    smallest lam in a doubling sweep making

        <p1(eta), xi - eta> <= f(xi) - f(eta) <= <p2(eta), xi - eta>

    hold over all m x m sampled pairs.  Returns (p1, p2, lam) with p_i as
    (m, 2) arrays aligned with the angular samples.
    """
    th = 2.0 * np.pi * np.arange(m) / m
    eta = np.stack([np.cos(th), np.sin(th)], axis=1)
    tau = np.stack([-np.sin(th), np.cos(th)], axis=1)
    fp = np.asarray(f(th, nu=1), dtype=float)
    fv = np.asarray(f(th), dtype=float)
    gradT = fp[:, None] * tau

    diffs = fv[None, :] - fv[:, None]           # f(xi) - f(eta), indexed [eta, xi]
    rel = eta[None, :, :] - eta[:, None, :]     # xi - eta
    base = np.einsum("ec,exc->ex", gradT, rel)
    radial = np.einsum("ec,exc->ex", eta, rel)  # <eta, xi - eta> <= 0

    lam = 0.0
    while lam <= lam_max:
        lower_ok = np.all(base + lam * radial <= diffs + 1e-12)
        upper_ok = np.all(diffs <= base - lam * radial + 1e-12)
        if lower_ok and upper_ok:
            p1 = gradT + lam * eta
            p2 = gradT - lam * eta
            return p1, p2, lam
        lam = 0.25 if lam == 0.0 else 2.0 * lam
    # report the worst violating pair for diagnosis
    viol = np.maximum(base + lam_max * radial - diffs,
                      diffs - base + lam_max * radial)
    j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    raise StageError(
        f"support inequality unsatisfied up to lam={lam_max}; worst pair "
        f"eta={th[j[0]]:.4f}, xi={th[j[1]]:.4f}")


def q_bounds(f: SphereData, p1: np.ndarray, p2: np.ndarray,
             psi_normalized: profiles.RadialProfile, x) -> tuple:
    """The trap q1(x) = sup_eta z1, q2(x) = inf_eta z2 around the solution.

    z_i(x, eta) = f(eta) - <p_i(eta), eta> + psi(|x + p_i(eta)|), with psi
    the radial profile normalized so psi(r) - r -> 0.  Requires
    q1 <= q2 pointwise; raises otherwise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = len(p1)
    th = 2.0 * np.pi * np.arange(m) / m
    eta = np.stack([np.cos(th), np.sin(th)], axis=1)
    fv = np.asarray(f(th), dtype=float)

    def z(p):
        const = fv - np.einsum("ec,ec->e", p, eta)
        d = np.linalg.norm(x[:, None, :] + p[None, :, :], axis=-1)
        return const[None, :] + psi_normalized(d)

    q1 = np.max(z(p1), axis=1)
    q2 = np.min(z(p2), axis=1)
    if np.any(q1 > q2 + 1e-9):
        j = int(np.argmax(q1 - q2))
        raise StageError(f"q1 > q2 at probe {x[j]}: {q1[j]:.6f} > {q2[j]:.6f}")
    return q1, q2
