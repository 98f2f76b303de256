"""The acceptance suite: thirteen property checks at desk scale.

Each criterion function returns a dict with ``id``, ``name``, ``passed``,
``seconds`` and a ``details`` payload; ``run_all`` executes the suite in
order and prints one pass/fail line per criterion.  Expensive Dirichlet
solves are cached and shared across criteria (the disk solves feed the
certificate, level-set and maximality checks).

``quick=True`` shrinks trial counts, level lists and resolutions for a
smoke run; the full suite pins every tolerance at its contract value.
"""

from __future__ import annotations

import time

import numpy as np

from . import construction, profiles, variational
from .dirichlet import (SolverConfig, convexity_certificate, gradient_certificate,
                        induced_laplacian_check, level_set_identity, residual_field,
                        solve_dirichlet)
from .geometry import AsymptoticData, ConvexDomain, SphereData

__all__ = ["run_all", "CRITERIA"]

_solve_cache: dict = {}
_profile_cache: dict = {}


def _radial(n, c, r_max, h=0.01):
    key = (n, c, r_max, h)
    if key not in _profile_cache:
        _profile_cache[key] = profiles.solve_radial_ivp(n, c, r_max, h=h)
    return _profile_cache[key]


def _disk_solve(R, c, h):
    key = (R, c, h)
    if key not in _solve_cache:
        dom = ConvexDomain.disk(R)
        _solve_cache[key] = solve_dirichlet(dom, c, 0.0, SolverConfig(h=h))
    return _solve_cache[key]


def _result(cid, name, passed, details, t0):
    return {"id": cid, "name": name, "passed": bool(passed),
            "details": details, "seconds": round(time.time() - t0, 3)}


# ---------------------------------------------------------------------------

def criterion_1(quick=False):
    """Radial oracle (n=1): the profile matches log cosh on [0, 5] to 1e-6."""
    t0 = time.time()
    prof = _radial(1, 0.0, 5.0, h=0.005)
    err = float(np.max(np.abs(prof.values - np.log(np.cosh(prof.grid)))))
    return _result(1, "radial oracle n=1 (log cosh)", err <= 1e-6,
                   {"sup_error": err, "tolerance": 1e-6}, t0)


def criterion_2(quick=False):
    """Radial bounds for n in {2..5} on [0, 50], slack >= -1e-8."""
    t0 = time.time()
    details = {}
    ok = True
    for n in (2, 3, 4, 5):
        prof = _radial(n, 0.0, 50.0)
        slacks = profiles.radial_bound_slacks(prof)
        res = float(np.max(np.abs(prof.ode_residual()[1:])))
        details[f"n={n}"] = {**slacks, "ode_residual": res}
        ok &= min(slacks["lower"], slacks["upper"], slacks["slope"]) >= -1e-8
        ok &= res <= 1e-6
    return _result(2, "radial two-sided and slope bounds, n=2..5", ok, details, t0)


def criterion_3(quick=False):
    """Barrier identity residuals <= 1e-8 over the stated K, n, t ranges."""
    t0 = time.time()
    ts = np.linspace(0.1, 5.0, 40)
    worst = 0.0
    for K in (0.5, -0.5, 1.0, -1.0, 4.0, -4.0):
        for n in (2, 3):
            rw, rwt = profiles.barrier_residuals(K, n, ts)
            worst = max(worst, float(np.max(np.abs(rw))), float(np.max(np.abs(rwt))))
    return _result(3, "barrier identities", worst <= 1e-8,
                   {"sup_residual": worst, "tolerance": 1e-8}, t0)


def criterion_4(quick=False):
    """BVP sandwiches on random hypothesis-satisfying data; schedule agreement."""
    t0 = time.time()
    rng = np.random.default_rng(20240817)
    n_each = 6 if quick else 20
    worst_slack = np.inf
    worst_agree = 0.0
    cases = []

    def schedules(r):
        m = 128
        h1 = [r / m * 0.5 ** j for j in range(1, 5)]
        h2 = [r / m * (1.0 / 3.0) ** j for j in range(1, 4)]
        return h1, h2

    # upper case: r^2 <= (n-1) C, C > 0
    made = 0
    while made < n_each:
        n = int(rng.integers(2, 4))
        r = float(rng.uniform(0.4, 0.85 if n == 2 else 1.3))
        lo, hi = r * r / (n - 1), 0.95 * r
        if lo >= hi:
            continue
        C = float(rng.uniform(lo, hi))
        s1, s2 = schedules(r)
        p1 = profiles.solve_bvp(n, 0.0, r, C, m=128, eps_schedule=s1)
        p2 = profiles.solve_bvp(n, 0.0, r, C, m=128, eps_schedule=s2)
        agree = float(np.max(np.abs(p1.values - p2.values)))
        sw = profiles.bvp_sandwich_slacks(p1)
        if sw["case"] != "upper":
            return _result(4, "BVP sandwiches + uniqueness", False,
                           {"error": f"upper hypothesis not detected at {(n, r, C)}"}, t0)
        worst_slack = min(worst_slack, sw["lower_slack"], sw["upper_slack"])
        worst_agree = max(worst_agree, agree)
        cases.append({"n": n, "r": r, "C": C, **{k: v for k, v in sw.items() if k != "case"},
                      "schedule_agreement": agree})
        made += 1

    # lower case: C < 0 with the K2 hypothesis
    made = 0
    while made < n_each:
        n = int(rng.integers(2, 4))
        r = float(rng.uniform(0.3, 0.8))
        C = float(rng.uniform(-0.95 * r, -0.8 * r))
        K2 = profiles.find_k2(n, r, C)
        if K2 * K2 < r ** (2 * n + 2) / (1.0 - r * r):
            continue
        s1, s2 = schedules(r)
        p1 = profiles.solve_bvp(n, 0.0, r, C, m=128, eps_schedule=s1)
        p2 = profiles.solve_bvp(n, 0.0, r, C, m=128, eps_schedule=s2)
        agree = float(np.max(np.abs(p1.values - p2.values)))
        sw = profiles.bvp_sandwich_slacks(p1)
        if sw["case"] != "lower":
            return _result(4, "BVP sandwiches + uniqueness", False,
                           {"error": f"lower hypothesis not detected at {(n, r, C)}"}, t0)
        worst_slack = min(worst_slack, sw["lower_slack"], sw["upper_slack"])
        worst_agree = max(worst_agree, agree)
        cases.append({"n": n, "r": r, "C": C, **{k: v for k, v in sw.items() if k != "case"},
                      "schedule_agreement": agree})
        made += 1

    ok = worst_slack >= -1e-5 and worst_agree <= 1e-5
    return _result(4, "BVP sandwiches + uniqueness", ok,
                   {"worst_slack": worst_slack, "worst_schedule_agreement": worst_agree,
                    "cases": len(cases)}, t0)


def _criterion5_cases(quick):
    if quick:
        return [(2.0, 0.0), (2.0, 1.0)], 1.0 / 64.0
    return [(R, c) for R in (1.0, 2.0, 3.0) for c in (0.0, 1.0)], 1.0 / 128.0


def criterion_5(quick=False):
    """Disk solves match the radial oracle to 5h^2 with ratio in [3, 5]."""
    t0 = time.time()
    cases, h = _criterion5_cases(quick)
    details = {}
    ok = True
    for R, c in cases:
        prof = _radial(2, c, R + 0.5, h=0.005)
        errs = {}
        times = {}
        for hh in (h, h / 2):
            ts = time.time()
            fld = _disk_solve(R, c, hh)
            r = np.hypot(fld.geo.xs, fld.geo.ys)
            errs[hh] = float(np.max(np.abs(fld.u - (prof(r) - prof(R)))))
            times[hh] = fld.diagnostics["solve_seconds"]
        ratio = errs[h] / errs[h / 2]
        rec = {"err_h": errs[h], "bound": 5 * h * h, "ratio": ratio,
               "solve_seconds_h": times[h], "solve_seconds_h2": times[h / 2]}
        details[f"R={R},c={c}"] = rec
        ok &= errs[h] <= 5 * h * h and 3.0 <= ratio <= 5.0
        ok &= times[h] < 60.0
    return _result(5, "2-D / 1-D cross-validation on disks", ok, details, t0)


def criterion_6(quick=False):
    """Gradient certificate and maximum principle on the criterion-5 solves."""
    t0 = time.time()
    cases, h = _criterion5_cases(quick)
    details = {}
    ok = True
    for R, c in cases:
        fld = _disk_solve(R, c, h)
        try:
            details[f"R={R},c={c}"] = gradient_certificate(fld)
        except Exception as exc:
            details[f"R={R},c={c}"] = {"error": str(exc)}
            ok = False
    return _result(6, "gradient certificate (tanh d bound + max principle)",
                   ok, details, t0)


def criterion_7(quick=False):
    """Convexity certificate (min Hessian eigenvalue >= -10h) on the disks."""
    t0 = time.time()
    cases, h = _criterion5_cases(quick)
    details = {}
    ok = True
    for R, c in cases:
        if 1.0 / R > 1.0:
            continue  # hypothesis needs boundary curvature <= 1
        fld = _disk_solve(R, c, h)
        try:
            details[f"R={R},c={c}"] = convexity_certificate(fld)
        except Exception as exc:
            details[f"R={R},c={c}"] = {"error": str(exc)}
            ok = False
    return _result(7, "convexity certificate", ok, details, t0)


def criterion_8(quick=False):
    """Level-curve identity and induced-Laplacian identity residuals <= 0.1."""
    t0 = time.time()
    _, h = _criterion5_cases(quick)
    details = {}
    ok = True
    for c in (0.0, 1.0):
        fld = _disk_solve(2.0, c, h)
        umin = float(np.min(fld.u))
        worst = 0.0
        for lvl in (0.25 * umin, 0.5 * umin, 0.75 * umin):
            rep = level_set_identity(fld, lvl)
            worst = max(worst, rep["residual_sup"], rep["ugg_recovery_sup"])
        lap = induced_laplacian_check(fld)
        details[f"c={c}"] = {"level_residual_sup": worst,
                             "laplacian_residual_sup": lap["residual_sup"]}
        ok &= worst <= 0.1 and lap["residual_sup"] <= 0.1
    return _result(8, "level-set and induced-Laplacian identities", ok, details, t0)


def criterion_9(quick=False):
    """Maximality audit on the disk-radius-2 solution."""
    t0 = time.time()
    _, h = _criterion5_cases(quick)
    fld = _disk_solve(2.0, 0.0, h)
    rep = variational.maximality_test(fld, n_trials=50 if quick else 200, seed=7)
    ok = (rep["worst_margin"] <= rep["tol_F"] and rep["spike_strict_decrease"]
          and rep["skipped"] <= rep["trials"] // 10)
    return _result(9, "maximality audit (200 seeded competitors + spike)",
                   ok, {k: rep[k] for k in ("F_value", "worst_margin", "tol_F",
                                            "trials", "skipped", "spike_dF")}, t0)


def criterion_10(quick=False):
    """Construction sandwich and blow-down deviation for cone data."""
    t0 = time.time()
    h = 1.0 / 32.0 if quick else 1.0 / 64.0
    ks = (20.0, 30.0) if quick else (20.0, 30.0, 40.0)
    lams = np.array([[1.0, 0.0], [-1.0, 0.0]])
    data = AsymptoticData(mode="cone", lams=lams, K=5.0)
    cfg = construction.construction_config(h=h)
    run = construction.construct_blowdown(data, 0.0, ks, cfg)
    eps = run.eps[-1]
    bd = construction.blowdown_ratio(run, [15.0])
    bound = (2.0 + 2.0 * eps) / 15.0 + 10.0 * h
    ok = bd["sup_deviation"] <= bound and all(
        s["lower_slack"] >= -10.0 * h and s["upper_slack"] >= -10.0 * h
        for s in run.sandwich)
    details = {"eps": eps, "sandwich": run.sandwich,
               "blowdown_sup": bd["sup_deviation"], "blowdown_bound": bound,
               "cauchy_gap": run.cauchy_gap,
               "upper_infconv_min_slack": run.meta["upper_infconv_min_slack"]}
    return _result(10, "cone-data construction sandwich + blow-down", ok, details, t0)


def criterion_11(quick=False):
    """C^2-data construction: boundary deviation, decay, q1/q2 trap."""
    t0 = time.time()
    h = 1.0 / 32.0
    ks = (20.0,) if quick else (20.0, 30.0)
    f = SphereData.from_callable(lambda th: 0.1 * np.cos(th))
    cfg = construction.construction_config(h=h)
    run = construction.construct_c2_data(f, 0.0, ks, cfg)
    ok = True
    for sw, eps_k in zip(run.sandwich, run.eps):
        ok &= sw["boundary_deviation"] <= eps_k * 1.01 + 1e-6
    rings = run.meta["deviation_rings"]["sup"]
    ok &= bool(np.all(np.diff(rings) <= 5.0 * h))
    qt = run.meta["q_trap"]
    ok &= qt["q1_min_slack"] >= 0 and qt["q2_min_slack"] >= 0
    details = {"eps": run.eps, "boundary_deviation": [s["boundary_deviation"]
                                                      for s in run.sandwich],
               "ring_sup": rings, "q_trap": qt}
    return _result(11, "C2 sphere-data construction", ok, details, t0)


def criterion_12(quick=False):
    """Mean-curvature growth along the n=2 radial solution."""
    t0 = time.time()
    prof = _radial(2, 0.0, 50.0)
    H = profiles.mean_curvature(prof)
    H1 = float(H[np.searchsorted(prof.grid, 1.0)])
    H10 = float(H[np.searchsorted(prof.grid, 10.0)])
    H50 = float(H[-1])
    bound = np.sqrt(4.0 + 2500.0) / 2.0
    ok = H1 < H10 < H50 and H50 >= bound and bool(np.all(np.diff(H) >= -1e-9))
    return _result(12, "unbounded mean-curvature growth", ok,
                   {"H(1)": H1, "H(10)": H10, "H(50)": H50, "bound_at_50": bound}, t0)


def criterion_13(quick=False):
    """Reversed Cauchy-Schwarz inequality on 1e6 random triples."""
    t0 = time.time()
    rep = variational.reversed_cauchy_schwarz_audit(
        100_000 if quick else 1_000_000, seed=3)
    return _result(13, "reversed Cauchy-Schwarz audit", rep["passed"],
                   {"worst_violation": rep["worst_violation"],
                    "samples": rep["samples"]}, t0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11, criterion_12, criterion_13]


def run_all(quick: bool = False, printer=print) -> list:
    """Run the full suite; one line per criterion; returns the result list."""
    results = []
    for fn in CRITERIA:
        try:
            res = fn(quick=quick)
        except Exception as exc:  # a crashed criterion is a failed criterion
            res = {"id": int(fn.__name__.split("_")[1]), "name": fn.__doc__ or fn.__name__,
                   "passed": False, "details": {"exception": f"{type(exc).__name__}: {exc}"},
                   "seconds": float("nan")}
        results.append(res)
        status = "PASS" if res["passed"] else "FAIL"
        printer(f"[{status}] criterion {res['id']:2d}: {res['name']} "
                f"({res['seconds']}s)")
    return results
