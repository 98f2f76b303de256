"""Batch front end: JSON manifests in, CSV/JSON artifacts out.

One manifest describes one run (or a list of independent runs):

    {"command": "radial", "n": 2, "c": 0.0, "r_max": 50.0, "seed": 0}

Commands: radial | bvp | barrier | dirichlet | construct | audit |
acceptance.  Unknown keys are rejected (exit 2 with the offending field);
numerical failures exit 1 with the stage name; every entry writes a
machine-readable summary.json even on failure.  Artifacts are written via
temp file + rename, the seed is recorded in every summary, and numeric
fields are normalized to 12 significant digits so reruns with one seed
are byte-identical.

Usage:
    solitonlab run MANIFEST.json [--out DIR] [--jobs N]
    solitonlab acceptance [--quick] [--out DIR]
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

__all__ = ["main", "run_manifest", "validate_manifest"]

_SCHEMAS = {
    "radial": {"required": {"n", "c", "r_max"}, "optional": {"h"}},
    "bvp": {"required": {"n", "c", "r", "C"}, "optional": {"m"}},
    "barrier": {"required": {"K", "n"}, "optional": {"t_max", "samples"}},
    "dirichlet": {"required": {"domain", "c", "boundary_value"},
                  "optional": {"h", "damping", "picard_tol", "max_iter",
                               "cap_mode", "v_floor"}},
    "construct": {"required": {"data", "c", "k_list"},
                  "optional": {"h", "sandwich_tol", "eps0", "n_theta"}},
    "audit": {"required": {"R", "c"}, "optional": {"h", "trials"}},
    "acceptance": {"required": set(), "optional": {"quick"}},
}
_COMMON = {"command", "seed", "name", "out"}


class ManifestError(ValueError):
    """Schema violation (unknown key, missing field, bad command)."""


def validate_manifest(entry: dict) -> None:
    if not isinstance(entry, dict):
        raise ManifestError("manifest entry must be a JSON object")
    cmd = entry.get("command")
    if cmd not in _SCHEMAS:
        raise ManifestError(
            f"unknown command {cmd!r}; expected one of {sorted(_SCHEMAS)}")
    schema = _SCHEMAS[cmd]
    keys = set(entry)
    unknown = keys - schema["required"] - schema["optional"] - _COMMON
    if unknown:
        raise ManifestError(f"unknown keys for command {cmd!r}: {sorted(unknown)}")
    missing = schema["required"] - keys
    if missing:
        raise ManifestError(f"missing required fields for {cmd!r}: {sorted(missing)}")


def _round12(obj):
    """Normalize every float to 12 significant digits (reproducible dumps)."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, (np.floating,)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_round12(v) for v in obj.tolist()]
    return obj


def _write_atomic(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: dict) -> None:
    _write_atomic(path, json.dumps(_round12(payload), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def _cmd_radial(entry, outdir):
    from . import profiles
    n = int(entry["n"])
    c = float(entry["c"])
    r_max = float(entry["r_max"])
    prof = profiles.solve_radial_ivp(n, c, r_max, h=float(entry.get("h", 0.01)))
    _write_atomic(os.path.join(outdir, "profile.csv"), prof.to_csv())
    summary = {"n": n, "c": c, "r_max": r_max,
               "ode_residual_sup": float(np.max(np.abs(prof.ode_residual()[1:]))),
               "growth": float(prof.values[-1] - prof.values[0])}
    ok = summary["ode_residual_sup"] <= 1e-6
    if c == 0.0:
        slacks = profiles.radial_bound_slacks(prof)
        summary["bound_slacks"] = slacks
        ok &= min(slacks["lower"], slacks["upper"], slacks["slope"]) >= -1e-8
    return ok, summary


def _cmd_bvp(entry, outdir):
    from . import profiles
    prof = profiles.solve_bvp(int(entry["n"]), float(entry["c"]),
                              float(entry["r"]), float(entry["C"]),
                              m=int(entry.get("m", 256)))
    _write_atomic(os.path.join(outdir, "profile.csv"), prof.to_csv())
    summary = {"n": prof.n, "c": prof.c, "r": prof.r_max, "C": prof.meta["C"],
               "extrapolation_drift": prof.meta["extrapolation_drift"]}
    ok = True
    if prof.c == 0.0:
        sw = profiles.bvp_sandwich_slacks(prof)
        summary["sandwich"] = sw
        if sw["case"] is not None:
            ok = min(sw["lower_slack"], sw["upper_slack"]) >= -1e-5
    return ok, summary


def _cmd_barrier(entry, outdir):
    from . import profiles
    K = float(entry["K"])
    n = int(entry["n"])
    t_max = float(entry.get("t_max", 5.0))
    m = int(entry.get("samples", 200))
    ts = np.linspace(t_max / m, t_max, m)
    w = np.array([profiles.barrier_w(K, n, t) for t in ts])
    wt = np.array([profiles.barrier_w_tilde(K, n, t) for t in ts])
    rw, rwt = profiles.barrier_residuals(K, n, ts)
    lines = ["t,w,w_tilde,residual_w,residual_w_tilde"]
    for row in zip(ts, w, wt, rw, rwt):
        lines.append(",".join(f"{v:.12g}" for v in row))
    _write_atomic(os.path.join(outdir, "barriers.csv"), "\n".join(lines) + "\n")
    sup = max(float(np.max(np.abs(rw))), float(np.max(np.abs(rwt))))
    return sup <= 1e-8, {"K": K, "n": n, "residual_sup": sup}


def _domain_from_spec(spec) -> "object":
    from .geometry import ConvexDomain
    if isinstance(spec, dict) and spec.get("kind") == "disk":
        return ConvexDomain.disk(float(spec["R"]))
    raise ManifestError(f"unsupported domain spec {spec!r} (expected disk)")


def _cmd_dirichlet(entry, outdir):
    from .dirichlet import (SolverConfig, convexity_certificate,
                            gradient_certificate, solve_dirichlet)
    dom = _domain_from_spec(entry["domain"])
    cfg = SolverConfig(h=float(entry.get("h", 1.0 / 64.0)),
                       damping=float(entry.get("damping", 0.7)),
                       picard_tol=float(entry.get("picard_tol", 1e-8)),
                       max_iter=int(entry.get("max_iter", 80)),
                       cap_mode=str(entry.get("cap_mode", "strict")),
                       v_floor=float(entry.get("v_floor", 1e-3)))
    fld = solve_dirichlet(dom, float(entry["c"]), float(entry["boundary_value"]), cfg)
    _write_atomic(os.path.join(outdir, "field.csv"), fld.to_csv())
    certs = {"solve": fld.diagnostics,
             "gradient": gradient_certificate(fld),
             "convexity": convexity_certificate(fld)
             if (dom.curvature is None or float(np.max(dom.curvature)) <= 1.0)
             else {"skipped": "boundary curvature > 1"}}
    ok = fld.diagnostics["residual_sup"] <= fld.diagnostics["residual_allowance"] \
        or fld.diagnostics.get("raw_stalled", False)
    return ok, certs


def _cmd_construct(entry, outdir):
    from . import construction
    from .geometry import AsymptoticData
    data = AsymptoticData.from_dict(entry["data"])
    cfg = construction.construction_config(h=float(entry.get("h", 1.0 / 64.0)),
                                           c=float(entry["c"]))
    if data.mode == "cone":
        run = construction.construct_blowdown(
            data, float(entry["c"]), entry["k_list"], cfg,
            sandwich_tol=entry.get("sandwich_tol"),
            n_theta=int(entry.get("n_theta", 720)))
        bd = construction.blowdown_ratio(run, [15.0])
        summary = run.summary()
        summary["blowdown"] = bd
    else:
        run = construction.construct_c2_data(
            data.f, float(entry["c"]), entry["k_list"], cfg,
            eps0=float(entry.get("eps0", 0.5)),
            n_theta=int(entry.get("n_theta", 720)))
        summary = run.summary()
    for i, (k, dom) in enumerate(zip(run.k_list, run.domains)):
        _write_atomic(os.path.join(outdir, f"domain_k{int(k)}.csv"), dom.to_csv())
        fld = run.fields[i]
        stride = max(1, fld.geo.n // 200_000)
        csv = fld.to_csv() if stride == 1 else _decimated_csv(fld, stride)
        _write_atomic(os.path.join(outdir, f"field_k{int(k)}.csv"), csv)
    return True, summary


def _decimated_csv(fld, stride: int) -> str:
    import io
    gx, gy = fld.gradient()
    v = fld.speed()
    buf = io.StringIO()
    buf.write(f"# decimated, stride={stride}\n")
    buf.write("x,y,u,ux,uy,v\n")
    for i in range(0, fld.geo.n, stride):
        buf.write(f"{fld.geo.xs[i]:.12g},{fld.geo.ys[i]:.12g},{fld.u[i]:.12g},"
                  f"{gx[i]:.12g},{gy[i]:.12g},{v[i]:.12g}\n")
    return buf.getvalue()


def _cmd_audit(entry, outdir):
    from . import variational
    from .dirichlet import SolverConfig, solve_dirichlet
    from .geometry import ConvexDomain
    dom = ConvexDomain.disk(float(entry["R"]))
    fld = solve_dirichlet(dom, float(entry["c"]), 0.0,
                          SolverConfig(h=float(entry.get("h", 1.0 / 64.0))))
    rep = variational.maximality_test(fld, n_trials=int(entry.get("trials", 200)),
                                      seed=int(entry.get("seed", 0)))
    ok = rep["worst_margin"] <= rep["tol_F"] and rep["spike_strict_decrease"]
    return ok, rep


def _cmd_acceptance(entry, outdir):
    from . import acceptance
    results = acceptance.run_all(quick=bool(entry.get("quick", False)))
    ok = all(r["passed"] for r in results)
    return ok, {"criteria": results}


_RUNNERS = {
    "radial": _cmd_radial,
    "bvp": _cmd_bvp,
    "barrier": _cmd_barrier,
    "dirichlet": _cmd_dirichlet,
    "construct": _cmd_construct,
    "audit": _cmd_audit,
    "acceptance": _cmd_acceptance,
}


def run_entry(entry: dict, outdir: str) -> int:
    """Run one manifest entry; returns the exit code (summary always written)."""
    validate_manifest(entry)
    seed = int(entry.get("seed", 0))
    np.random.seed(seed % 2 ** 32)
    os.makedirs(outdir, exist_ok=True)
    summary = {"command": entry["command"], "seed": seed, "manifest": entry}
    try:
        ok, payload = _RUNNERS[entry["command"]](dict(entry), outdir)
        summary["result"] = payload
        summary["passed"] = bool(ok)
        code = 0 if ok else 1
    except ManifestError:
        raise
    except Exception as exc:
        summary["passed"] = False
        summary["error"] = f"{type(exc).__name__}: {exc}"
        code = 1
    _write_json(os.path.join(outdir, "summary.json"), summary)
    return code


def run_manifest(manifest, out_root: str, jobs: int = 1) -> int:
    """Run a manifest (a dict or a list of dicts); exit code is the max."""
    entries = manifest if isinstance(manifest, list) else [manifest]
    for e in entries:
        validate_manifest(e)
    dirs = []
    for i, e in enumerate(entries):
        name = e.get("name", f"{e['command']}_{i:03d}")
        dirs.append(os.path.join(out_root, str(name)))
    if jobs > 1 and len(entries) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(run_entry, entries, dirs))
    else:
        codes = [run_entry(e, d) for e, d in zip(entries, dirs)]
    return max(codes)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="solitonlab",
                                 description="spacelike translating soliton lab")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="execute a JSON manifest")
    p_run.add_argument("manifest")
    p_run.add_argument("--out", default="runs")
    p_run.add_argument("--jobs", type=int, default=1)
    p_acc = sub.add_parser("acceptance", help="run the acceptance suite")
    p_acc.add_argument("--quick", action="store_true")
    p_acc.add_argument("--out", default="runs/acceptance")
    args = ap.parse_args(argv)

    if args.cmd == "acceptance":
        entry = {"command": "acceptance", "quick": args.quick, "seed": 0}
        return run_entry(entry, args.out)

    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read manifest: {exc}", file=sys.stderr)
        return 2
    try:
        return run_manifest(manifest, args.out, jobs=args.jobs)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
