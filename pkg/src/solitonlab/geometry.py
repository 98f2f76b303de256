"""Asymptotic data at infinity, mollification, and convex sublevel domains.

Planar machinery (n = 2): prescribed cones V(x) = max over a finite set
Lambda of unit directions of <lambda, x>, their truncations
Vt(x) = max(V(x), |x| - K), smooth sphere data f on S^1, the standard
bump mollifier, and extraction of the convex sublevel domains
{field < k} with boundary-curvature control.

Mollifier contracts (field Lipschitz-1):

    |f_eps - f| <= eps,   |D f_eps| <= 1,   |D^2 f_eps| <= C4 / eps,

with C4 = int |D rho| over the unit ball and rho the normalized bump
c * exp(-1/(1-|x|^2)).  The curvature of the level curve {f_eps = k} is
then at most 2 n C4 / eps once the radial slope condition holds, which is
what makes these domains usable for convexity-preserving Dirichlet solves.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "PLANE_DIM",
    "AsymptoticData",
    "SphereData",
    "ConvexDomain",
    "MollifiedField",
    "SlopeConditionError",
    "eval_cone",
    "eval_truncated_cone",
    "mollify",
    "sublevel_domain",
    "boundary_curvature",
    "choose_epsilon",
    "kernel_c4",
]

PLANE_DIM = 2  # the domain/grid machinery is fixed to the plane


class SlopeConditionError(RuntimeError):
    """The radial slope condition failed on a level set."""


# ---------------------------------------------------------------------------
# mollification kernel (normalized bump on the unit disk)
# ---------------------------------------------------------------------------

def _bump_radial(r):
    """exp(-1/(1-r^2)) on [0,1), zero at r >= 1, and its first two derivatives."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    s = np.where(inside, 1.0 - r * r, 1.0)
    f = np.where(inside, np.exp(-1.0 / s), 0.0)
    g1 = -2.0 * r / s ** 2                      # d/dr of -1/(1-r^2)
    g2 = -2.0 * (1.0 + 3.0 * r * r) / s ** 3
    fp = np.where(inside, f * g1, 0.0)
    fpp = np.where(inside, f * (g2 + g1 * g1), 0.0)
    return f, fp, fpp


class _Kernel:
    """Tensor polar quadrature of the bump and its derivative weights."""

    def __init__(self, nr: int = 32, na: int = 64):
        xr, wr = np.polynomial.legendre.leggauss(nr)
        r = 0.5 * (xr + 1.0)
        wr = 0.5 * wr
        th = 2.0 * np.pi * np.arange(na) / na
        wth = 2.0 * np.pi / na
        R, TH = np.meshgrid(r, th, indexing="ij")
        W = (wr[:, None] * wth * R).ravel()     # area weights r dr dth
        R = R.ravel()
        TH = TH.ravel()
        cs, sn = np.cos(TH), np.sin(TH)
        self.nodes = np.stack([R * cs, R * sn], axis=1)

        f, fp, fpp = _bump_radial(R)
        mass = float(np.sum(W * f))
        f, fp, fpp = f / mass, fp / mass, fpp / mass

        self.w_value = W * f
        self.w_value /= self.w_value.sum()      # exact unit mass on the rule
        # gradient weights: (d_i rho)(y) * w; centered so constants give 0
        wd = (W * fp)[:, None] * np.stack([cs, sn], axis=1)
        self.w_grad = wd - wd.mean(axis=0)
        # Hessian weights (xx, xy, yy): D^2 rho = (fpp - fp/r) rhat x rhat + (fp/r) I
        a = W * (fpp - fp / R)
        b = W * fp / R
        wh = np.stack([a * cs * cs + b, a * cs * sn, a * sn * sn + b], axis=1)
        self.w_hess = wh - wh.mean(axis=0)

        # C4 = int |D rho|, dense 1-D radial rule (the integrand is radial)
        xq, wq = np.polynomial.legendre.leggauss(200)
        rq = 0.5 * (xq + 1.0)
        _, fpq, _ = _bump_radial(rq)
        self.c4 = float(2.0 * np.pi * np.sum(0.5 * wq * np.abs(fpq) / mass * rq))


_KERNEL: _Kernel | None = None


def _kernel() -> _Kernel:
    global _KERNEL
    if _KERNEL is None:
        _KERNEL = _Kernel()
    return _KERNEL


def kernel_c4() -> float:
    """C4 = int_{B_1} |D rho| for the normalized bump (computed once)."""
    return _kernel().c4


# ---------------------------------------------------------------------------
# asymptotic data
# ---------------------------------------------------------------------------

def eval_cone(lams, x):
    """V(x) = max over rows lambda of <lambda, x>; 1-homogeneous and convex."""
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    if lams.shape[0] == 0:
        raise ValueError("direction set must be nonempty")
    x = np.asarray(x, dtype=float)
    return np.max(x @ lams.T, axis=-1)


def eval_truncated_cone(lams, K, x):
    """Vt(x) = max(V(x), |x| - K); convex, Vt(0) = 0, Vt(x)/|x| -> 1."""
    if K <= 0:
        raise ValueError(f"truncation radius K must be positive, got {K}")
    x = np.asarray(x, dtype=float)
    return np.maximum(eval_cone(lams, x), np.linalg.norm(x, axis=-1) - K)


class SphereData:
    """Periodic C^2 boundary data f on S^1, held as uniform angular samples."""

    def __init__(self, values, thetas=None):
        values = np.asarray(values, dtype=float)
        if thetas is None:
            thetas = 2.0 * np.pi * np.arange(len(values)) / len(values)
        self.thetas = np.asarray(thetas, dtype=float)
        self.values = values
        from scipy.interpolate import CubicSpline
        th = np.concatenate([self.thetas, [self.thetas[0] + 2.0 * np.pi]])
        vals = np.concatenate([values, [values[0]]])
        self._spline = CubicSpline(th, vals, bc_type="periodic")

    @classmethod
    def from_callable(cls, fn, m: int = 720) -> "SphereData":
        th = 2.0 * np.pi * np.arange(m) / m
        return cls(np.asarray([fn(t) for t in th], dtype=float), th)

    def __call__(self, theta, nu: int = 0):
        return self._spline(np.mod(theta, 2.0 * np.pi), nu)

    def radial_extension(self, x):
        """f(x/|x|) extended 0-homogeneously (value 0 at the origin)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        th = np.arctan2(x[..., 1], x[..., 0])
        out = self(th)
        return np.where(r > 0, out, 0.0)


@dataclass
class AsymptoticData:
    """Prescribed behavior at infinity: a truncated cone or C^2 sphere data."""

    mode: str                       # "cone" | "sphere_data"
    lams: np.ndarray | None = None  # (m, 2) unit directions, cone mode
    K: float | None = None          # truncation radius, cone mode
    f: SphereData | None = None     # sphere_data mode
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.mode == "cone":
            self.lams = np.atleast_2d(np.asarray(self.lams, dtype=float))
            norms = np.linalg.norm(self.lams, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise ValueError("every direction must have unit norm to 1e-12")
            if len(self.lams) < 2:
                raise ValueError("cone mode needs at least two directions")
            d = self.lams[:, None, :] - self.lams[None, :, :]
            if np.max(np.linalg.norm(d, axis=-1)) < 1e-12:
                raise ValueError("directions must not all coincide (linear data excluded)")
            if self.K is None or self.K <= 0:
                raise ValueError("cone mode needs a truncation radius K > 0")
        elif self.mode == "sphere_data":
            if self.f is None:
                raise ValueError("sphere_data mode needs boundary data f")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    def field(self):
        """Callable (M, 2) -> (M,) evaluating the weakly spacelike target."""
        if self.mode == "cone":
            lams, K = self.lams, self.K
            return lambda pts: eval_truncated_cone(lams, K, pts)
        f = self.f
        return lambda pts: (np.linalg.norm(np.asarray(pts, dtype=float), axis=-1)
                            + f.radial_extension(pts))

    def field_gradient(self):
        """Callable (M, 2) -> (M, 2): the a.e. gradient of the target field."""
        if self.mode == "cone":
            lams, K = self.lams, self.K

            def grad(pts):
                pts = np.atleast_2d(np.asarray(pts, dtype=float))
                vals = pts @ lams.T
                j = np.argmax(vals, axis=1)
                vmax = vals[np.arange(len(pts)), j]
                r = np.linalg.norm(pts, axis=1)
                g = lams[j].copy()
                trunc = (r - K > vmax) & (r > 0)
                g[trunc] = pts[trunc] / r[trunc, None]
                return g
            return grad

        f = self.f

        def grad(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            r = np.linalg.norm(pts, axis=1)
            safe = np.where(r > 0, r, 1.0)
            th = np.arctan2(pts[:, 1], pts[:, 0])
            tangent = np.stack([-pts[:, 1], pts[:, 0]], axis=1) / safe[:, None] ** 2
            g = pts / safe[:, None] + f(th, nu=1)[:, None] * tangent
            g[r == 0] = 0.0
            return g
        return grad

    def mollified(self, eps: float) -> "MollifiedField":
        return MollifiedField(self.field(), eps, field_grad=self.field_gradient())

    def to_dict(self) -> dict:
        if self.mode == "cone":
            return {"mode": "cone", "lams": self.lams.tolist(), "K": self.K}
        return {"mode": "sphere_data",
                "thetas": self.f.thetas.tolist(), "values": self.f.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AsymptoticData":
        if d["mode"] == "cone":
            return cls(mode="cone", lams=np.asarray(d["lams"], dtype=float), K=float(d["K"]))
        return cls(mode="sphere_data",
                   f=SphereData(np.asarray(d["values"], dtype=float),
                                np.asarray(d["thetas"], dtype=float)))


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def mollify(field_eval, eps: float, points, order: int = 2,
            field_grad=None, bound_radius: float | None = None, chunk: int = 1024):
    """Smoothed values (and derivatives) of a Lipschitz field at query points.

    Returns ``values`` for order 0, ``(values, grads)`` for order 1 and
    ``(values, grads, hessians)`` for order 2, with hessians packed as
    (xx, xy, yy) triples.

    When ``field_grad`` (the a.e. gradient of the base field) is supplied,
    the smoothed gradient is the kernel-weighted average of field gradients,
    so |grad| <= max |D field| holds structurally, and the Hessian uses the
    mixed form (1/eps) int D rho (x) D field, whose entries obey the
    C4/eps bound structurally as well.  Without it both derivatives fall on
    the kernel side (field values only), with quadrature-level slack in the
    bounds instead.

    ``bound_radius``: if the field data is only valid on |x| <= R, queries
    with |x| + eps > R raise ValueError.
    """
    if eps <= 0:
        raise ValueError(f"mollification width eps must be positive, got {eps}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if bound_radius is not None:
        rq = np.linalg.norm(pts, axis=1)
        if np.any(rq + eps > bound_radius):
            raise ValueError("query within eps of the field data boundary")
    ker = _kernel()
    M = pts.shape[0]
    vals = np.empty(M)
    grads = np.empty((M, 2)) if order >= 1 else None
    hess = np.empty((M, 3)) if order >= 2 else None
    for lo in range(0, M, chunk):
        hi = min(lo + chunk, M)
        X = (pts[lo:hi, None, :] - eps * ker.nodes[None, :, :]).reshape(-1, 2)
        fv = np.asarray(field_eval(X), dtype=float).reshape(hi - lo, -1)
        vals[lo:hi] = fv @ ker.w_value
        if order >= 1 and field_grad is not None:
            gv = np.asarray(field_grad(X), dtype=float).reshape(hi - lo, -1, 2)
            grads[lo:hi] = np.einsum("mqc,q->mc", gv, ker.w_value)
            if order >= 2:
                Hm = np.einsum("qi,mqj->mij", ker.w_grad, gv) / eps
                Hm = 0.5 * (Hm + np.swapaxes(Hm, 1, 2))
                hess[lo:hi] = Hm.reshape(hi - lo, 4)[:, [0, 1, 3]]
        else:
            if order >= 1:
                grads[lo:hi] = (fv @ ker.w_grad) / eps
            if order >= 2:
                hess[lo:hi] = (fv @ ker.w_hess) / (eps * eps)
    if order == 0:
        return vals
    if order == 1:
        return vals, grads
    return vals, grads, hess


class MollifiedField:
    """A Lipschitz field smoothed at scale eps (see ``mollify``)."""

    def __init__(self, field_eval, eps: float, field_grad=None):
        self.base = field_eval
        self.base_grad = field_grad
        self.eps = float(eps)

    def value(self, pts):
        return mollify(self.base, self.eps, pts, order=0)

    def with_gradient(self, pts):
        return mollify(self.base, self.eps, pts, order=1, field_grad=self.base_grad)

    def with_hessian(self, pts):
        return mollify(self.base, self.eps, pts, order=2, field_grad=self.base_grad)

    def __call__(self, pts):
        return self.value(pts)


# ---------------------------------------------------------------------------
# convex domains from sublevel sets
# ---------------------------------------------------------------------------

@dataclass
class ConvexDomain:
    """Bounded convex planar region given by a radial function about a center."""

    center: np.ndarray
    thetas: np.ndarray
    radii: np.ndarray
    curvature: np.ndarray | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        if np.any(self.radii <= 0):
            raise ValueError("radial function must be positive")

    @classmethod
    def disk(cls, radius: float, center=(0.0, 0.0), n_theta: int = 720) -> "ConvexDomain":
        th = 2.0 * np.pi * np.arange(n_theta) / n_theta
        return cls(center=np.asarray(center, dtype=float), thetas=th,
                   radii=np.full(n_theta, float(radius)),
                   curvature=np.full(n_theta, 1.0 / radius),
                   meta={"kind": "disk", "radius": float(radius)})

    def boundary_points(self) -> np.ndarray:
        return self.center + self.radii[:, None] * np.stack(
            [np.cos(self.thetas), np.sin(self.thetas)], axis=1)

    def radius_at(self, theta):
        th = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
        thp = np.concatenate([self.thetas, [2.0 * np.pi]])
        rp = np.concatenate([self.radii, [self.radii[0]]])
        return np.interp(th, thp, rp)

    def contains(self, pts, shrink: float = 0.0) -> np.ndarray:
        """Mask of points strictly inside (radial test; shrink > 0 insets the boundary)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float)) - self.center
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        return r < self.radius_at(th) - shrink

    @property
    def diameter(self) -> float:
        b = self.boundary_points()
        d2 = 0.0
        for i in range(0, len(b), 64):
            seg = b[i:i + 64]
            d2 = max(d2, float(np.max(np.sum((seg[:, None, :] - b[None, :, :]) ** 2, axis=-1))))
        return math.sqrt(d2)

    @property
    def inradius(self) -> float:
        """Largest disk about the center contained in the domain."""
        return float(self.radii.min())

    def convexity_slack(self) -> float:
        """Min cross product over consecutive boundary edges (>= 0 for convex)."""
        b = self.boundary_points()
        e = np.diff(np.vstack([b, b[:1]]), axis=0)
        cross = e[:-1, 0] * e[1:, 1] - e[:-1, 1] * e[1:, 0]
        cross = np.append(cross, e[-1, 0] * e[0, 1] - e[-1, 1] * e[0, 0])
        return float(cross.min())

    def require_convex(self, tol: float = 1e-10) -> None:
        slack = self.convexity_slack()
        if slack < -tol * max(1.0, float(self.radii.max()) ** 2):
            raise ValueError(f"boundary polygon is not convex (cross product {slack:.3e})")

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = {"center": self.center.tolist(), "diameter": self.diameter}
        header.update({k: v for k, v in self.meta.items()
                       if isinstance(v, (int, float, str))})
        if self.curvature is not None:
            header["max_curvature"] = float(np.max(self.curvature))
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        buf.write("theta,r,kappa\n")
        kap = self.curvature if self.curvature is not None else np.full_like(self.radii, np.nan)
        for t, r, k in zip(self.thetas, self.radii, kap):
            buf.write(f"{t:.12g},{r:.12g},{k:.12g}\n")
        return buf.getvalue()


def _bracketed_roots(g, lo, hi, glo, ghi, tol, maxit: int = 90):
    """Vectorized bracketed root finding (Illinois-accelerated bisection).

    ``g`` is increasing along each bracket with g(lo) < 0 < g(hi); each
    call evaluates every ray at once.  Brackets shrink below ``tol``.
    """
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    glo, ghi = glo.astype(float).copy(), ghi.astype(float).copy()
    side = np.zeros(len(lo), dtype=int)
    act = np.flatnonzero(hi - lo >= tol)
    for it in range(maxit):
        if act.size == 0:
            break
        w = hi[act] - lo[act]
        denom = ghi[act] - glo[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (lo[act] * ghi[act] - hi[act] * glo[act]) / denom
        mid = 0.5 * (lo[act] + hi[act])
        bad = ~np.isfinite(x) | (it % 3 == 2)  # periodic bisection step: guaranteed shrink
        x = np.where(bad, mid, np.clip(x, lo[act] + 1e-3 * w, hi[act] - 1e-3 * w))
        gx = g(x, act)
        neg = gx < 0
        stale_hi = neg & (side[act] == -1)
        stale_lo = (~neg) & (side[act] == 1)
        lo[act] = np.where(neg, x, lo[act])
        glo[act] = np.where(neg, gx, glo[act])
        hi[act] = np.where(neg, hi[act], x)
        ghi[act] = np.where(neg, ghi[act], gx)
        ghi[act] = np.where(stale_hi, 0.5 * ghi[act], ghi[act])
        glo[act] = np.where(stale_lo, 0.5 * glo[act], glo[act])
        side[act] = np.where(neg, -1, 1)
        act = act[hi[act] - lo[act] >= tol]
    return 0.5 * (lo + hi)


def sublevel_domain(smooth_field: MollifiedField, k: float, n_theta: int = 720,
                    r_tol: float = 1e-10, slope_min: float = 0.5) -> ConvexDomain:
    """Extract the convex sublevel set {smooth_field < k} as a radial domain.

    The boundary radius on each of ``n_theta`` uniform rays from the origin
    is found by bisection to ``r_tol``; the directional derivative along
    each ray must be at least ``slope_min`` on the boundary (the radial
    slope condition), else SlopeConditionError.
    """
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)

    v0 = smooth_field.value(np.zeros((1, 2)))[0]
    if v0 >= k:
        raise SlopeConditionError(f"origin is not interior: field(0)={v0:.6g} >= k={k}")

    hi = np.full(n_theta, 1.0)
    for _ in range(80):
        vals = smooth_field.value(hi[:, None] * dirs)
        grow = vals < k
        if not np.any(grow):
            break
        hi[grow] *= 2.0
        if np.any(hi > 1e9):
            raise SlopeConditionError("level set appears unbounded along some ray")
    lo = np.zeros(n_theta)
    radii = _bracketed_roots(
        lambda r, idx: smooth_field.value(r[:, None] * dirs[idx]) - k,
        lo, hi, np.full(n_theta, v0 - k), vals - k, r_tol)

    bpts = radii[:, None] * dirs
    vals, grads = smooth_field.with_gradient(bpts)
    radial_slope = np.sum(grads * dirs, axis=1)
    if np.any(radial_slope < slope_min):
        j = int(np.argmin(radial_slope))
        raise SlopeConditionError(
            f"radial slope {radial_slope[j]:.4f} < {slope_min} on ray theta={th[j]:.4f}")
    worst_val = float(np.max(np.abs(vals - k)))

    dom = ConvexDomain(center=np.zeros(2), thetas=th, radii=radii,
                       meta={"level": float(k), "eps": smooth_field.eps,
                             "boundary_value_error": worst_val})
    dom.require_convex()
    return dom


def boundary_curvature(smooth_field: MollifiedField, domain: ConvexDomain) -> np.ndarray:
    """Curvature samples of the level curve along the domain boundary.

    Planar formula kappa = (Vxx Vy^2 - 2 Vxy Vx Vy + Vyy Vx^2) / |DV|^3.
    Raises if |DV| < 1/4 at a boundary sample (slope hypothesis broken).
    """
    bpts = domain.boundary_points()
    _, g, Hc = smooth_field.with_hessian(bpts)
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn < 0.25):
        j = int(np.argmin(gn))
        raise SlopeConditionError(
            f"|DV|={gn[j]:.4f} < 1/4 at boundary theta={domain.thetas[j]:.4f}")
    kappa = (Hc[:, 0] * g[:, 1] ** 2 - 2.0 * Hc[:, 1] * g[:, 0] * g[:, 1]
             + Hc[:, 2] * g[:, 0] ** 2) / gn ** 3
    domain.curvature = kappa
    domain.meta["max_curvature"] = float(kappa.max())
    return kappa


def choose_epsilon(lams, K: float, k: float, n_theta: int = 720,
                   max_doublings: int = 8) -> float:
    """Smallest eps in a doubling sequence from 2*n*C4 with max curvature <= 1.

    The theoretical chain kappa <= 2 n C4 / eps guarantees termination at
    the first candidate already; doubling is the numerical safety net.
    """
    base = 2.0 * PLANE_DIM * kernel_c4()
    data = AsymptoticData(mode="cone", lams=lams, K=K)
    last_err: Exception | None = None
    for j in range(max_doublings):
        eps = base * 2.0 ** j
        try:
            mf = data.mollified(eps)
            dom = sublevel_domain(mf, k, n_theta=n_theta)
            kap = boundary_curvature(mf, dom)
        except SlopeConditionError as exc:
            last_err = exc
            continue
        if kap.max() <= 1.0:
            return eps
    raise SlopeConditionError(
        f"no eps in the doubling sequence certified curvature <= 1 at k={k}"
        + (f" (last failure: {last_err})" if last_err else ""))
