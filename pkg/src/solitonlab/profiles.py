"""One-dimensional profiles: explicit barriers, the radial soliton ODE,
and the singular two-point boundary value problem.

All objects here live on a half-line t >= 0 and describe radially symmetric
spacelike graphs.  The radial operator is

    L_rad[phi] = phi'' / (1 - phi'^2) + (n - 1) phi' / t,

and the soliton profiles solve  L_rad[psi] = 1 + c * sqrt(1 - psi'^2)
with psi(0) = 0, psi'(0) = 0 (c >= 0 is the soliton constant).

Barriers
--------
For K != 0,

    w_K(t)  = int_0^t K / sqrt(s^(2n-2) + K^2) ds     (L_rad[w_K] = 0),
    wt_K(t) = int_0^t K / sqrt(s^(2n)   + K^2) ds     (L_rad[wt_K] = -K / (t sqrt(t^(2n)+K^2))).

Both are odd in K, strictly spacelike for t > 0, and tend to +-t as
K -> +-inf.

Rapidity representation
-----------------------
Slopes approach 1 like 1 - O(e^(-2t)) for c = 0, so 1 - psi' underflows
float64 near t ~ 18.  All integrations therefore carry the rapidity
z = atanh(psi') as the state variable:

    z' = 1 + c * sech(z) - (n - 1) tanh(z) / t,      psi' = tanh(z),

which is smooth and well scaled for every t > 0, and |psi'| < 1 holds
structurally (tanh of a finite number).  Note z' equals the first term of
L_rad, so the ODE residual in rapidity form,

    z' + (n - 1) tanh(z) / t - 1 - c * sech(z),

is identical to the residual of the original equation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

__all__ = [
    "RadialProfile",
    "ShootingError",
    "ExtrapolationError",
    "barrier_w",
    "barrier_w_tilde",
    "barrier_slopes",
    "barrier_residuals",
    "solve_radial_ivp",
    "solve_bvp",
    "normalize_at_infinity",
    "mean_curvature",
    "radial_bound_slacks",
    "find_k1",
    "find_k2",
    "bvp_sandwich_slacks",
]

_T0 = 1e-6  # series start for the removable singularity at t = 0


class ShootingError(RuntimeError):
    """Shooting bracket not found or root refinement failed."""


class ExtrapolationError(RuntimeError):
    """A limit estimate did not settle within its tolerance."""


# ---------------------------------------------------------------------------
# barriers
# ---------------------------------------------------------------------------

def _check_barrier_args(K: float, n: int, t: float) -> None:
    if K == 0:
        raise ValueError("barrier constant K must be nonzero")
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"dimension n must be an integer >= 1, got {n!r}")
    if t < 0:
        raise ValueError(f"barrier argument t must be >= 0, got {t}")


def barrier_w(K: float, n: int, t: float) -> float:
    """Evaluate w_K(t) = int_0^t K / sqrt(s^(2n-2) + K^2) ds.

    Exactly odd in K by construction; |w_K(t)| <= t.  Quadrature is
    adaptive with absolute tolerance 1e-10.
    """
    _check_barrier_args(K, n, t)
    if t == 0.0:
        return 0.0
    a = abs(K)
    val, _ = quad(lambda s: a / np.sqrt(s ** (2 * n - 2) + a * a), 0.0, t,
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(np.sign(K) * val)


def barrier_w_tilde(K: float, n: int, t: float) -> float:
    """Evaluate wt_K(t) = int_0^t K / sqrt(s^(2n) + K^2) ds (odd in K)."""
    _check_barrier_args(K, n, t)
    if t == 0.0:
        return 0.0
    a = abs(K)
    val, _ = quad(lambda s: a / np.sqrt(s ** (2 * n) + a * a), 0.0, t,
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(np.sign(K) * val)


def barrier_slopes(K: float, n: int, t):
    """Closed-form slopes (w_K', wt_K') of the two barriers at t."""
    t = np.asarray(t, dtype=float)
    return (K / np.sqrt(t ** (2 * n - 2) + K * K),
            K / np.sqrt(t ** (2 * n) + K * K))


def barrier_residuals(K: float, n: int, t_samples):
    """Residuals of the barrier identities at the given positive samples.

    Returns ``(res_w, res_wt)`` where ``res_w = L_rad[w_K]`` (identically 0)
    and ``res_wt = L_rad[wt_K] + K / (t sqrt(t^(2n) + K^2))`` (identically 0).
    First and second derivatives come from the closed-form integrand, not
    from differentiating the quadrature.
    """
    t = np.asarray(t_samples, dtype=float)
    _check_barrier_args(K, n, float(t.min(initial=np.inf)))
    if np.any(t <= 0.0):
        raise ValueError("barrier residuals are singular at t = 0; samples must be positive")

    S = np.sqrt(t ** (2 * n - 2) + K * K)
    wp = K / S
    wpp = -K * (n - 1) * t ** (2 * n - 3) / S ** 3
    res_w = wpp / (1.0 - wp * wp) + (n - 1) / t * wp

    St = np.sqrt(t ** (2 * n) + K * K)
    wtp = K / St
    wtpp = -K * n * t ** (2 * n - 1) / St ** 3
    res_wt = wtpp / (1.0 - wtp * wtp) + (n - 1) / t * wtp + K / (t * St)
    return res_w, res_wt


# ---------------------------------------------------------------------------
# radial profile container
# ---------------------------------------------------------------------------

@dataclass
class RadialProfile:
    """Sampled radial profile (value, slope and rapidity per grid point).

    ``rapidity = atanh(slope)`` is the strict-spacelikeness witness: it is
    finite at every sample even where ``slope`` rounds to 1.0 in float64.
    """

    n: int
    c: float
    grid: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    rapidity: np.ndarray
    shift: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.slopes = np.asarray(self.slopes, dtype=float)
        self.rapidity = np.asarray(self.rapidity, dtype=float)

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    def ode_residual(self) -> np.ndarray:
        """A posteriori ODE residual from 4th-order differences of the stored rapidity.

        Evaluated in the rapidity form (identical to the residual of the
        original equation); at t = 0 the 1/t term is replaced by its
        L'Hopital limit, giving n*z'(0) - (1 + c).
        """
        z = self.rapidity
        t = self.grid
        h = t[1] - t[0]
        zp = _derivative4(z, h)
        res = np.empty_like(z)
        pos = t > 0
        res[pos] = zp[pos] + (self.n - 1) * np.tanh(z[pos]) / t[pos] \
            - 1.0 - self.c / np.cosh(z[pos])
        if not pos[0]:
            res[0] = self.n * zp[0] - (1.0 + self.c)
        return res

    def validate(self, quad_tol: float | None = None) -> None:
        """Check the container invariants; raises ValueError on violation."""
        if self.grid.ndim != 1 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.rapidity)):
            raise ValueError("rapidity must be finite (strict spacelikeness)")
        if np.any(np.abs(self.slopes) > 1.0):
            raise ValueError("slopes exceed the light cone")
        h = float(np.max(np.diff(self.grid)))
        tol = quad_tol if quad_tol is not None else 2.0 * h ** 3 + 1e-12
        dv = np.diff(self.values)
        trap = 0.5 * np.diff(self.grid) * (self.slopes[1:] + self.slopes[:-1])
        worst = float(np.max(np.abs(dv - trap)))
        if worst > tol:
            raise ValueError(f"values/slopes trapezoid mismatch {worst:.3e} > {tol:.3e}")

    def shifted(self, b: float) -> "RadialProfile":
        """Profile with b subtracted from the values (shift recorded)."""
        return RadialProfile(self.n, self.c, self.grid.copy(),
                             self.values - b, self.slopes.copy(),
                             self.rapidity.copy(), shift=self.shift + b,
                             meta=dict(self.meta))

    def __call__(self, t):
        """Cubic-Hermite evaluation of the profile between samples."""
        t = np.asarray(t, dtype=float)
        return _hermite_eval(self.grid, self.values, self.slopes, t)

    def slope_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.tanh(np.interp(t, self.grid, self.rapidity))

    def to_csv(self) -> str:
        """Serialize as CSV with an n/c/shift header and a residual column."""
        res = self.ode_residual()
        buf = io.StringIO()
        buf.write(f"# n={self.n} c={self.c:.12g} shift={self.shift:.12g}\n")
        buf.write("t,value,slope,ode_residual\n")
        for t, v, s, r in zip(self.grid, self.values, self.slopes, res):
            buf.write(f"{t:.12g},{v:.12g},{s:.12g},{r:.12g}\n")
        return buf.getvalue()


def _derivative4(y: np.ndarray, h: float) -> np.ndarray:
    """First derivative of uniformly sampled data, 4th order everywhere."""
    m = len(y)
    if m < 5:
        raise ValueError("need at least 5 samples for the 4th-order stencil")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    fwd = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
    d[0] = fwd @ y[:5]
    d[1] = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12 * h) @ y[:5]
    d[-2] = -np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12 * h) @ y[-5:][::-1]
    d[-1] = -fwd @ y[-5:][::-1]
    return d


def _hermite_eval(x, y, yp, t):
    t = np.clip(t, x[0], x[-1])
    i = np.clip(np.searchsorted(x, t) - 1, 0, len(x) - 2)
    h = x[i + 1] - x[i]
    s = (t - x[i]) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y[i] + h10 * h * yp[i] + h01 * y[i + 1] + h11 * h * yp[i + 1]


# ---------------------------------------------------------------------------
# radial initial value problem
# ---------------------------------------------------------------------------

def _rapidity_rhs(n: int, c: float):
    def rhs(t, y):
        z = y[1]
        th = np.tanh(z)
        return (th, 1.0 + c / np.cosh(z) - (n - 1) * th / t)
    return rhs


def solve_radial_ivp(n: int, c: float, r_max: float, h: float = 0.01,
                     rtol: float = 1e-11, atol: float = 1e-12) -> RadialProfile:
    """Integrate the radial soliton ODE on [0, r_max] and sample every h.

    The singularity at t = 0 is removable: integration starts at
    t0 = 1e-6 with the series data psi''(0) = (1 + c)/n (the (n-1)psi'/t
    term resolved by L'Hopital).  State is (psi, z) with z the rapidity,
    stepped by the adaptive 4(5) embedded pair of ``solve_ivp``; strict
    spacelikeness holds structurally since psi' = tanh(z).

    Parameters
    ----------
    n : spatial dimension (>= 1)
    c : soliton constant (>= 0)
    r_max : right endpoint of the sample grid
    h : output grid spacing
    """
    if n < 1 or int(n) != n:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    if r_max <= 0 or h <= 0 or h > r_max:
        raise ValueError("need 0 < h <= r_max")

    a = (1.0 + c) / n
    y0 = (0.5 * a * _T0 * _T0, np.arctanh(a * _T0))
    sol = solve_ivp(_rapidity_rhs(n, c), (_T0, r_max), y0, method="RK45",
                    dense_output=True, rtol=rtol, atol=atol, max_step=0.25)
    if not sol.success:
        raise RuntimeError(f"radial IVP integration failed: {sol.message}")

    grid = np.linspace(0.0, r_max, int(round(r_max / h)) + 1)
    vals = np.empty_like(grid)
    zs = np.empty_like(grid)
    vals[0] = 0.0
    zs[0] = 0.0
    y = sol.sol(grid[1:])
    vals[1:] = y[0]
    zs[1:] = y[1]
    prof = RadialProfile(n=int(n), c=float(c), grid=grid, values=vals,
                         slopes=np.tanh(zs), rapidity=zs,
                         meta={"kind": "ivp", "t0": _T0, "psi2_at_0": a})
    prof.validate()
    return prof


def mean_curvature(profile: RadialProfile) -> np.ndarray:
    """H(t) = 1/sqrt(1 - psi'^2) + c = cosh(z) + c along the profile."""
    return np.cosh(profile.rapidity) + profile.c


def radial_bound_slacks(profile: RadialProfile) -> dict:
    """Slacks of the c = 0 radial bounds (negative slack means violation).

    Checks r - n <= psi(r) - psi(0) <= r and psi'(r) >= r / sqrt(n^2 + r^2)
    at every sample, plus the induced mean curvature bound
    H >= sqrt(n^2 + r^2) / n.
    """
    if profile.c != 0.0:
        raise ValueError("radial bounds apply to the c = 0 profile")
    r = profile.grid
    n = profile.n
    dpsi = profile.values - profile.values[0]
    lo = dpsi - (r - n)
    hi = r - dpsi
    slope_ref = r / np.sqrt(n * n + r * r)
    sl = profile.slopes - slope_ref
    Hm = mean_curvature(profile) - np.sqrt(n * n + r * r) / n
    return {
        "lower": float(lo.min()),
        "upper": float(hi.min()),
        "slope": float(sl.min()),
        "mean_curvature": float(Hm.min()),
    }


# ---------------------------------------------------------------------------
# singular boundary value problem
# ---------------------------------------------------------------------------

def _shoot(n: int, c: float, eps: float, r: float, z0: float,
           t_eval=None, rtol: float = 1e-10):
    sol = solve_ivp(_rapidity_rhs(n, c), (eps, r), (0.0, z0), method="RK45",
                    dense_output=t_eval is not None, rtol=rtol, atol=1e-12,
                    max_step=max(0.05 * r, eps))
    if not sol.success:
        raise ShootingError(f"integration from eps={eps} with z0={z0} failed: {sol.message}")
    if t_eval is None:
        return float(sol.y[0, -1])
    y = sol.sol(t_eval)
    return float(sol.y[0, -1]), y[0], y[1]


def _solve_bvp_eps(n, c, eps, r, C, t_eval):
    """Solve the eps-regularized problem by bisection shooting on the slope at t = eps."""
    def g(z0):
        return _shoot(n, c, eps, r, z0) - C

    # light-cone vertices need initial rapidity ~ (n-1) ln(1/eps) + O(1)
    Z = 8.0 + (n - 1) * (np.log(r / eps) + 4.0)
    g_lo, g_hi = g(-Z), g(Z)
    if not (g_lo < 0.0 < g_hi):
        raise ShootingError(
            f"no shooting bracket for (n={n}, c={c}, eps={eps}, r={r}, C={C}): "
            f"endpoint values [{g_lo + C:.6g}, {g_hi + C:.6g}] do not straddle C")
    z0 = brentq(g, -Z, Z, xtol=1e-13, maxiter=200)
    _, vals, zs = _shoot(n, c, eps, r, z0, t_eval=t_eval)
    return vals, zs, z0


def solve_bvp(n: int, c: float, r: float, C: float, m: int = 256,
              eps_schedule=None, agree_tol: float = 1e-4) -> RadialProfile:
    """Solve L_rad[phi] = 1 + c*sqrt(1-phi'^2), phi(0) = 0, phi(r) = C, |phi'| < 1.

    Implemented exactly as the existence argument suggests: the
    eps-regularized problems (phi(eps) = 0, shooting on the slope at
    t = eps) are solved on a decreasing eps-sequence and extrapolated to
    eps -> 0 with two-point Richardson (the regularization error is O(eps)).

    Returns the extrapolated profile sampled on m+1 uniform points of [0, r].
    The last two Richardson extrapolants must agree to ``agree_tol`` in sup
    norm, else ExtrapolationError.
    """
    if n < 2 or int(n) != n:
        raise ValueError(f"n must be an integer >= 2 for the BVP, got {n!r}")
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    if abs(C) >= r:
        raise ValueError(f"need |C| < r (weak spacelikeness), got C={C}, r={r}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")

    grid = np.linspace(0.0, r, m + 1)
    if eps_schedule is None:
        # keep every eps below the first positive grid point so the
        # extrapolation covers the whole sampled profile
        eps_schedule = [grid[1] * 0.5 ** j for j in range(1, 6)]
    eps_schedule = sorted(float(e) for e in eps_schedule)[::-1]
    if len(eps_schedule) < 3:
        raise ValueError("eps_schedule needs at least 3 entries for extrapolation")
    if eps_schedule[0] >= min(r - abs(C), float(grid[1])):
        raise ValueError("largest eps must be < min(r - |C|, grid spacing)")

    vals_by_eps, zs_by_eps = [], []
    for eps in eps_schedule:
        v, z, _ = _solve_bvp_eps(n, c, eps, r, C, grid[1:])
        vals_by_eps.append(np.concatenate(([0.0], v)))
        zs_by_eps.append(np.concatenate(([z[0]], z)))

    def richardson(a, b, eps_a, eps_b):
        rho = eps_b / eps_a
        return (b - rho * a) / (1.0 - rho)

    ex_prev = richardson(vals_by_eps[-3], vals_by_eps[-2],
                         eps_schedule[-3], eps_schedule[-2])
    ex_vals = richardson(vals_by_eps[-2], vals_by_eps[-1],
                         eps_schedule[-2], eps_schedule[-1])
    drift = float(np.max(np.abs(ex_vals - ex_prev)))
    if drift > agree_tol:
        raise ExtrapolationError(
            f"eps-extrapolation drift {drift:.3e} > {agree_tol:.3e}; "
            f"schedule {eps_schedule}")
    ex_z = richardson(zs_by_eps[-2], zs_by_eps[-1],
                      eps_schedule[-2], eps_schedule[-1])
    ex_vals[0] = 0.0
    ex_vals[-1] = C
    ex_z[0] = ex_z[1]  # endpoint slope: continue the limit value toward the vertex

    prof = RadialProfile(n=int(n), c=float(c), grid=grid, values=ex_vals,
                         slopes=np.tanh(ex_z), rapidity=ex_z,
                         meta={"kind": "bvp", "C": C,
                               "eps_schedule": list(eps_schedule),
                               "extrapolation_drift": drift})
    return prof


def find_k1(n: int, r: float, C: float, tol: float = 1e-10) -> float:
    """Root K1 > 0 of w_K(r) = C for 0 < C < r (monotone bracketed search)."""
    if not (0.0 < C < r):
        raise ValueError("find_k1 needs 0 < C < r")
    lo, hi = 1e-8, 1.0
    while barrier_w(hi, n, r) < C:
        hi *= 2.0
        if hi > 1e12:
            raise ShootingError("K1 bracket exceeded 1e12")
    while barrier_w(lo, n, r) > C:
        lo *= 0.5
        if lo < 1e-300:
            raise ShootingError("K1 bracket underflow")
    return float(brentq(lambda K: barrier_w(K, n, r) - C, lo, hi, xtol=tol))


def find_k2(n: int, r: float, C: float, tol: float = 1e-10) -> float:
    """Root K2 < 0 of wt_K(r) = C for -r < C < 0 (via odd symmetry)."""
    if not (-r < C < 0.0):
        raise ValueError("find_k2 needs -r < C < 0")
    lo, hi = 1e-8, 1.0
    target = -C
    while barrier_w_tilde(hi, n, r) < target:
        hi *= 2.0
        if hi > 1e12:
            raise ShootingError("K2 bracket exceeded 1e12")
    while barrier_w_tilde(lo, n, r) > target:
        lo *= 0.5
        if lo < 1e-300:
            raise ShootingError("K2 bracket underflow")
    return -float(brentq(lambda K: barrier_w_tilde(K, n, r) - target, lo, hi, xtol=tol))


def bvp_sandwich_slacks(profile: RadialProfile) -> dict:
    """Barrier sandwich slacks for a c = 0 BVP profile (when a case applies).

    Case C > 0 with r^2 <= (n-1)C:  C t / r <= phi <= w_K1 with w_K1(r) = C.
    Case C < 0, r < 1, K2^2 >= r^(2n+2)/(1-r^2):  wt_K2 <= phi <= C t / r.
    Returns per-case minimum slacks (negative means violation) or
    ``{"case": None}`` if neither hypothesis holds.
    """
    if profile.meta.get("kind") != "bvp":
        raise ValueError("expected a BVP profile")
    if profile.c != 0.0:
        raise ValueError("sandwich cases are stated for c = 0")
    n, r = profile.n, profile.r_max
    C = float(profile.meta["C"])
    t = profile.grid
    phi = profile.values
    if C > 0 and r * r <= (n - 1) * C:
        K1 = find_k1(n, r, C)
        wk = np.array([barrier_w(K1, n, ti) for ti in t])
        return {"case": "upper", "K": K1,
                "lower_slack": float(np.min(phi - C * t / r)),
                "upper_slack": float(np.min(wk - phi))}
    if C < 0 and r < 1.0:
        K2 = find_k2(n, r, C)
        if K2 * K2 >= r ** (2 * n + 2) / (1.0 - r * r):
            wt = np.array([barrier_w_tilde(K2, n, ti) for ti in t])
            return {"case": "lower", "K": K2,
                    "lower_slack": float(np.min(phi - wt)),
                    "upper_slack": float(np.min(C * t / r - phi))}
    return {"case": None}


# ---------------------------------------------------------------------------
# normalization at infinity
# ---------------------------------------------------------------------------

def normalize_at_infinity(profile: RadialProfile, tol: float = 1e-3) -> float:
    """Constant gamma with psi(r) - r -> gamma for a c = 0 profile.

    Aitken-accelerated over g(r) = psi(r) - r at r_max/4, r_max/2 and r_max
    (g converges exponentially, so the last sample is already sharp); the
    estimates must agree to ``tol``.
    """
    if profile.c != 0.0:
        raise ValueError("normalization at infinity applies to c = 0 profiles")
    if profile.r_max < 50.0:
        raise ValueError(f"need r_max >= 50 for the tail estimate, got {profile.r_max}")
    g = profile.values - profile.grid
    idx = [np.searchsorted(profile.grid, profile.r_max / 4.0),
           np.searchsorted(profile.grid, profile.r_max / 2.0), len(g) - 1]
    g0, g1, g2 = (float(g[i]) for i in idx)
    denom = (g2 - g1) - (g1 - g0)
    gamma = g2 if abs(denom) < 1e-15 else g2 - (g2 - g1) ** 2 / denom
    if abs(g2 - gamma) > tol or abs(g2 - g1) > tol:
        raise ExtrapolationError(
            f"tail not settled: g(r/4)={g0:.6g}, g(r/2)={g1:.6g}, g(r)={g2:.6g}")
    return float(gamma)
