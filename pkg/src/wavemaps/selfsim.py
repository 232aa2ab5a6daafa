"""Globally regular self-similar profiles f_n by two-sided shooting.

The profile equation in the similarity variable rho = r/(T-t) is

    f'' + (2/rho) f' - sin(2f) / (rho^2 (1 - rho^2)) = 0,

singular at both ends of [0, 1].  Regularity forces f ~ a*rho at the origin
and f = pi/2 + b*(rho-1) + ... at the light cone, where b is *defined* here
as f'(1); with that convention the n=0 member is 2*arctan(rho) with
(a, b) = (2, 1).  Interior solutions are launched from truncated series at
both ends and matched at a fitting point by a damped Newton iteration on
(a, b).  Past the light cone the equation is integrated outward and the tail
fitted against c + d/rho.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlownShotError, ShootingError
from .grid import ProfileTable

__all__ = [
    "ShootConfig",
    "SelfSimilarProfile",
    "integrate_from_origin",
    "integrate_from_lightcone",
    "find_profile",
    "extend_exterior",
    "origin_series",
    "lightcone_series",
    "TABLE_A_SEEDS",
    "TABLE_B_SEEDS",
]

# Seed values for the damped Newton iteration, n <= 4 (slopes under the
# b = f'(1) convention).  For larger n a logarithmic crossing-count scan
# produces the seeds.
TABLE_A_SEEDS = (2.0, 21.757413, 234.50147, 2522.0683, 27113.388)
TABLE_B_SEEDS = (1.0, -0.305664, 0.0932163, -0.0284312, 0.0086717)

_F_CAP = 10.0  # |f| beyond this is a blown shot


@dataclass(frozen=True)
class ShootConfig:
    """Tolerances and geometry of the shooting setup."""

    rho_start: float = 1e-4
    rho_fit: float = 0.5
    ode_tol: float = 1e-12
    root_tol: float = 1e-10
    bracket: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        if not (0 < self.rho_start <= 1e-3):
            raise ValueError(f"rho_start must be in (0, 1e-3], got {self.rho_start}")
        if not (0.3 <= self.rho_fit <= 0.7):
            raise ValueError(f"rho_fit must be in [0.3, 0.7], got {self.rho_fit}")
        for name in ("ode_tol", "root_tol"):
            v = getattr(self, name)
            if not (0 < v <= 1e-6):
                raise ValueError(f"{name} must be in (0, 1e-6], got {v}")


@dataclass(frozen=True)
class SelfSimilarProfile:
    """A globally regular solution f_n with its shooting parameters.

    ``interior`` samples [0, 1] uniformly; ``interior_dense`` keeps a graded
    table (logarithmic near the origin) so that steep small-rho structure of
    the high-n members stays resolved under interpolation.  ``exterior`` is
    populated by :func:`extend_exterior`.
    """

    n: int
    a: float
    b: float
    interior: ProfileTable
    interior_dense: ProfileTable
    exterior: ProfileTable | None = None
    c: float | None = None
    d: float | None = None
    mismatch: float = np.nan
    crossings: int = -1

    def value(self, rho):
        """f(rho) from the best available table (dense interior, exterior)."""
        return _eval_piecewise(self, rho, deriv=False)

    def slope(self, rho):
        return _eval_piecewise(self, rho, deriv=True)


def _eval_piecewise(p: SelfSimilarProfile, rho, deriv: bool):
    rho_arr = np.atleast_1d(np.asarray(rho, float))
    out = np.empty_like(rho_arr)
    inner = rho_arr <= 1.0
    tab = p.interior_dense
    out[inner] = tab.deriv(rho_arr[inner]) if deriv else tab(rho_arr[inner])
    if np.any(~inner):
        if p.exterior is None:
            raise ValueError("profile has no exterior table; call extend_exterior")
        tab = p.exterior
        out[~inner] = tab.deriv(rho_arr[~inner]) if deriv else tab(rho_arr[~inner])
    if np.isscalar(rho) or np.asarray(rho).ndim == 0:
        return float(out[0])
    return out


def _rhs(rho, y):
    f, fp = y
    return (fp, np.sin(2 * f) / (rho * rho * (1 - rho * rho)) - 2 * fp / rho)


def _blow_event(rho, y):
    return abs(y[0]) - _F_CAP


_blow_event.terminal = True


def origin_series(a: float, rho: np.ndarray | float):
    """Two-term regular series at the origin: f = a*rho + c3*rho^3."""
    c3 = a / 5 - 2 * a**3 / 15
    f = a * rho + c3 * rho**3
    fp = a + 3 * c3 * rho**2
    return f, fp


def lightcone_series(b: float, rho: np.ndarray | float):
    """Regular series at the light cone with b = f'(1)."""
    s = rho - 1.0
    f = np.pi / 2 + b * s - (b / 2) * s**2 + (b / 6) * s**3
    fp = b - b * s + (b / 2) * s**2
    return f, fp


def _origin_launch_point(a: float, cfg: ShootConfig) -> float:
    # the series radius shrinks like 1/a; keep the launch inside it
    return min(cfg.rho_start, 2 * cfg.rho_start / max(abs(a), 2.0))


def _solve(rho0, rho1, y0, cfg, events=None, dense=False):
    sol = solve_ivp(
        _rhs,
        (rho0, rho1),
        y0,
        method="DOP853",
        rtol=cfg.ode_tol,
        atol=cfg.ode_tol,
        events=events,
        dense_output=dense,
    )
    if sol.status == 1:  # terminated by the blow event
        rho_stop = sol.t[-1]
        raise BlownShotError(rho_stop, sol.y[0, -1])
    if not sol.success:
        raise ShootingError(f"ODE integration failed: {sol.message}")
    return sol


def integrate_from_origin(a: float, cfg: ShootConfig):
    """Integrate the profile equation from the origin series to rho_fit.

    Returns (f, f') at cfg.rho_fit; raises BlownShotError when the trajectory
    exceeds |f| = 10 before reaching the fitting point.
    """
    if a == 0.0:
        return 0.0, 0.0
    rho0 = _origin_launch_point(a, cfg)
    f0, fp0 = origin_series(a, rho0)
    sol = _solve(rho0, cfg.rho_fit, (f0, fp0), cfg, events=_blow_event)
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def integrate_from_lightcone(b: float, cfg: ShootConfig):
    """Integrate backward from the light-cone series to rho_fit."""
    rho1 = 1.0 - cfg.rho_start
    f1, fp1 = lightcone_series(b, rho1)
    sol = _solve(rho1, cfg.rho_fit, (f1, fp1), cfg, events=_blow_event)
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def _mismatch(a: float, b: float, cfg: ShootConfig) -> np.ndarray:
    fl, fpl = integrate_from_origin(a, cfg)
    fr, fpr = integrate_from_lightcone(b, cfg)
    return np.array([fl - fr, fpl - fpr])


def _crossing_count(a: float, cfg: ShootConfig, rho_end: float | None = None):
    """Number of crossings of pi/2 on [rho0, rho_end), via integration events."""
    rho0 = _origin_launch_point(a, cfg)
    rho_end = 1.0 - cfg.rho_start if rho_end is None else rho_end
    f0, fp0 = origin_series(a, rho0)

    def cross(rho, y):
        return y[0] - np.pi / 2

    sol = solve_ivp(
        _rhs, (rho0, rho_end), (f0, fp0), method="DOP853",
        rtol=cfg.ode_tol, atol=cfg.ode_tol,
        events=(cross, _blow_event), dense_output=False,
    )
    if sol.status == 1 and sol.t_events[1].size:
        raise BlownShotError(sol.t_events[1][0], _F_CAP)
    return sol.t_events[0].size


def _seed_from_scan(n: int, cfg: ShootConfig):
    """Seed (a, b) for general n by a logarithmic crossing-count scan in a."""
    lo, hi = None, None
    for la in np.linspace(np.log(1.0), np.log(1e7), 141):
        a = float(np.exp(la))
        try:
            k = _crossing_count(a, cfg)
        except BlownShotError:
            continue
        if k <= n:
            lo = a
        if k > n and lo is not None:
            hi = a
            break
    if lo is None or hi is None:
        raise ShootingError(f"crossing-count scan found no bracket for n={n}")
    for _ in range(80):  # crossing-count bisection
        mid = np.sqrt(lo * hi)
        try:
            k = _crossing_count(mid, cfg)
        except BlownShotError:
            k = n + 1
        if k <= n:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-6:
            break
    a_seed = np.sqrt(lo * hi)
    # slope near the light cone from the origin-side trajectory
    rho0 = _origin_launch_point(a_seed, cfg)
    f0, fp0 = origin_series(a_seed, rho0)
    try:
        sol = _solve(rho0, 1.0 - cfg.rho_start, (f0, fp0), cfg)
        b_seed = float(sol.y[1, -1])
    except BlownShotError:
        b_seed = (-1.0) ** n * 0.1
    return a_seed, b_seed


def find_profile(n: int, cfg: ShootConfig | None = None) -> SelfSimilarProfile:
    """Shoot to the fitting point and polish (a, b) with a damped Newton.

    The Newton variables are (ln a, b): the a_n span four orders of magnitude
    and the logarithm keeps the finite-difference Jacobian well scaled.
    """
    cfg = cfg or ShootConfig()
    if n < 0:
        raise ValueError("n must be >= 0")
    if cfg.bracket is not None:
        (a_lo, a_hi), (b_lo, b_hi) = cfg.bracket
        a, b = np.sqrt(a_lo * a_hi), 0.5 * (b_lo + b_hi)
    elif n < len(TABLE_A_SEEDS):
        a, b = TABLE_A_SEEDS[n], TABLE_B_SEEDS[n]
    else:
        a, b = _seed_from_scan(n, cfg)

    z = np.array([np.log(a), b])
    best = None

    def F(z):
        return _mismatch(float(np.exp(z[0])), float(z[1]), cfg)

    Fz = F(z)
    for _ in range(60):
        norm = np.max(np.abs(Fz))
        if best is None or norm < best[0]:
            best = (norm, z.copy())
        if norm < cfg.root_tol:
            break
        # finite-difference Jacobian with relative steps
        J = np.empty((2, 2))
        for j in range(2):
            dz = np.zeros(2)
            dz[j] = 1e-7 * max(1.0, abs(z[j]))
            J[:, j] = (F(z + dz) - Fz) / dz[j]
        try:
            step = np.linalg.solve(J, -Fz)
        except np.linalg.LinAlgError:
            raise ShootingError("singular Jacobian in profile shooting", best=best)
        lam = 1.0
        for _ in range(10):
            z_new = z + lam * step
            try:
                F_new = F(z_new)
            except BlownShotError:
                lam /= 2
                continue
            if np.max(np.abs(F_new)) < norm:
                break
            lam /= 2
        else:
            raise ShootingError(
                f"Newton stalled at mismatch {norm:.3e}", best=best
            )
        z, Fz = z_new, F_new
    else:
        raise ShootingError(
            f"Newton did not reach root_tol={cfg.root_tol} "
            f"(mismatch {np.max(np.abs(Fz)):.3e})",
            best=best,
        )

    a, b = float(np.exp(z[0])), float(z[1])
    mismatch = float(np.max(np.abs(Fz)))
    profile = _build_tables(n, a, b, mismatch, cfg)
    if profile.crossings != n:
        raise ShootingError(
            f"converged solution crosses pi/2 {profile.crossings} times, "
            f"expected {n}",
            best=(mismatch, z),
        )
    return profile


def _build_tables(n, a, b, mismatch, cfg) -> SelfSimilarProfile:
    rho0 = _origin_launch_point(a, cfg)
    f0, fp0 = origin_series(a, rho0)
    rho1 = 1.0 - cfg.rho_start

    def cross(rho, y):
        return y[0] - np.pi / 2

    sol = solve_ivp(
        _rhs, (rho0, rho1), (f0, fp0), method="DOP853",
        rtol=cfg.ode_tol, atol=cfg.ode_tol, events=cross, dense_output=True,
    )
    if not sol.success:
        raise ShootingError(f"interior resampling failed: {sol.message}")
    crossings = int(sol.t_events[0].size)

    def sample(rho):
        rho = np.asarray(rho, float)
        out_f = np.empty_like(rho)
        out_fp = np.empty_like(rho)
        below = rho < rho0
        above = rho > rho1
        mid = ~(below | above)
        if np.any(below):
            out_f[below], out_fp[below] = origin_series(a, rho[below])
        if np.any(mid):
            y = sol.sol(rho[mid])
            out_f[mid], out_fp[mid] = y[0], y[1]
        if np.any(above):
            out_f[above], out_fp[above] = lightcone_series(b, rho[above])
        return out_f, out_fp

    # uniform interior table (endpoints pinned to the exact boundary data)
    xs = np.linspace(0.0, 1.0, 4097)
    fu, fpu = sample(xs)
    fu[0], fpu[0] = 0.0, a
    fu[-1], fpu[-1] = np.pi / 2, b
    interior = ProfileTable(xs, fu, fpu)

    # graded table: logarithmic below 0.1, uniform above
    x_log = np.geomspace(max(rho0, 1e-9), 0.1, 1200, endpoint=False)
    x_lin = np.linspace(0.1, 1.0, 4096)
    xg = np.concatenate([[0.0], x_log, x_lin])
    fg, fpg = sample(xg)
    fg[0], fpg[0] = 0.0, a
    fg[-1], fpg[-1] = np.pi / 2, b
    dense = ProfileTable(xg, fg, fpg)

    return SelfSimilarProfile(
        n=n, a=a, b=b, interior=interior, interior_dense=dense,
        mismatch=mismatch, crossings=crossings,
    )


def extend_exterior(p: SelfSimilarProfile, rho_max: float,
                    cfg: ShootConfig | None = None) -> SelfSimilarProfile:
    """Extend the profile past the light cone and fit the c + d/rho tail.

    The fit uses least squares over the outer half of the table, with 1/rho^2
    and 1/rho^3 nuisance terms absorbing the subleading tail; the residual
    must come out below 1e-4.
    """
    cfg = cfg or ShootConfig()
    if rho_max < 3.0:
        raise ValueError(f"rho_max must be >= 3, got {rho_max}")
    rho1 = 1.0 + cfg.rho_start
    f1, fp1 = lightcone_series(p.b, rho1)
    sol = solve_ivp(
        _rhs, (rho1, rho_max), (f1, fp1), method="DOP853",
        rtol=cfg.ode_tol, atol=cfg.ode_tol, dense_output=True,
    )
    if not sol.success:
        raise ShootingError(f"exterior integration failed: {sol.message}")
    xs = np.linspace(1.0, rho_max, 4097)
    f = np.empty_like(xs)
    fp = np.empty_like(xs)
    near = xs < rho1
    f[near], fp[near] = lightcone_series(p.b, xs[near])
    y = sol.sol(xs[~near])
    f[~near], fp[~near] = y[0], y[1]
    f[0], fp[0] = np.pi / 2, p.b
    exterior = ProfileTable(xs, f, fp)

    tail = xs >= rho_max / 2
    inv = 1.0 / xs[tail]
    A = np.stack([np.ones_like(inv), inv, inv**2, inv**3], axis=1)
    coeff, *_ = np.linalg.lstsq(A, f[tail], rcond=None)
    c, d = float(coeff[0]), float(coeff[1])
    residual = float(np.max(np.abs(A @ coeff - f[tail])))
    if residual > 1e-4:
        raise ShootingError(
            f"exterior tail fit residual {residual:.3e} exceeds 1e-4"
        )
    return dataclasses.replace(p, exterior=exterior, c=c, d=d)
