"""The static harmonic map u_S, its Neumann truncations and bound states.

In the log radius x = ln r the static equation u'' + (2/r) u' -
sin(2u)/r^2 = 0 reduces to a damped pendulum,

    u_xx + u_x - sin(2u) = 0,

whose heteroclinic orbit from u = 0 (as e^x) to the equator u = pi/2 is the
static solution.  The linearization at u = 0 has characteristic roots
{1, -2} and at pi/2 has -1/2 +- i sqrt(7)/2, so the approach to the equator
is an exponentially damped log-periodic spiral

    u_S ~ pi/2 + C e^{-x/2} sin( (sqrt(7)/2) x + delta ).

Perturbations u_S + e^{ikt} v(r) obey the radial Schroedinger problem

    -v'' - (2/r) v' + (2 cos(2 u_S)/r^2) v = k^2 v,

solved here through w = r v, which turns it into a one-dimensional problem
-w'' + W w = k^2 w.  The scaling zero mode r u_S'(r) = u_x has infinitely
many nodes, so there are infinitely many negative eigenvalues; the ground
one is found by two-sided shooting with an exponential outer tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import ShootingError
from .grid import ProfileTable
from .selfsim import ShootConfig

__all__ = [
    "StaticProfile",
    "NeumannFamily",
    "BoundStateReport",
    "integrate_pendulum",
    "neumann_points",
    "neumann_family",
    "zero_mode_residual",
    "bound_states",
    "rescale_static",
    "LOG_PERIOD",
]

LOG_PERIOD = 2 * math.pi / math.sqrt(7.0)  # extrema spacing of the tail in x
_OMEGA = math.sqrt(7.0) / 2
_X_LAUNCH = math.log(1e-4)


@dataclass(frozen=True)
class StaticProfile:
    """The static solution sampled over a log-radius window.

    ``amplitude_fit`` holds (C, delta) of the damped-spiral tail; both are
    reported as fitted, with no external normalization to compare against.
    """

    x_samples: np.ndarray
    u: np.ndarray
    du: np.ndarray
    amplitude_fit: tuple[float, float]

    def __post_init__(self):
        table = ProfileTable(self.x_samples, self.u, self.du)
        object.__setattr__(self, "x_samples", table.x)
        object.__setattr__(self, "u", table.f)
        object.__setattr__(self, "du", table.df)
        object.__setattr__(self, "_table", table)

    @property
    def table(self) -> ProfileTable:
        return self._table

    def value(self, x):
        return self._table(x)

    def slope(self, x):
        """du/dx, which equals r du/dr."""
        return self._table.deriv(x)

    def at_r(self, r):
        """u_S(r), falling back on the origin series below the table."""
        r_arr = np.atleast_1d(np.asarray(r, float))
        out = np.empty_like(r_arr)
        lo = math.exp(self.x_samples[0])
        small = r_arr < lo
        out[small] = _origin_series_r(r_arr[small])[0]
        big = ~small
        with np.errstate(divide="ignore"):
            out[big] = self._table(np.log(r_arr[big]))
        if np.isscalar(r) or np.asarray(r).ndim == 0:
            return float(out[0])
        return out


@dataclass(frozen=True)
class NeumannFamily:
    """Truncated static maps u_k(r) = u_S(r_k r / R) on the ball of radius R."""

    R: float
    points: tuple
    members: tuple

    def __post_init__(self):
        if not np.all(np.diff(self.points) > 0):
            raise ValueError("Neumann points must be strictly increasing")


@dataclass(frozen=True)
class BoundStateReport:
    """Negative eigenvalues of the static perturbation problem.

    ``eigenvalues`` is sorted most negative first; ``node_counts`` holds the
    interior node count of each eigenfunction (0, 1, ... by ordering).
    """

    eigenvalues: tuple
    node_counts: tuple
    domain_radius: float


def _origin_series_r(r):
    """u = r - (2/15) r^3, the regular branch in physical radius."""
    return r - (2 / 15) * r**3, 1 - (2 / 5) * r**2


def _pendulum_rhs(x, y):
    u, du = y
    return (du, math.sin(2 * u) - du)


def integrate_pendulum(x_range: tuple[float, float],
                       cfg: ShootConfig | None = None,
                       n_samples: int = 4097,
                       launch_shift: float = 0.0) -> StaticProfile:
    """Integrate the damped pendulum along the heteroclinic orbit.

    ``launch_shift`` offsets the launch data in x, which by dilation
    covariance reproduces the rescaled solution u_S(e^shift r).
    """
    cfg = cfg or ShootConfig()
    x_lo, x_hi = float(x_range[0]), float(x_range[1])
    if not x_lo < x_hi:
        raise ValueError(f"need x_lo < x_hi, got {x_range}")
    x0 = min(_X_LAUNCH, x_lo)
    r0 = math.exp(x0 - launch_shift)
    u0, du_dr0 = _origin_series_r(r0)
    y0 = (u0, r0 * du_dr0)  # du/dx = r du/dr
    sol = solve_ivp(
        _pendulum_rhs, (x0, x_hi), y0, method="DOP853",
        rtol=cfg.ode_tol, atol=cfg.ode_tol, dense_output=True,
    )
    if not sol.success:
        raise ShootingError(f"pendulum integration failed: {sol.message}")

    xs = np.linspace(x_lo, x_hi, n_samples)
    inside = xs >= x0
    u = np.empty_like(xs)
    du = np.empty_like(xs)
    y = sol.sol(xs[inside])
    u[inside], du[inside] = y[0], y[1]
    if np.any(~inside):
        r = np.exp(xs[~inside] - launch_shift)
        us, dus = _origin_series_r(r)
        u[~inside], du[~inside] = us, r * dus
    fit = _fit_tail(xs, u)
    return StaticProfile(xs, u, du, fit)


def _fit_tail(x, u):
    """Least-squares (C, delta) of the damped spiral over the outer window."""
    x_hi = x[-1]
    window = x >= max(x_hi - 3 * LOG_PERIOD, 0.5 * (x[0] + x_hi))
    xs, us = x[window], u[window]
    target = np.exp(xs / 2) * (us - np.pi / 2)
    A = np.stack([np.sin(_OMEGA * xs), np.cos(_OMEGA * xs)], axis=1)
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    C = float(np.hypot(*coef))
    delta = float(math.atan2(coef[1], coef[0]))
    return (C, delta)


def neumann_points(p: StaticProfile, k_max: int) -> list:
    """First k_max radii with u_S'(r_k) = 0, in increasing order."""
    if k_max == 0:
        return []
    x, du = p.x_samples, p.du
    idx = np.flatnonzero(np.sign(du[:-1]) != np.sign(du[1:]))
    if idx.size < k_max:
        raise ValueError(
            f"profile range holds only {idx.size} Neumann points, need {k_max}"
        )
    dtab = ProfileTable(x, du)
    roots = []
    for i in idx[:k_max]:
        roots.append(math.exp(brentq(dtab, x[i], x[i + 1], xtol=1e-13)))
    return roots


def neumann_family(p: StaticProfile, R: float, k_max: int) -> NeumannFamily:
    """Truncated finite-energy members u_k(r) = u_S(r_k r / R) on [0, R]."""
    pts = neumann_points(p, k_max)
    rs = np.linspace(0.0, R, 1025)
    members = []
    for r_k in pts:
        members.append(ProfileTable(rs, p.at_r(r_k * rs / R)))
    return NeumannFamily(R=float(R), points=tuple(pts), members=tuple(members))


def zero_mode_residual(p: StaticProfile, stride: int = 1) -> float:
    """FD residual of the scaling zero mode v = r u_S' in the k^2 = 0 problem.

    In log radius the eigenvalue equation becomes v_xx + v_x - 2 cos(2u) v
    = k^2 r^2 v, and v = u_x satisfies it at k^2 = 0 (it is the derivative
    of the pendulum equation).  Centered differences give an O(h^2) check.
    """
    x, u, v = p.x_samples[::stride], p.u[::stride], p.du[::stride]
    h = x[1] - x[0]
    vp = (v[2:] - v[:-2]) / (2 * h)
    vpp = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    res = vpp + vp - 2 * np.cos(2 * u[1:-1]) * v[1:-1]
    return float(np.max(np.abs(res)))


def _w_rhs_factory(p: StaticProfile):
    """RHS of -w'' + (2 cos(2 u_S)/r^2) w = k^2 w for w = r v."""
    spline = CubicSpline(p.x_samples, np.cos(2 * p.u))
    r_lo = math.exp(p.x_samples[0])

    def cos2u(r):
        if r < r_lo:
            u = _origin_series_r(r)[0]
            return math.cos(2 * u)
        return float(spline(math.log(r)))

    def rhs(r, y, k2):
        w, dw = y
        return (dw, (2 * cos2u(r) / r**2 - k2) * w)

    return rhs


def _bound_mismatch(k2, rhs, R, cfg, r0=1e-3, r_match=1.0, dense=False):
    """Normalized Wronskian of the two shots at the matching radius."""
    c = -(k2 + 4) / 10
    yl = (r0**2 + c * r0**4, 2 * r0 + 4 * c * r0**3)
    left = solve_ivp(rhs, (r0, r_match), yl, args=(k2,), method="DOP853",
                     rtol=cfg.ode_tol, atol=1e-280, dense_output=dense)
    kappa = math.sqrt(-k2)
    phi = 1 - 1 / (kappa * R) + 1 / (kappa * R) ** 2
    dphi = 1 / (kappa * R**2) - 2 / (kappa * R**3 * kappa)
    w_out = math.exp(-kappa * R)
    yr = (w_out * phi, w_out * (-kappa * phi + dphi))
    right = solve_ivp(rhs, (R, r_match), yr, args=(k2,), method="DOP853",
                      rtol=cfg.ode_tol, atol=1e-280, dense_output=dense)
    if not (left.success and right.success):
        raise ShootingError("bound-state integration failed")
    wl, dwl = left.y[:, -1]
    wr, dwr = right.y[:, -1]
    value = (dwl * wr - dwr * wl) / (abs(dwl * wr) + abs(dwr * wl) + 1e-300)
    return (value, left, right) if dense else value


def bound_states(p: StaticProfile, domain_radius: float, count: int,
                 cfg: ShootConfig | None = None) -> BoundStateReport:
    """Lowest `count` negative eigenvalues of the perturbation problem.

    The domain is truncated at ``domain_radius`` with the decaying
    exponential tail as outer data; eigenvalues with kappa * R < 6 are
    treated as unresolved and raising, since the truncation error is then
    no longer negligible.
    """
    cfg = cfg or ShootConfig()
    R = float(domain_radius)
    if math.log(R) > p.x_samples[-1]:
        raise ValueError("static profile table does not reach domain_radius")
    rhs = _w_rhs_factory(p)
    floor = -((6.0 / R) ** 2)  # below this magnitude the tail is unconverged
    grid = -np.geomspace(1.0, -floor, int(40 * math.log10(-1.0 / floor)) + 2)
    vals = np.array([_bound_mismatch(k2, rhs, R, cfg) for k2 in grid])
    eigs = []
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        root = brentq(lambda k2: _bound_mismatch(k2, rhs, R, cfg),
                      grid[i], grid[i + 1], xtol=1e-14, rtol=1e-12)
        eigs.append(float(root))
    eigs.sort()
    if len(eigs) < count:
        raise ShootingError(
            f"only {len(eigs)} bound states resolvable at domain_radius "
            f"{R:g}; enlarge the domain for {count}"
        )
    eigs = eigs[:count]
    nodes = []
    for k2 in eigs:
        _, left, right = _bound_mismatch(k2, rhs, R, cfg, dense=True)
        rs = np.concatenate([
            np.linspace(1e-3, 1.0, 800, endpoint=False),
            np.geomspace(1.0, R, 800),
        ])
        w = np.where(rs <= 1.0, left.sol(np.clip(rs, 1e-3, 1.0))[0],
                     right.sol(np.clip(rs, 1.0, R))[0])
        # join with a consistent sign across the matching radius
        scale = right.sol(1.0)[0] / left.sol(1.0)[0]
        w[rs <= 1.0] *= scale
        sign = np.sign(w[np.abs(w) > 1e-12 * np.max(np.abs(w))])
        nodes.append(int(np.sum(sign[:-1] != sign[1:])))
    return BoundStateReport(
        eigenvalues=tuple(eigs), node_counts=tuple(nodes), domain_radius=R)


def rescale_static(p: StaticProfile, a: float) -> StaticProfile:
    """The dilated solution u_S(a r), i.e. the table shifted by ln a in x."""
    if a <= 0:
        raise ValueError(f"scale must be positive, got {a}")
    xs = p.x_samples - math.log(a)
    fit = _fit_tail(xs, p.u)
    return StaticProfile(xs, p.u.copy(), p.du.copy(), fit)
