"""Evolution in similarity coordinates tau = -ln(T - t), rho = r/(T - t).

In these variables the wave map equation becomes

    u_tautau + u_tau + 2 rho u_rhotau
        - (1 - rho^2)(u_rhorho + (2/rho) u_rho) + sin(2u)/rho^2 = 0,

so approach to a self-similar solution of the physical problem appears as
relaxation to a stationary state.  The grid extends past the lightcone
rho = 1: the characteristic speeds are rho +- 1, both positive there, so no
boundary condition is needed at rho = 1 and the outer cut cannot contaminate
the interior.  Discretization is method of lines with centered stencils for
rho < 1 - 2h, one-sided (backward) stencils from there outward, the
advective mixed term upwinded everywhere, and a fully one-sided outflow
update at rho_max.

The map from physical data keeps a guess T of the blowup time.  A wrong
guess excites the pure-gauge mode: by the identity

    f(r/(T - t)) = f(rho' / (1 + eps e^{tau'})),   eps = T - T',

evolving with T' = T - eps drifts along f(rho/(1 + eps e^tau)).  gauge_tune
bisects a data parameter until the fitted gauge amplitude vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cauchy import _sine_split
from .errors import BracketError, EvolutionError
from .grid import FieldState, ProfileTable, RadialGrid, _fd_derivative, lagrange_resample

__all__ = [
    "SimilarityState",
    "SimilarityConfig",
    "to_similarity",
    "evolve_similarity",
    "fit_gauge_amplitude",
    "gauge_tune",
    "profile_distance",
]


@dataclass(frozen=True)
class SimilarityConfig:
    """Blowup-time guess, domain edge, Courant factor and resolution."""

    T_guess: float
    rho_max: float = 3.0
    cfl: float = 0.25
    n_cells: int = 2048
    dissipation: float = 0.0

    def __post_init__(self):
        if self.T_guess <= 0:
            raise ValueError(f"T_guess must be positive, got {self.T_guess}")
        if self.rho_max <= 1.5:
            raise ValueError(f"rho_max must exceed 1.5, got {self.rho_max}")
        if not (0 < self.cfl <= 0.5):
            raise ValueError(f"cfl must be in (0, 0.5], got {self.cfl}")
        if self.n_cells < 64:
            raise ValueError(f"n_cells must be >= 64, got {self.n_cells}")
        if not (0.0 <= self.dissipation <= 0.5):
            raise ValueError(f"dissipation must be in [0, 0.5], got {self.dissipation}")


@dataclass(frozen=True)
class SimilarityState:
    """Field samples (u, u_tau) on a rho-grid at similarity time tau."""

    tau: float
    grid: RadialGrid
    u: np.ndarray
    utau: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, float).copy()
        ut = np.asarray(self.utau, float).copy()
        if u.shape != (self.grid.n_nodes,) or ut.shape != (self.grid.n_nodes,):
            raise ValueError(f"u/utau must have {self.grid.n_nodes} samples")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
            raise ValueError("non-finite samples in similarity state")
        if u[0] != 0.0:
            raise ValueError("origin value must vanish (odd parity)")
        u.flags.writeable = False
        ut.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "utau", ut)


def to_similarity(state: FieldState, cfg: SimilarityConfig) -> SimilarityState:
    """Map physical Cauchy data into similarity coordinates.

    With scale = T_guess - t: u(tau, rho) = u(t, scale * rho) and, by the
    chain rule through tau = -ln(T - t), rho = r/(T - t),

        u_tau = scale * u_t - rho * u_rho.
    """
    scale = cfg.T_guess - state.t
    if scale <= 0:
        raise ValueError(f"state time {state.t} is not before T_guess {cfg.T_guess}")
    if cfg.rho_max * scale > state.grid.r_max * (1 + 1e-12):
        raise ValueError(
            f"rho_max {cfg.rho_max} at scale {scale:.6g} exceeds the physical grid"
        )
    sgrid = RadialGrid(cfg.rho_max, cfg.n_cells)
    rho = sgrid.nodes()
    r_query = np.minimum(rho * scale, state.grid.r_max)
    r_nodes = state.grid.nodes()
    u = lagrange_resample(r_nodes, state.u, r_query)
    ut = lagrange_resample(r_nodes, state.ut, r_query)
    ur = lagrange_resample(r_nodes, _fd_derivative_any(state), r_query)
    utau = scale * ut - rho * (scale * ur)
    u[0] = 0.0
    utau[0] = 0.0
    return SimilarityState(-math.log(scale), sgrid, u, utau)


def _fd_derivative_any(state: FieldState) -> np.ndarray:
    from .grid import _fd_derivative_nonuniform

    if isinstance(state.grid, RadialGrid):
        return _fd_derivative(state.u, state.grid.spacing)
    return _fd_derivative_nonuniform(state.u, state.grid.nodes())


class _SimWorkspace:
    """Precomputed stencil masks for the rho-grid of one configuration."""

    def __init__(self, grid: RadialGrid, sigma: float = 0.0):
        self.grid = grid
        self.h = grid.spacing
        self.rho = grid.nodes()
        n = grid.n_nodes
        h, rho = self.h, self.rho
        # centered region: interior nodes 1..ks-1 with rho < 1 - 2h; the
        # one-sided (backward) region runs from ks through n-2 and needs
        # at least three nodes below it
        ks = int(np.searchsorted(rho, 1 - 2 * h))
        if ks < 3:
            raise ValueError("grid too coarse: the upwind region reaches the origin")
        self.ks = min(ks, n - 1)
        self.coef = 1 - rho**2
        self.sigma = sigma
        self.ko_rate = sigma / (16.0 * h)

    def _ko(self, f):
        # fourth-difference Kreiss-Oliger dissipation; node 1 closes the
        # stencil with the odd-parity ghosts f[-1] = -f[1], f[-2] = -f[2]
        q = np.zeros_like(f)
        d4 = f[:-4] - 4 * f[1:-3] + 6 * f[2:-2] - 4 * f[3:-1] + f[4:]
        q[2:-2] = -self.ko_rate * d4
        q[1] = -self.ko_rate * (5 * f[1] - 4 * f[2] + f[3])
        return q

    def rhs(self, u, p):
        h, rho = self.h, self.rho
        n = u.size
        ks = self.ks
        du = p.copy()
        dp = np.empty_like(p)

        ur = np.empty_like(u)
        urr = np.empty_like(u)
        ur[1:ks] = (u[2:ks + 1] - u[:ks - 1]) / (2 * h)
        urr[1:ks] = (u[2:ks + 1] - 2 * u[1:ks] + u[:ks - 1]) / h**2
        ur[ks:n - 1] = (3 * u[ks:n - 1] - 4 * u[ks - 1:n - 2] + u[ks - 2:n - 3]) / (2 * h)
        urr[ks:n - 1] = (2 * u[ks:n - 1] - 5 * u[ks - 1:n - 2]
                         + 4 * u[ks - 2:n - 3] - u[ks - 3:n - 4]) / h**2

        # mixed term 2 rho u_rhotau: upwind (backward) everywhere; the odd
        # parity ghost p[-1] = -p[1] closes the stencil at the first node
        pr = np.empty_like(p)
        pr[2:n - 1] = (3 * p[2:n - 1] - 4 * p[1:n - 2] + p[:n - 3]) / (2 * h)
        pr[1] = p[1] / h

        i = slice(1, n - 1)
        ri = rho[i]
        lap = urr[i] + 2 * ur[i] / ri - 2 * u[i] / ri**2
        dp[i] = (-p[i] - 2 * ri * pr[i] + self.coef[i] * lap
                 - 2 * u[i] - _sine_split(u[i], ri))

        du[0] = 0.0
        dp[0] = 0.0

        # outflow at rho_max: same PDE with fully one-sided stencils
        uN = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
        uNN = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h**2
        pN = (3 * p[-1] - 4 * p[-2] + p[-3]) / (2 * h)
        rN = rho[-1]
        lapN = uNN + 2 * uN / rN - 2 * u[-1] / rN**2
        dp[-1] = (-p[-1] - 2 * rN * pN + self.coef[-1] * lapN
                  - 2 * u[-1] - float(_sine_split(u[-1:], rho[-1:])[0]))

        if self.sigma > 0.0:
            du += self._ko(u)
            dp += self._ko(p)
        return du, dp


def evolve_similarity(state: SimilarityState, tau_end: float,
                      cfg: SimilarityConfig) -> SimilarityState:
    """March to tau_end with classical RK4 at dtau = cfl*h/(rho_max + 1)."""
    if tau_end < state.tau:
        raise ValueError(f"tau_end {tau_end} precedes state tau {state.tau}")
    ws = _SimWorkspace(state.grid, cfg.dissipation)
    dtau = cfg.cfl * ws.h / (state.grid.r_max + 1.0)
    u = state.u.copy()
    p = state.utau.copy()
    tau = state.tau
    n_steps = max(0, int(math.ceil((tau_end - tau) / dtau - 1e-12)))
    for k in range(n_steps):
        dt = min(dtau, tau_end - tau)
        k1u, k1p = ws.rhs(u, p)
        k2u, k2p = ws.rhs(u + 0.5 * dt * k1u, p + 0.5 * dt * k1p)
        k3u, k3p = ws.rhs(u + 0.5 * dt * k2u, p + 0.5 * dt * k2p)
        k4u, k4p = ws.rhs(u + dt * k3u, p + dt * k3p)
        u = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        p = p + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        u[0] = 0.0
        tau += dt
        if k % 16 == 0 and not np.all(np.isfinite(u)):
            raise EvolutionError(f"non-finite similarity field at tau = {tau:.6g}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
        raise EvolutionError(f"non-finite similarity field at tau = {tau:.6g}")
    return SimilarityState(tau_end, state.grid, u, p)


def profile_distance(state: SimilarityState, target: ProfileTable,
                     window: tuple[float, float]) -> float:
    """Sup-norm distance |u - target| over a rho window at the state nodes."""
    lo, hi = float(window[0]), float(window[1])
    if not (lo < hi):
        raise ValueError(f"empty window {window}")
    rho = state.grid.nodes()
    if lo < rho[0] - 1e-12 or hi > rho[-1] + 1e-12:
        raise ValueError(f"window {window} outside the state grid")
    if lo < target.x_min - 1e-12 or hi > target.x_max + 1e-12:
        raise ValueError(f"window {window} outside the target table")
    mask = (rho >= lo) & (rho <= hi)
    return float(np.max(np.abs(state.u[mask] - target(rho[mask]))))


def fit_gauge_amplitude(snapshots, target: ProfileTable, rho0: float = 0.5) -> float:
    """Least-squares gauge amplitude eps from a drift time series.

    The gauge orbit f(rho/(1 + eps e^tau)) drifts at the probe point as
    u(tau, rho0) - f(rho0) = -eps e^tau rho0 f'(rho0) + O(eps^2), so eps
    follows from projecting the measured drift onto e^tau.
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots to fit a drift")
    taus = np.array([s.tau for s in snapshots])
    drift = np.array([
        float(lagrange_resample(s.grid.nodes(), s.u, np.array([rho0]))[0])
        - target(rho0)
        for s in snapshots
    ])
    # slope of the target at the probe from its own table
    eps_x = 1e-4
    fprime = (target(rho0 + eps_x) - target(rho0 - eps_x)) / (2 * eps_x)
    e = np.exp(taus - taus.max())  # scaled for conditioning
    coef = float(e @ drift) / float(e @ e)
    return -coef * math.exp(-taus.max()) / (rho0 * fprime)


def gauge_tune(make_run, bracket: tuple[float, float],
               window: tuple[float, float], target: ProfileTable,
               rho0: float = 0.5, max_iter: int = 60,
               p_tol: float = 1e-12) -> float:
    """Bisect a data parameter until the fitted gauge amplitude vanishes.

    make_run(p) must return a sequence of SimilarityState snapshots covering
    the tau window.  Convergence: |eps| <= 1e-6 * exp(-window end), or the
    bracket narrowing below p_tol (the amplitude fit bottoms out at the
    truncation level of the runs).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    tol = 1e-6 * math.exp(-float(window[1]))

    def amp(p):
        return fit_gauge_amplitude(make_run(p), target, rho0)

    a_lo, a_hi = amp(lo), amp(hi)
    if abs(a_lo) <= tol:
        return lo
    if abs(a_hi) <= tol:
        return hi
    if a_lo * a_hi > 0:
        raise BracketError(
            f"gauge amplitude does not change sign over {bracket}: "
            f"{a_lo:.3g} and {a_hi:.3g}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        a_mid = amp(mid)
        if abs(a_mid) <= tol or hi - lo <= max(p_tol, 1e-15 * max(abs(lo), abs(hi), 1.0)):
            return mid
        if a_mid * a_lo > 0:
            lo, a_lo = mid, a_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
