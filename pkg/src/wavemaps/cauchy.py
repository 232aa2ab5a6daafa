"""Radial Cauchy evolution of the wave map equation in physical coordinates.

The equivariant field u(t, r) obeys

    u_tt = u_rr + (2/r) u_r - sin(2u)/r^2,

with odd parity at the origin and an outgoing Sommerfeld condition
d_t(r u) + d_r(r u) = 0 at the outer boundary (r u solves a flat 1+1 wave
equation up to O(1/r^2)).  Spatial derivatives are second-order three-point
stencils, time stepping is classical RK4 at dt = cfl * h_min.  The stiff
sine term is split as sin(2u)/r^2 = 2u/r^2 + (sin(2u) - 2u)/r^2 and the
second piece evaluated through the series of (sin w - w)/w^3 where w = 2u
is small, so the near-origin cancellation costs no precision.

Singularities form at r = 0, so mesh refinement is a nested hierarchy of
halved spacings toward the origin (CompositeGrid): when the finest level
under-resolves the gradient, one more level is added and the fields are
transferred by cubic interpolation.  Blowup is declared once u_r(t, 0)
exceeds a threshold while 1/u_r is convincingly linear in t; dispersal once
the interior energy has collapsed and keeps decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvolutionError
from .grid import (
    CompositeGrid,
    FieldState,
    ProfileTable,
    RadialGrid,
    deriv_weights,
    lagrange_resample,
    simpson_nonuniform_weights,
)

__all__ = [
    "EvolutionConfig",
    "InitialDataSpec",
    "BlowupReport",
    "make_initial_data",
    "evolve",
    "refine",
    "estimate_blowup_time",
    "rescaled_profile",
    "turok_spergel_state",
]

_FAMILIES = ("gaussian", "kink", "profile_perturbation")


@dataclass(frozen=True)
class EvolutionConfig:
    """Grid, Courant factor and the detection/refinement thresholds."""

    grid: RadialGrid
    t_end: float
    cfl: float = 0.25
    refine_threshold: float = 0.1
    max_refine_levels: int = 24
    blowup_gradient: float = 1e4
    dispersal_energy_fraction: float = 1e-6
    dispersal_streak: int = 100
    stop_on_dispersal: bool = False
    snapshot_times: tuple = ()
    dissipation: float = 0.0

    def __post_init__(self):
        if not (0 < self.cfl <= 0.5):
            raise ValueError(f"cfl must be in (0, 0.5], got {self.cfl}")
        if not (0.0 <= self.dissipation <= 0.5):
            raise ValueError(f"dissipation must be in [0, 0.5], got {self.dissipation}")
        if not (self.refine_threshold > 0):
            raise ValueError("refine_threshold must be positive")
        if self.blowup_gradient < 1e3:
            raise ValueError("blowup_gradient must be >= 1e3")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")


@dataclass(frozen=True)
class InitialDataSpec:
    """One of the interpolating data families.

    gaussian: params A, r0, s -- phi = A r^3 exp(-((r-r0)/s)^4), psi = phi'.
    kink: params s -- phi = pi tanh(r/s), psi = 0 (degree one).
    profile_perturbation: params profile, T0, eps, bump_r0, bump_s
        [, window] -- a self-similar profile evaluated at r/T0 with its
        exact similarity time derivative, windowed to finite energy, plus
        an additive bump of amplitude eps.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; pick from {_FAMILIES}")


@dataclass(frozen=True)
class BlowupReport:
    """Outcome record of a single evolution."""

    blew_up: bool
    T_estimate: float
    gradient_history: ProfileTable
    snapshots: tuple
    dispersed: bool = False
    final_time: float = math.nan
    level_cap_reached: bool = False


def _gaussian_phi(r, A, r0, s):
    q = (r - r0) / s
    return A * r**3 * np.exp(-(q**4))


def _gaussian_psi(r, A, r0, s):
    q = (r - r0) / s
    return A * np.exp(-(q**4)) * (3 * r**2 - 4 * r**3 * q**3 / s)


def make_initial_data(spec: InitialDataSpec, grid) -> FieldState:
    """Sample (phi, psi) for the requested family on the grid."""
    r = grid.nodes()
    p = spec.params
    if spec.family == "gaussian":
        A, r0, s = p["A"], p["r0"], p["s"]
        if s <= 0 or r0 < 0:
            raise ValueError(f"gaussian needs s > 0 and r0 >= 0, got s={s}, r0={r0}")
        u = _gaussian_phi(r, A, r0, s)
        ut = _gaussian_psi(r, A, r0, s)
    elif spec.family == "kink":
        s = p["s"]
        if s <= 0:
            raise ValueError(f"kink needs s > 0, got {s}")
        u = np.pi * np.tanh(r / s)
        ut = np.zeros_like(r)
    else:
        profile, T0, eps = p["profile"], p["T0"], p["eps"]
        bump_r0 = p.get("bump_r0", 0.5 * T0)
        bump_s = p.get("bump_s", 0.25 * T0)
        window = p.get("window", 0.5 * T0)
        if T0 <= 0 or bump_s <= 0 or window <= 0:
            raise ValueError("profile_perturbation needs positive T0, bump_s, window")
        rho_max = profile.exterior.x_max if profile.exterior is not None else 1.0
        if r[-1] / T0 > rho_max:
            raise ValueError(
                "profile table does not reach r_max / T0; extend the exterior"
            )
        taper = np.ones_like(r)
        outside = r > T0
        taper[outside] = np.exp(-(((r[outside] - T0) / window) ** 4))
        u = profile.value(r / T0) * taper
        ut = (r / T0**2) * profile.slope(r / T0) * taper
        u = u + _gaussian_phi(r, eps, bump_r0, bump_s)
        ut = ut + _gaussian_psi(r, eps, bump_r0, bump_s)
    u[0] = 0.0
    return FieldState(grid, 0.0, u, ut)


def turok_spergel_state(grid, T: float, t: float = 0.0) -> FieldState:
    """Exact ground-state self-similar data u = f0(r/(T-t)) at time t."""
    r = grid.nodes()
    rho = r / (T - t)
    u = 2 * np.arctan(rho)
    ut = (r / (T - t) ** 2) * 2 / (1 + rho**2)
    return FieldState(grid, t, u, ut)


def _g_series(w):
    """(sin w - w)/w^3 by series, accurate for |w| < 0.35."""
    w2 = w * w
    return -1 / 6 + w2 / 120 - w2 * w2 / 5040 + w2 * w2 * w2 / 362880


def _sine_split(u, r):
    """sin(2u)/r^2 - 2u/r^2 without near-origin cancellation."""
    w = 2 * u
    small = np.abs(w) < 0.35
    out = np.empty_like(u)
    ws = w[small]
    out[small] = ws**3 * _g_series(ws) / r[small] ** 2
    wb = w[~small]
    out[~small] = (np.sin(wb) - wb) / r[~small] ** 2
    return out


class _Workspace:
    """Mutable evolution state on the current (possibly composite) grid."""

    def __init__(self, base: RadialGrid, levels: int, u, ut, sigma: float = 0.0):
        self.base = base
        self.levels = levels
        self.sigma = sigma
        if levels == 0:
            self.grid = base
        else:
            self.grid = CompositeGrid(base.r_max, base.n_cells, levels)
        self.r = self.grid.nodes()
        self.u = np.asarray(u, float).copy()
        self.ut = np.asarray(ut, float).copy()
        self.h_min = float(self.r[1] - self.r[0])
        (self.am, self.a0, self.ap), (self.bm, self.b0, self.bp) = deriv_weights(self.r)
        self.ri = self.r[1:-1]
        cut = int(np.argmin(np.abs(self.r - min(5.0, base.r_max))))
        cut = min(cut, self.r.size - 2)
        self.energy_weights = simpson_nonuniform_weights(self.r[: cut + 1])
        self.energy_cut = cut
        # Kreiss-Oliger rate per node, scaled by the local spacing
        if sigma > 0.0:
            self.ko_rate = sigma / (16.0 * np.diff(self.r[:-2]))

    def _ko(self, f):
        """Fourth-difference dissipation; odd parity supplies the ghost."""
        q = np.zeros_like(f)
        d4 = f[:-4] - 4 * f[1:-3] + 6 * f[2:-2] - 4 * f[3:-1] + f[4:]
        q[2:-2] = -self.ko_rate[1:] * d4
        q[1] = -self.ko_rate[0] * (5 * f[1] - 4 * f[2] + f[3])
        return q

    def rhs(self, u, ut):
        du = ut.copy()
        dut = np.empty_like(ut)
        ui = u[1:-1]
        ur = self.am * u[:-2] + self.a0 * ui + self.ap * u[2:]
        urr = self.bm * u[:-2] + self.b0 * ui + self.bp * u[2:]
        dut[1:-1] = urr + 2 * ur / self.ri - 2 * ui / self.ri**2 - _sine_split(ui, self.ri)
        # odd parity pins the origin
        du[0] = 0.0
        dut[0] = 0.0
        # Sommerfeld outflow: advect u and ut outward through the boundary
        h = self.r[-1] - self.r[-2]
        R = self.r[-1]
        ur_b = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
        utr_b = (3 * ut[-1] - 4 * ut[-2] + ut[-3]) / (2 * h)
        du[-1] = -(u[-1] / R + ur_b)
        dut[-1] = -(ut[-1] / R + utr_b)
        if self.sigma > 0.0:
            du += self._ko(u)
            dut += self._ko(ut)
        return du, dut

    def step(self, dt):
        u, ut = self.u, self.ut
        k1u, k1t = self.rhs(u, ut)
        k2u, k2t = self.rhs(u + 0.5 * dt * k1u, ut + 0.5 * dt * k1t)
        k3u, k3t = self.rhs(u + 0.5 * dt * k2u, ut + 0.5 * dt * k2t)
        k4u, k4t = self.rhs(u + dt * k3u, ut + dt * k3t)
        self.u = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        self.ut = ut + dt / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
        self.u[0] = 0.0

    def origin_gradient(self) -> float:
        h = self.h_min
        return float((4 * self.u[1] - self.u[2]) / (2 * h))

    def interior_energy(self) -> float:
        cut = self.energy_cut
        r = self.r[: cut + 1]
        u = self.u[: cut + 1]
        # stencil j in (am, a0, ap) belongs to interior node j + 1
        ur = self.am[:cut] * self.u[:cut] + self.a0[:cut] * u[1:] \
            + self.ap[:cut] * self.u[2: cut + 2]
        ur0 = (4 * self.u[1] - self.u[2]) / (2 * self.h_min)
        ur = np.concatenate([[ur0], ur])
        dens = 0.5 * r**2 * (self.ut[: cut + 1] ** 2 + ur**2) + np.sin(u) ** 2
        return float(self.energy_weights @ dens)

    def needs_refinement(self, threshold: float) -> bool:
        # trigger on |u_r| * h over the inner half of the finest region
        extent = min(self.base.n_cells // 2, self.u.size - 1)
        jumps = np.abs(np.diff(self.u[: extent + 1]))
        return bool(np.max(jumps) > threshold)

    def refined(self) -> "_Workspace":
        grid = CompositeGrid(self.base.r_max, self.base.n_cells, self.levels + 1)
        r_new = grid.nodes()
        u = lagrange_resample(self.r, self.u, r_new)
        ut = lagrange_resample(self.r, self.ut, r_new)
        u[0] = 0.0
        return _Workspace(self.base, self.levels + 1, u, ut, self.sigma)

    def can_coarsen(self, threshold: float) -> bool:
        """Drop a level once the coarser spacing would still resolve u.

        The margin threshold/2 gives hysteresis against regrid flapping.
        """
        if self.levels == 0:
            return False
        m = self.base.n_cells  # the finest region spans nodes 0..m
        jumps = np.abs(np.diff(self.u[0:m + 1:2]))
        return bool(np.max(jumps) < 0.5 * threshold)

    def coarsened(self) -> "_Workspace":
        # coarse nodes are a subset of the fine ones: restriction by injection
        m = self.base.n_cells
        u = np.concatenate([self.u[0:m + 1:2], self.u[m + 1:]])
        ut = np.concatenate([self.ut[0:m + 1:2], self.ut[m + 1:]])
        return _Workspace(self.base, self.levels - 1, u, ut, self.sigma)

    def to_state(self, t: float) -> FieldState:
        return FieldState(self.grid, t, self.u, self.ut)


def _levels_of(grid) -> int:
    return grid.levels if isinstance(grid, CompositeGrid) else 0


def _base_of(grid) -> RadialGrid:
    if isinstance(grid, CompositeGrid):
        return RadialGrid(grid.r_max, grid.n_cells_base)
    return grid


def refine(state: FieldState, cfg: EvolutionConfig) -> FieldState:
    """One refinement pass: add a level if the gradient trigger fires."""
    ws = _Workspace(_base_of(state.grid), _levels_of(state.grid), state.u, state.ut)
    if not ws.needs_refinement(cfg.refine_threshold):
        return state
    if ws.levels >= cfg.max_refine_levels:
        return state
    return ws.refined().to_state(state.t)


def evolve(state: FieldState, cfg: EvolutionConfig):
    """March the field to t_end, a blowup declaration, or dispersal.

    Returns (final_state, BlowupReport).  NaN appearance without the blowup
    criterion firing aborts with EvolutionError, since that indicates a
    numerical instability rather than a physical singularity.
    """
    base = _base_of(state.grid)
    ws = _Workspace(base, _levels_of(state.grid), state.u, state.ut,
                    cfg.dissipation)
    t = float(state.t)
    ts, gs = [t], [ws.origin_gradient()]
    snapshots = []
    next_snap_gradient = 16.0
    requested = sorted(tt for tt in cfg.snapshot_times if tt > t)
    req_ptr = 0
    e0 = ws.interior_energy()
    streak = 0
    streak_start_energy = e0
    dispersed = False
    level_cap = False
    blew_up = False

    step_count = 0
    while t < cfg.t_end - 1e-14:
        dt = min(cfg.cfl * ws.h_min, cfg.t_end - t)
        ws.step(dt)
        t += dt
        step_count += 1

        g = ws.origin_gradient()
        ts.append(t)
        gs.append(g)

        if not math.isfinite(g) or (step_count % 8 == 0
                                    and not np.all(np.isfinite(ws.u))):
            raise EvolutionError(
                f"non-finite field at t = {t:.6g} without blowup criterion; "
                f"last origin gradient {gs[-2]:.3g}"
            )

        if abs(g) > next_snap_gradient:
            snapshots.append(ws.to_state(t))
            next_snap_gradient *= 2
        elif req_ptr < len(requested) and t >= requested[req_ptr]:
            snapshots.append(ws.to_state(t))
            while req_ptr < len(requested) and t >= requested[req_ptr]:
                req_ptr += 1

        if abs(g) > cfg.blowup_gradient:
            ok, T_fit = _linear_blowup_fit(np.array(ts), np.array(gs))
            if ok:
                blew_up = True
                snapshots.append(ws.to_state(t))
                break

        if not dispersed:
            e = ws.interior_energy()
            # sub-threshold streak with a net decrease over the window;
            # per-step strictness would drown in quadrature noise
            if e < cfg.dispersal_energy_fraction * max(e0, 1e-300):
                if streak == 0:
                    streak_start_energy = e
                streak += 1
            else:
                streak = 0
            if streak >= cfg.dispersal_streak and e <= streak_start_energy:
                dispersed = True
                if cfg.stop_on_dispersal:
                    break

        if step_count % 8 == 0:
            if ws.needs_refinement(cfg.refine_threshold):
                if ws.levels >= cfg.max_refine_levels:
                    level_cap = True
                else:
                    ws = ws.refined()
            elif ws.can_coarsen(cfg.refine_threshold):
                ws = ws.coarsened()

    history = ProfileTable(np.array(ts), np.array(gs)) if len(ts) >= 4 else None
    T_est = math.nan
    if blew_up:
        _, T_est = _linear_blowup_fit(np.array(ts), np.array(gs))
    report = BlowupReport(
        blew_up=blew_up,
        T_estimate=T_est,
        gradient_history=history,
        snapshots=tuple(snapshots),
        dispersed=dispersed,
        final_time=t,
        level_cap_reached=level_cap,
    )
    return ws.to_state(t), report


def _linear_blowup_fit(ts, gs, g_floor: float = 10.0, window: int = 400):
    """Fit 1/g against t over the latest strong-gradient samples.

    Returns (acceptable, T_estimate); acceptable means the relative fit
    residual stays under 5%, i.e. the growth is genuinely 1/(T - t)-like.
    """
    sel = np.abs(gs) > g_floor
    if np.sum(sel) < 10:
        return False, math.nan
    t, g = ts[sel][-window:], gs[sel][-window:]
    inv = 1.0 / np.abs(g)
    A = np.stack([np.ones_like(t), t], axis=1)
    coef, *_ = np.linalg.lstsq(A, inv, rcond=None)
    resid = A @ coef - inv
    rel = float(np.max(np.abs(resid)) / np.mean(inv))
    if coef[1] >= 0:
        return False, math.nan
    return rel < 0.05, float(-coef[0] / coef[1])


def estimate_blowup_time(report: BlowupReport) -> float:
    """Blowup time from the zero crossing of the linear 1/u_r(t,0) fit."""
    if not report.blew_up:
        raise ValueError("run did not blow up; no blowup time to estimate")
    if report.gradient_history is None:
        raise ValueError("report carries no gradient history")
    ts, gs = report.gradient_history.x, report.gradient_history.f
    sel = np.abs(gs) > 10.0
    if np.sum(sel) < 10:
        raise ValueError("fewer than 10 strong-gradient samples in the history")
    ok, T = _linear_blowup_fit(ts, gs)
    if not math.isfinite(T):
        raise ValueError("1/u_r history is not linear; cannot estimate T")
    return T


def rescaled_profile(state: FieldState, T: float,
                     rho_window: tuple[float, float],
                     n_samples: int = 513) -> ProfileTable:
    """Sample u(t, (T - t) rho) over a similarity window by interpolation."""
    if state.t >= T:
        raise ValueError(f"state time {state.t} is not before T = {T}")
    lo, hi = float(rho_window[0]), float(rho_window[1])
    if not (0 <= lo < hi):
        raise ValueError(f"bad rho window {rho_window}")
    scale = T - state.t
    if hi * scale > state.grid.r_max * (1 + 1e-12):
        raise ValueError("rho window leaves the grid at this time")
    rho = np.linspace(lo, hi, n_samples)
    r = np.minimum(rho * scale, state.grid.r_max)
    u = lagrange_resample(state.grid.nodes(), state.u, r)
    return ProfileTable(rho, u)
