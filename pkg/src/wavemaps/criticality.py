"""Threshold bisection, transient lifetimes, universality, and K-functional.

One-parameter data families interpolate between dispersal and collapse, so a
critical parameter p* separates the two outcomes.  Marginally critical data
first approach the codimension-one self-similar solution f_1 (the
intermediate attractor), linger for a similarity time

    tau* ~ -(1/lambda) ln|p - p*|,

set by the single unstable eigenvalue lambda of f_1, and then leave toward
dispersal or toward f_0-type collapse.  This module measures that picture
quantitatively and evaluates the candidate Lyapunov functional

    K[u] = 1/2 * int_0^1 (rho^2 u_rho^2 - 2 cos^2(u)/(1 - rho^2)) drho,

whose critical points on [0, 1] are exactly the profiles f_n.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .cauchy import EvolutionConfig, InitialDataSpec, evolve, make_initial_data, rescaled_profile
from .errors import BracketError, UndecidedError
from .grid import ProfileTable, RadialGrid

__all__ = [
    "Outcome",
    "FamilySpec",
    "BisectionRecord",
    "TransientFit",
    "KReport",
    "UniversalityEntry",
    "UniversalityReport",
    "classify_run",
    "bisect",
    "attractor_distance",
    "transient_analysis",
    "marginal_pair",
    "universality_check",
    "lyapunov_K",
    "monitor_K",
]


class Outcome(enum.Enum):
    DISPERSE = "disperse"
    BLOWUP = "blowup"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class FamilySpec:
    """One-parameter family: vary params[parameter] of the base data."""

    base: InitialDataSpec
    parameter: str
    p_lo: float
    p_hi: float

    def __post_init__(self):
        if not (self.p_lo < self.p_hi):
            raise ValueError(f"need p_lo < p_hi, got {self.p_lo}, {self.p_hi}")
        if self.parameter not in self.base.params:
            raise ValueError(f"parameter {self.parameter!r} not in the base data")

    def at(self, p: float) -> InitialDataSpec:
        params = dict(self.base.params)
        params[self.parameter] = p
        return InitialDataSpec(self.base.family, params)


@dataclass(frozen=True)
class BisectionRecord:
    """Full iteration log of one threshold search."""

    iterations: tuple  # of (p, Outcome, diagnostics dict)
    p_star: float
    achieved_gap: float


@dataclass(frozen=True)
class TransientFit:
    """Lifetime-scaling fit tau* = c - (1/lambda) ln|p - p*|."""

    lambda_estimate: float
    samples: tuple  # of (ln|p - p*|, tau*)
    fit_residual: float

    def __post_init__(self):
        if len(self.samples) < 5:
            raise ValueError("a transient fit needs at least 5 samples")


@dataclass(frozen=True)
class KReport:
    value: float
    divergent: bool


@dataclass(frozen=True)
class UniversalityEntry:
    spec: InitialDataSpec
    T_estimate: float
    distances: tuple  # distance to f0 at the last three snapshots
    converged: bool


@dataclass(frozen=True)
class UniversalityReport:
    entries: tuple

    @property
    def all_converged(self) -> bool:
        return all(e.converged for e in self.entries)


def classify_run(spec: InitialDataSpec, cfg: EvolutionConfig) -> Outcome:
    """Evolve the data and classify; one automatic retry on Undecided.

    The retry doubles t_end and halves the spacing.  A numerical-instability
    abort (EvolutionError) propagates: it is not an Undecided outcome.
    """
    run_cfg = replace(cfg, stop_on_dispersal=True)
    state = make_initial_data(spec, run_cfg.grid)
    _, report = evolve(state, run_cfg)
    if report.blew_up:
        return Outcome.BLOWUP
    if report.dispersed:
        return Outcome.DISPERSE
    finer = RadialGrid(run_cfg.grid.r_max, 2 * run_cfg.grid.n_cells)
    retry_cfg = replace(run_cfg, grid=finer, t_end=2 * run_cfg.t_end)
    state = make_initial_data(spec, finer)
    _, report = evolve(state, retry_cfg)
    if report.blew_up:
        return Outcome.BLOWUP
    if report.dispersed:
        return Outcome.DISPERSE
    return Outcome.UNDECIDED


def bisect(family: FamilySpec, rel_tol: float, cfg: EvolutionConfig,
           classify=classify_run) -> BisectionRecord:
    """Bisect to the dispersal/collapse threshold at relative gap rel_tol.

    `classify` is injectable for cheap synthetic families in tests; the
    default runs the full Cauchy evolution.
    """
    if rel_tol < 1e-12:
        raise ValueError(f"rel_tol below the binary64 floor 1e-12: {rel_tol}")
    lo, hi = family.p_lo, family.p_hi
    iterations = []

    out_lo = classify(family.at(lo), cfg)
    iterations.append((lo, out_lo, {}))
    out_hi = classify(family.at(hi), cfg)
    iterations.append((hi, out_hi, {}))
    if out_lo is not Outcome.DISPERSE or out_hi is not Outcome.BLOWUP:
        raise BracketError(
            f"bracket invalid: p_lo={lo} -> {out_lo.value}, p_hi={hi} -> {out_hi.value}"
        )

    while (hi - lo) > rel_tol * 0.5 * (lo + hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # binary64 exhausted
        out = classify(family.at(mid), cfg)
        iterations.append((mid, out, {"bracket": (lo, hi)}))
        if out is Outcome.BLOWUP:
            hi = mid
        elif out is Outcome.DISPERSE:
            lo = mid
        else:
            warnings.warn(
                f"undecided run at p={mid!r}; advancing the bracket "
                "conservatively toward the blowup side"
            )
            hi = mid
    p_star = 0.5 * (lo + hi)
    return BisectionRecord(tuple(iterations), p_star, (hi - lo) / p_star)


_ATTRACTOR_RHO = np.linspace(0.0, 1.0, 513)


def attractor_distance(snap, scale_guess: float, attractor: ProfileTable):
    """Gauge-tuned distance of a physical snapshot to the +-attractor orbit.

    The gauge freedom of the self-similar comparison is the scale T1 - t;
    tuning it per snapshot removes the hypersensitivity of the fixed-frame
    sup distance to the transient center time.  The reflection u -> -u is a
    symmetry of the equation, so the distance is symmetrized over the sign.
    Returns (distance, fitted scale, fitted sign).
    """
    from scipy.optimize import minimize_scalar

    from .grid import lagrange_resample

    target = np.asarray(attractor(_ATTRACTOR_RHO))
    nodes = snap.grid.nodes()
    best = (math.inf, scale_guess, -1.0)
    hi = min(3.0 * scale_guess, float(snap.grid.r_max))
    for sign in (-1.0, 1.0):
        res = minimize_scalar(
            lambda s: float(np.max(np.abs(
                sign * lagrange_resample(nodes, snap.u, _ATTRACTOR_RHO * s)
                - target))),
            bounds=(scale_guess / 3.0, hi), method="bounded",
            options={"xatol": 1e-6})
        if res.fun < best[0]:
            best = (float(res.fun), float(res.x), sign)
    return best


def _marginal_trace(family, p, T1, cfg, attractor, taus):
    """Distance trace [(t, d)] along one marginal run, snapshots at
    t = T1 - exp(-tau)."""
    times = tuple(float(T1 - math.exp(-tau)) for tau in taus)
    run_cfg = replace(cfg, snapshot_times=times)
    state = make_initial_data(family.at(p), run_cfg.grid)
    _, rep = evolve(state, run_cfg)
    trace = []
    for snap in rep.snapshots:
        guess = T1 - snap.t
        if guess <= 0:
            continue
        d, _, _ = attractor_distance(snap, guess, attractor)
        trace.append((snap.t, d))
    return trace, rep


def _transient_center(family, record, cfg, attractor, taus):
    """Gauge tuning: the center time T1 of the f_1 transient.

    The deepest supercritical run leaves the attractor last; during its
    hover every snapshot's fitted scale s satisfies t + s ~= T1, so the
    plateau median pins T1.  T1 exceeds the final collapse time: the
    departure collapses f_0-style before the transient's own center.
    """
    k_deep = max(1, int(-math.log10(max(record.achieved_gap, 1e-300))) - 1)
    p = record.p_star * (1.0 + 10.0 ** (-k_deep))
    state = make_initial_data(family.at(p), cfg.grid)
    _, rep = evolve(state, cfg)
    if not rep.blew_up:
        raise UndecidedError("deepest supercritical marginal run did not blow up")
    T_seed = rep.T_estimate + 0.015
    times = tuple(float(T_seed - math.exp(-tau)) for tau in taus)
    _, rep = evolve(state, replace(cfg, snapshot_times=times))
    plateau = []
    for snap in rep.snapshots:
        guess = T_seed - snap.t
        if guess <= 0:
            continue
        d, s, _ = attractor_distance(snap, guess, attractor)
        if d < 0.1:
            plateau.append(snap.t + s)
    if len(plateau) < 5:
        raise UndecidedError("no resolvable attractor hover in the deepest run")
    return float(np.median(plateau))


def _last_crossing(trace, T1, threshold):
    """Interpolated last time the distance is below threshold, as tau."""
    idx = [i for i, (_, d) in enumerate(trace) if d < threshold]
    if not idx or idx[-1] + 1 >= len(trace):
        return None
    i = idx[-1]
    (t0, d0), (t1, d1) = trace[i], trace[i + 1]
    t_star = t0 + (threshold - d0) / (d1 - d0) * (t1 - t0)
    if t_star >= T1:
        return None
    return -math.log(T1 - t_star)


def transient_analysis(family: FamilySpec, record: BisectionRecord,
                       n_samples: int, cfg: EvolutionConfig,
                       attractor: ProfileTable,
                       threshold: float = 0.1,
                       dtau: float = 0.05,
                       k_start: int = 4) -> TransientFit:
    """Lifetime-scaling fit tau* = c - (1/lambda) ln|p - p*|.

    Marginal runs at p = p*(1 +- 10^-k), k spanning n_samples decades, are
    evolved with the same grid and dissipation as the bisection (the
    threshold is a property of the discrete system, so mixing resolutions
    detunes every sample by the p* shift).  Snapshots are taken at uniform
    similarity time in the gauge-tuned frame, the per-snapshot gauge-tuned
    distance to the +-attractor orbit defines the transient window, and
    tau* is the interpolated last crossing below `threshold`.
    """
    tau_lo = max(0.3, -math.log(record.p_star) - 4.0)
    taus = np.arange(tau_lo, 5.8, dtau)
    T1 = _transient_center(family, record, cfg, attractor, taus)
    samples = []
    for k in range(k_start, k_start + n_samples):
        delta = record.p_star * 10.0 ** (-k)
        if delta < 10 * record.achieved_gap * record.p_star:
            break  # inside the bisection uncertainty
        for side in (1.0, -1.0):
            trace, _ = _marginal_trace(family, record.p_star + side * delta,
                                       T1, cfg, attractor, taus)
            tau_star = _last_crossing(trace, T1, threshold)
            if tau_star is not None:
                samples.append((math.log(delta), tau_star))
    if len(samples) < 5:
        raise UndecidedError(f"only {len(samples)} usable transients")
    x = np.array([s[0] for s in samples])
    y = np.array([s[1] for s in samples])
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    slope = float(coef[1])
    if slope >= 0:
        raise UndecidedError("lifetime does not grow toward criticality")
    return TransientFit(-1.0 / slope, tuple(samples), resid)


def marginal_pair(family: FamilySpec, record: BisectionRecord,
                  cfg: EvolutionConfig, attractor: ProfileTable):
    """Final-bracket pair p* -+ gap: hover depth and opposite departures.

    Returns a dict side -> (min distance to the attractor orbit, outcome).
    """
    taus = np.arange(0.3, 5.8, 0.05)
    T1 = _transient_center(family, record, cfg, attractor, taus)
    gap = record.achieved_gap * record.p_star
    out = {}
    for label, p in (("sub", record.p_star - gap), ("super", record.p_star + gap)):
        trace, rep = _marginal_trace(family, p, T1, cfg, attractor, taus)
        if rep.blew_up:
            outcome = Outcome.BLOWUP
        elif rep.dispersed:
            outcome = Outcome.DISPERSE
        else:
            outcome = Outcome.UNDECIDED
        out[label] = (min(d for _, d in trace), outcome)
    return out


def _attractor_blowup_time(report):
    """Refined T from the origin-gradient attractor relation u_r(t,0) = 2/(T-t).

    The slope of the universal profile at the origin is exactly 2, so every
    late gradient sample gives an independent T estimate t + 2/g; the median
    over the top gradient octave is far more accurate than the global linear
    fit, and the decile spread bounds the remaining uncertainty.
    """
    ts = report.gradient_history.x
    gs = np.abs(report.gradient_history.f)
    sel = gs > 0.8 * gs.max()
    estimates = ts[sel] + 2.0 / gs[sel]
    T = float(np.median(estimates))
    dT = float(np.percentile(estimates, 90) - np.percentile(estimates, 10))
    return T, dT


def universality_check(specs, cfg: EvolutionConfig) -> UniversalityReport:
    """Verify the universal f0 profile at the singularity for each run.

    Snapshots are reliable while the similarity scale T - t stays above the
    scale 2/blowup_gradient at which the stopping criterion triggers (below
    it only the detection snapshot exists) and above the T uncertainty.
    """
    entries = []
    for spec in specs:
        state = make_initial_data(spec, cfg.grid)
        _, rep = evolve(state, cfg)
        if not rep.blew_up:
            raise ValueError(f"data {spec.family} did not blow up; cannot "
                             "test the blowup profile")
        T, dT = _attractor_blowup_time(rep)
        floor = max(2.0 / cfg.blowup_gradient, 50 * dT)
        usable = [s for s in rep.snapshots
                  if s.t < T and (T - s.t) * 0.5 <= s.grid.r_max
                  and (T - s.t) >= floor]
        last = usable[-3:]
        dists = []
        for snap in last:
            prof = rescaled_profile(snap, T, (0.0, 0.5))
            dists.append(float(np.max(np.abs(prof.f - 2 * np.arctan(prof.x)))))
        ok = (len(dists) == 3 and dists[0] > dists[1] > dists[2]
              and dists[-1] < 0.02)
        entries.append(UniversalityEntry(spec, T, tuple(dists), ok))
    return UniversalityReport(tuple(entries))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)


def lyapunov_K(profile: ProfileTable, boundary_tol: float = 1e-6) -> KReport:
    """Gauss-Legendre evaluation of K[u] on [0, 1].

    The integrand's pole at rho = 1 cancels when u(1) = pi/2 (cos^2 u
    vanishes quadratically there); otherwise the integral diverges to
    -infinity and the report is flagged.
    """
    if profile.x_min > 1e-12 or profile.x_max < 1.0 - 1e-12:
        raise ValueError("profile must cover [0, 1]")
    if abs(profile(1.0) - math.pi / 2) > boundary_tol:
        return KReport(-math.inf, True)
    spline = CubicSpline(profile.x, profile.f)
    rho = 0.5 * (_GL_NODES + 1.0)
    w = 0.5 * _GL_WEIGHTS
    u = spline(rho)
    du = spline(rho, 1)
    integrand = 0.5 * (rho**2 * du**2 - 2 * np.cos(u) ** 2 / (1 - rho**2))
    return KReport(float(w @ integrand), False)


def monitor_K(states, boundary_tol: float = 0.05):
    """K along a similarity trajectory; decrease is observed, not asserted.

    Trajectory data only approximates u(1) = pi/2, so the boundary check is
    loosened; entries where even that fails come out as -inf.  Returns the
    tuple of K values and whether they decreased monotonically.
    """
    from .grid import lagrange_resample

    rho = np.linspace(0.0, 1.0, 1025)
    values = []
    for s in states:
        u = lagrange_resample(s.grid.nodes(), s.u, rho)
        values.append(lyapunov_K(ProfileTable(rho, u), boundary_tol).value)
    vals = tuple(values)
    monotone = all(b <= a for a, b in zip(vals, vals[1:]))
    return vals, monotone
