"""Perturbation spectra of the self-similar profiles.

Linearizing the similarity-variable evolution about f_n and separating
w = e^{lam*tau} v(rho)/rho gives the eigenvalue problem on [0, 1]

    -(1 - rho^2) v'' + 2 lam rho v' + lam (lam - 1) v
        + 2 cos(2 f_n) v / rho^2 = 0,

with regular branches v ~ rho^2 at the origin and v ~ 1 + C (rho - 1) at the
light cone, C = (2 + lam (1 - lam)) / (2 lam).  Eigenvalues are located by
two-sided shooting: a scan of the log-derivative mismatch at the fitting
point brackets the roots and a normalized Wronskian (same zeros, no poles)
is polished by Brent iteration.  Solutions grow like (1 - rho)^(-lam), so
for large rates the integration is split into renormalized chunks.

Each f_n carries exactly n+1 positive eigenvalues; the lowest one, lam = 1,
is the gauge mode rho^2 f_n'(rho) generated by shifting the blowup-time
guess and is used as an analytic cross-check of the whole pipeline.
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
from .selfsim import SelfSimilarProfile, ShootConfig

__all__ = [
    "ModeProfile",
    "SpectrumReport",
    "mode_origin_series",
    "mode_lightcone_series",
    "mode_shoot_origin",
    "mode_shoot_lightcone",
    "find_eigenvalues",
    "gauge_mode_check",
    "build_mode",
    "extend_mode",
]

_LN_BUDGET = 120.0  # max ln-growth per integration chunk before renormalizing
_RENORM_CAP = 1e50
_OVERFLOW_CAP = 1e100


@dataclass(frozen=True)
class ModeProfile:
    """Eigenfunction v(rho) with growth rate lam about background f_n.

    The table is normalized to v(1) = 1; regularity forces v ~ rho^2 at the
    origin.
    """

    lam: float
    v: ProfileTable
    n: int


@dataclass(frozen=True)
class SpectrumReport:
    """Positive eigenvalues of the perturbation operator about f_n.

    ``eigenvalues`` is sorted descending; ``mismatch_curve`` tabulates the
    log-derivative mismatch over the scan grid for diagnostics.
    """

    n: int
    eigenvalues: tuple
    mismatch_curve: ProfileTable


def mode_origin_series(lam: float, a: float, rho):
    """Regular origin branch v = rho^2 + c4 rho^4 for background slope a."""
    c4 = (lam**2 + 3 * lam + 2 - 4 * a**2) / 10
    return rho**2 + c4 * rho**4, 2 * rho + 4 * c4 * rho**3


def mode_lightcone_series(lam: float, rho):
    """Regular light-cone branch, normalized to v(1) = 1.

    The indicial roots at rho = 1 are {0, 1 - lam}; only the flat branch is
    admissible, and direct substitution fixes its slope to +C.
    """
    if lam == 0:
        raise ValueError("lam = 0 makes the light-cone series coefficient singular")
    s = np.asarray(rho, float) - 1.0
    C = (2 + lam * (1 - lam)) / (2 * lam)
    C2 = (2 * lam * C * (C - 1) - 4) / (4 * (lam + 1))
    return 1.0 + C * s + C2 * s**2, C + 2 * C2 * s


def _potential_spline(table: ProfileTable) -> CubicSpline:
    return CubicSpline(table.x, np.cos(2 * table.f))


def _mode_rhs(spline):
    def rhs(rho, y, lam):
        v, w = y
        c = spline(rho)
        return (
            w,
            (2 * lam * rho * w + lam * (lam - 1) * v + 2 * c * v / rho**2)
            / (1 - rho**2),
        )

    return rhs


def _chunk_points(lam: float, rho0: float, rho1: float) -> list:
    """Breakpoints keeping the ln-growth lam * |dln(1-rho)| under budget."""
    factor = math.exp(-math.copysign(_LN_BUDGET, rho1 - rho0) / max(lam, 1.0))
    pts = [rho0]
    while True:
        nxt = 1.0 - (1.0 - pts[-1]) * factor
        if (rho1 > rho0) == (nxt >= rho1):
            pts.append(rho1)
            return pts
        pts.append(nxt)


def _integrate_chunked(rhs, lam, rho0, rho1, y0, tol, dense=False):
    """Integrate the mode equation with periodic renormalization.

    Returns (y_final, segments) where segments is a list of
    (solve_ivp result, ln_scale) pairs; ln_scale is the accumulated
    log-magnitude divided out *before* that segment was integrated.
    """
    y = np.asarray(y0, float)
    ln_scale = 0.0
    segments = []
    for a0, a1 in zip(*(lambda p: (p[:-1], p[1:]))(_chunk_points(lam, rho0, rho1))):
        sol = solve_ivp(
            rhs, (a0, a1), y, args=(lam,), method="DOP853",
            rtol=tol, atol=1e-250, dense_output=dense,
        )
        if not sol.success:
            raise ShootingError(f"mode integration failed: {sol.message}")
        if not np.all(np.isfinite(sol.y[:, -1])):
            raise ShootingError(f"mode integration overflowed near rho = {sol.t[-1]:.4g}")
        segments.append((sol, ln_scale))
        y = sol.y[:, -1]
        m = max(abs(y[0]), abs(y[1]))
        if m > _RENORM_CAP:
            y = y / m
            ln_scale += math.log(m)
    return y, segments


def _check_background(background: SelfSimilarProfile, cfg: ShootConfig):
    t = background.interior_dense
    if t.x_min > cfg.rho_start or t.x_max < 1.0:
        raise ValueError("background table does not cover [rho_start, 1]")


def _origin_launch(lam: float, a: float, cfg: ShootConfig) -> float:
    return min(cfg.rho_start, 1.0 / max(abs(a), abs(lam), 2.0))


def _cone_launch(lam: float, cfg: ShootConfig) -> float:
    return min(cfg.rho_start, 0.05 / max(abs(lam), 1.0))


def mode_shoot_origin(lam: float, background: SelfSimilarProfile,
                      cfg: ShootConfig | None = None, _spline=None):
    """Shoot the regular origin branch to rho_fit; returns (v, v').

    For large lam the pair is jointly rescaled to avoid overflow, which
    leaves the log-derivative (all the matching needs) untouched.
    """
    cfg = cfg or ShootConfig()
    _check_background(background, cfg)
    spline = _spline if _spline is not None else _potential_spline(background.interior_dense)
    rho0 = _origin_launch(lam, background.a, cfg)
    y0 = mode_origin_series(lam, background.a, rho0)
    y, _ = _integrate_chunked(_mode_rhs(spline), lam, rho0, cfg.rho_fit, y0, cfg.ode_tol)
    return float(y[0]), float(y[1])


def mode_shoot_lightcone(lam: float, background: SelfSimilarProfile,
                         cfg: ShootConfig | None = None, _spline=None):
    """Shoot the regular light-cone branch down to rho_fit; returns (v, v')."""
    cfg = cfg or ShootConfig()
    _check_background(background, cfg)
    spline = _spline if _spline is not None else _potential_spline(background.interior_dense)
    eps = _cone_launch(lam, cfg)
    y0 = mode_lightcone_series(lam, 1.0 - eps)
    y, _ = _integrate_chunked(_mode_rhs(spline), lam, 1.0 - eps, cfg.rho_fit, y0, cfg.ode_tol)
    return float(y[0]), float(y[1])


def _matching(lam, background, cfg, spline, tol):
    rhs = _mode_rhs(spline)
    rho0 = _origin_launch(lam, background.a, cfg)
    yL, _ = _integrate_chunked(
        rhs, lam, rho0, cfg.rho_fit, mode_origin_series(lam, background.a, rho0), tol)
    eps = _cone_launch(lam, cfg)
    yR, _ = _integrate_chunked(
        rhs, lam, 1.0 - eps, cfg.rho_fit, mode_lightcone_series(lam, 1.0 - eps), tol)
    vL, wL = yL
    vR, wR = yR
    wronskian = (wL * vR - wR * vL) / (abs(wL * vR) + abs(wR * vL) + 1e-300)
    if vL == 0.0 or vR == 0.0:
        mismatch = math.inf
    else:
        mismatch = wL / vL - wR / vR
    return mismatch, wronskian


def _scan_grid(lo: float, hi: float, step: float, uniform_cut: float,
               geometric_ratio: float) -> np.ndarray:
    pts = [lo]
    while pts[-1] < hi:
        lam = pts[-1]
        nxt = lam + step if lam < uniform_cut else lam * geometric_ratio
        pts.append(min(nxt, hi))
    return np.array(pts)


def find_eigenvalues(background: SelfSimilarProfile,
                     lambda_range: tuple[float, float] | None = None,
                     cfg: ShootConfig | None = None,
                     scan_step: float = 0.05,
                     uniform_cut: float = 20.0,
                     geometric_ratio: float = 1.015) -> SpectrumReport:
    """Locate all positive eigenvalues of the mode problem in a range.

    The mismatch is scanned on a grid with uniform step ``scan_step`` up to
    ``uniform_cut`` and geometric spacing beyond (eigenvalue spacing grows
    roughly tenfold per level, so 1.5% steps cannot straddle two roots).
    Each sign change whose normalized Wronskian also changes sign (a genuine
    root rather than a log-derivative pole) is polished by Brent iteration.
    """
    cfg = cfg or ShootConfig()
    if lambda_range is None:
        lambda_range = (0.1, 1.5 * 10.0 ** (background.n + 1))
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got ({lo}, {hi})")
    spline = _potential_spline(background.interior_dense)
    scan_tol = max(cfg.ode_tol, 1e-9)

    lams = _scan_grid(lo, hi, scan_step, uniform_cut, geometric_ratio)
    mism = np.empty_like(lams)
    wron = np.empty_like(lams)
    for i, lam in enumerate(lams):
        m, w = _matching(lam, background, cfg, spline, scan_tol)
        if not math.isfinite(m):
            # scan point sits on a zero of v at the fitting point: nudge
            lams[i] = lam + 1e-3 * scan_step
            m, w = _matching(lams[i], background, cfg, spline, scan_tol)
        mism[i] = m
        wron[i] = w

    brackets = [(lams[i], lams[i + 1])
                for i in np.flatnonzero(np.sign(mism[:-1]) != np.sign(mism[1:]))]
    # a root landing on a scan point leaves no sign change; the vanishing
    # normalized Wronskian flags it, and the bracket widens by one step
    for i in np.flatnonzero(np.abs(wron) < 1e-8):
        brackets.append((lams[max(i - 1, 0)], lams[min(i + 1, lams.size - 1)]))

    def polish_target(lam):
        return _matching(lam, background, cfg, spline, cfg.ode_tol)[1]

    roots = []
    for a0, a1 in brackets:
        wa, wb = polish_target(a0), polish_target(a1)
        if np.sign(wa) == np.sign(wb):
            continue  # pole of the log-derivative, not an eigenvalue
        xtol = cfg.root_tol * max(1.0, a1)
        root = brentq(polish_target, a0, a1, xtol=xtol, rtol=8 * np.finfo(float).eps)
        if not any(abs(root - r) < 1e-6 * max(1.0, abs(r)) for r in roots):
            roots.append(float(root))
    roots.sort(reverse=True)
    return SpectrumReport(
        n=background.n,
        eigenvalues=tuple(roots),
        mismatch_curve=ProfileTable(lams, mism),
    )


def gauge_mode_check(background: SelfSimilarProfile, stride: int = 1) -> float:
    """Sup-norm residual of rho^2 f_n' in the mode equation at lam = 1.

    Evaluated by centered finite differences on the uniform interior table
    over rho in [0.05, 0.95]; the result decays as O(h^2), so doubling
    ``stride`` should roughly quadruple it.
    """
    t = background.interior
    x, f, df = t.x[::stride], t.f[::stride], t.df[::stride]
    h = x[1] - x[0]
    w = x**2 * df
    i = slice(1, -1)
    wp = (w[2:] - w[:-2]) / (2 * h)
    wpp = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    rho = x[i]
    res = -(1 - rho**2) * wpp + 2 * rho * wp + 2 * np.cos(2 * f[i]) * w[i] / rho**2
    mask = (rho >= 0.05) & (rho <= 0.95)
    return float(np.max(np.abs(res[mask])))


def _segment_sampler(segments, ln_ref):
    """Evaluate chunked dense output, undoing the per-segment rescaling."""

    def sample(x):
        x = np.asarray(x, float)
        v = np.empty_like(x)
        w = np.empty_like(x)
        for sol, lns in segments:
            t0, t1 = sorted((sol.t[0], sol.t[-1]))
            sel = (x >= t0 - 1e-14) & (x <= t1 + 1e-14)
            if not np.any(sel):
                continue
            y = sol.sol(np.clip(x[sel], t0, t1))
            scale = math.exp(min(lns - ln_ref, 700.0))
            v[sel] = y[0] * scale
            w[sel] = y[1] * scale
        return v, w

    return sample


def build_mode(background: SelfSimilarProfile, lam: float,
               cfg: ShootConfig | None = None, n_samples: int = 2049) -> ModeProfile:
    """Assemble the eigenfunction table on [0, 1], normalized to v(1) = 1.

    Both shots are integrated with dense output and the origin branch is
    rescaled to match the light-cone branch at the fitting point; at an
    eigenvalue the slopes agree there automatically.
    """
    cfg = cfg or ShootConfig()
    _check_background(background, cfg)
    spline = _potential_spline(background.interior_dense)
    rhs = _mode_rhs(spline)

    rho0 = _origin_launch(lam, background.a, cfg)
    yL, segL = _integrate_chunked(
        rhs, lam, rho0, cfg.rho_fit, mode_origin_series(lam, background.a, rho0),
        cfg.ode_tol, dense=True)
    eps = _cone_launch(lam, cfg)
    yR, segR = _integrate_chunked(
        rhs, lam, 1.0 - eps, cfg.rho_fit, mode_lightcone_series(lam, 1.0 - eps),
        cfg.ode_tol, dense=True)
    lnsL = segL[-1][1]
    lnsR = segR[-1][1]
    if yL[0] == 0.0:
        raise ShootingError("origin shot vanishes at the fitting point")
    # scale factor bringing the origin branch onto the light-cone branch
    ratio = (yR[0] * math.exp(lnsR)) / (yL[0] * math.exp(lnsL))

    xs = np.linspace(0.0, 1.0, n_samples)
    v = np.empty_like(xs)
    dv = np.empty_like(xs)
    left = xs < cfg.rho_fit
    series = xs < rho0
    vL, wL = _segment_sampler(segL, 0.0)(xs[left & ~series])
    v[left & ~series] = vL * ratio
    dv[left & ~series] = wL * ratio
    # the first chunk carries no accumulated rescaling, so the launch series
    # is already in the sampler's normalization
    vs, ws = mode_origin_series(lam, background.a, xs[series])
    v[series] = vs * ratio
    dv[series] = ws * ratio
    cone = xs > 1.0 - eps
    right = ~left & ~cone
    vR, wR = _segment_sampler(segR, 0.0)(xs[right])
    v[right] = vR
    dv[right] = wR
    vs, ws = mode_lightcone_series(lam, xs[cone])
    v[cone] = vs
    dv[cone] = ws
    v[0], v[-1] = 0.0, 1.0
    return ModeProfile(lam=float(lam), v=ProfileTable(xs, v, dv), n=background.n)


def extend_mode(mode: ModeProfile, background: SelfSimilarProfile,
                rho_max: float, cfg: ShootConfig | None = None) -> ModeProfile:
    """Continue the eigenfunction past the light cone up to rho_max."""
    cfg = cfg or ShootConfig()
    if rho_max <= 1.0:
        raise ValueError(f"rho_max must exceed 1, got {rho_max}")
    if background.exterior is None or background.exterior.x_max < rho_max:
        raise ValueError("background exterior table does not cover rho_max; "
                         "call extend_exterior first")
    spline = _potential_spline(background.exterior)
    eps = _cone_launch(mode.lam, cfg)
    y0 = mode_lightcone_series(mode.lam, 1.0 + eps)
    sol = solve_ivp(
        _mode_rhs(spline), (1.0 + eps, rho_max), y0, args=(mode.lam,),
        method="DOP853", rtol=cfg.ode_tol, atol=1e-250, dense_output=True,
    )
    if not sol.success:
        raise ShootingError(f"mode extension failed: {sol.message}")
    if np.max(np.abs(sol.y)) > _OVERFLOW_CAP:
        raise ShootingError("mode extension overflowed before rho_max")
    xs = np.linspace(1.0, rho_max, 2049)[1:]
    v = np.empty_like(xs)
    dv = np.empty_like(xs)
    near = xs < 1.0 + eps
    vs, ws = mode_lightcone_series(mode.lam, xs[near])
    v[near], dv[near] = vs, ws
    y = sol.sol(xs[~near])
    v[~near], dv[~near] = y[0], y[1]
    x_all = np.concatenate([mode.v.x, xs])
    v_all = np.concatenate([mode.v.f, v])
    dv_all = np.concatenate([mode.v.df, dv])
    return ModeProfile(lam=mode.lam, v=ProfileTable(x_all, v_all, dv_all), n=mode.n)
