"""Radial grids, sampled profiles, quadrature and field-state utilities.

Everything here is shared substrate: uniform grids on [0, r_max], cubic
interpolation of tabulated profiles, the conserved energy

    E[u] = 1/2 * int_0^rc (r^2 u_t^2 + r^2 u_r^2 + 2 sin^2 u) dr,

and topological-degree classification of boundary data.  All containers are
immutable after construction and all operations are pure functions.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DegreeError, InvalidStateError

__all__ = [
    "RadialGrid",
    "CompositeGrid",
    "FieldState",
    "ProfileTable",
    "EnergyReport",
    "make_uniform_grid",
    "energy",
    "interpolate",
    "classify_degree",
    "lagrange_resample",
    "simpson_nonuniform_weights",
    "deriv_weights",
]


def _readonly(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid on [0, r_max] with n_cells cells (n_cells+1 nodes)."""

    r_max: float
    n_cells: int

    def __post_init__(self):
        if not (self.r_max > 0):
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if self.n_cells < 8:
            raise ValueError(f"n_cells must be >= 8, got {self.n_cells}")

    @property
    def spacing(self) -> float:
        return self.r_max / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def nodes(self) -> np.ndarray:
        return self.spacing * np.arange(self.n_nodes)


def make_uniform_grid(r_max: float, n_cells: int) -> RadialGrid:
    """Uniform radial grid; node i sits at i * (r_max / n_cells)."""
    return RadialGrid(float(r_max), int(n_cells))


@dataclass(frozen=True)
class CompositeGrid:
    """Nested refinement hierarchy: spacing halves toward the origin.

    Level l >= 1 covers [0, r_max / 2^l] at spacing h0 / 2^l, where h0 is
    the base spacing r_max / n_cells_base.  With ``levels = 0`` the node set
    coincides with the uniform base grid.
    """

    r_max: float
    n_cells_base: int
    levels: int = 0

    def __post_init__(self):
        if not (self.r_max > 0):
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if self.n_cells_base < 8 or self.n_cells_base % 2:
            raise ValueError(
                f"n_cells_base must be even and >= 8, got {self.n_cells_base}"
            )
        if self.levels < 0:
            raise ValueError(f"levels must be >= 0, got {self.levels}")

    @property
    def spacing(self) -> float:
        """Finest spacing in the hierarchy."""
        return self.r_max / self.n_cells_base / 2**self.levels

    @property
    def n_nodes(self) -> int:
        return self.n_cells_base + self.levels * (self.n_cells_base // 2) + 1

    @property
    def n_cells(self) -> int:
        return self.n_nodes - 1

    def nodes(self) -> np.ndarray:
        h0 = self.r_max / self.n_cells_base
        parts = [np.array([0.0])]
        # finest region, then annuli of doubling spacing outward
        L = self.levels
        h = h0 / 2**L
        lo = 0.0
        hi = self.r_max / 2**L if L else self.r_max
        parts.append(np.arange(1, round((hi - lo) / h) + 1) * h + lo)
        for l in range(L, 0, -1):
            lo = self.r_max / 2**l
            hi = self.r_max / 2 ** (l - 1) if l > 1 else self.r_max
            h = h0 / 2 ** (l - 1)
            parts.append(lo + np.arange(1, round((hi - lo) / h) + 1) * h)
        return np.concatenate(parts)


@dataclass(frozen=True)
class FieldState:
    """Radial Cauchy data (u, u_t) on a grid at time t.

    NaN/Inf samples are rejected outright.  A nonzero origin value does not
    raise (some diagnostics evaluate functionals on such data) but is flagged
    through ``origin_violation``.
    """

    grid: RadialGrid
    t: float
    u: np.ndarray
    ut: np.ndarray

    def __post_init__(self):
        u = _readonly(self.u)
        ut = _readonly(self.ut)
        if u.shape != (self.grid.n_nodes,) or ut.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"u/ut must have {self.grid.n_nodes} samples, "
                f"got {u.shape} and {ut.shape}"
            )
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
            raise InvalidStateError("non-finite samples in field state")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ut", ut)

    @property
    def origin_violation(self) -> bool:
        return self.u[0] != 0.0


@dataclass(frozen=True)
class ProfileTable:
    """Sampled profile over strictly increasing abscissae.

    ``df`` optionally stores slope samples.  Interpolation queries outside
    the sampled range raise ValueError.
    """

    x: np.ndarray
    f: np.ndarray
    df: np.ndarray | None = None

    def __post_init__(self):
        x = _readonly(self.x)
        f = _readonly(self.f)
        if x.ndim != 1 or x.shape != f.shape or x.size < 4:
            raise ValueError("need matching 1-d arrays with at least 4 samples")
        if not np.all(np.diff(x) > 0):
            raise ValueError("abscissae must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)
        if self.df is not None:
            df = _readonly(self.df)
            if df.shape != x.shape:
                raise ValueError("df must match x in shape")
            object.__setattr__(self, "df", df)

    def __call__(self, xq):
        return interpolate(self, xq)

    def deriv(self, xq):
        if self.df is None:
            raise ValueError("table carries no slope samples")
        return _lagrange4(self.x, self.df, xq)

    @property
    def x_min(self) -> float:
        return float(self.x[0])

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def to_csv(self, path) -> None:
        cols = [self.x, self.f] if self.df is None else [self.x, self.f, self.df]
        header = "x,f" if self.df is None else "x,f,df"
        buf = io.StringIO()
        buf.write(header + "\n")
        for row in zip(*cols):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "ProfileTable":
        with open(path) as fh:
            header = fh.readline().strip()
            if header not in ("x,f", "x,f,df"):
                raise ValueError(f"unrecognized profile CSV header: {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if header == "x,f":
            return cls(data[:, 0], data[:, 1])
        return cls(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class EnergyReport:
    total: float
    kinetic: float
    gradient: float
    potential: float
    r_cutoff: float


def _lagrange4(x: np.ndarray, f: np.ndarray, xq):
    """4-point Lagrange interpolation on monotone abscissae.

    Exact on cubic polynomials; the stencil is the 4 samples bracketing the
    query, clamped at the table ends.
    """
    xq_arr = np.atleast_1d(np.asarray(xq, dtype=float))
    lo, hi = x[0], x[-1]
    tol = 1e-12 * max(abs(lo), abs(hi), 1.0)
    if np.any(xq_arr < lo - tol) or np.any(xq_arr > hi + tol):
        bad = xq_arr[(xq_arr < lo - tol) | (xq_arr > hi + tol)][0]
        raise ValueError(f"query {bad:.6g} outside sampled range [{lo:.6g}, {hi:.6g}]")
    xq_arr = np.clip(xq_arr, lo, hi)
    # index of first stencil point: want samples i0..i0+3 around the query
    i = np.searchsorted(x, xq_arr, side="right") - 1
    i0 = np.clip(i - 1, 0, x.size - 4)
    result = np.zeros_like(xq_arr)
    xs = np.stack([x[i0 + k] for k in range(4)])  # (4, nq)
    fs = np.stack([f[i0 + k] for k in range(4)])
    for k in range(4):
        lk = np.ones_like(xq_arr)
        for m in range(4):
            if m == k:
                continue
            lk *= (xq_arr - xs[m]) / (xs[k] - xs[m])
        result += fs[k] * lk
    if np.isscalar(xq) or np.asarray(xq).ndim == 0:
        return float(result[0])
    return result


def interpolate(table: ProfileTable, x):
    """Cubic (4-point Lagrange) interpolation of a tabulated profile."""
    return _lagrange4(table.x, table.f, x)


def lagrange_resample(x_old: np.ndarray, f_old: np.ndarray, x_new: np.ndarray) -> np.ndarray:
    """Resample samples onto new abscissae by 4-point Lagrange interpolation."""
    return np.asarray(_lagrange4(np.asarray(x_old, float), np.asarray(f_old, float),
                                 np.asarray(x_new, float)))


def deriv_weights(r: np.ndarray):
    """Three-point stencil weights for f' and f'' on monotone abscissae.

    Returns ((am, a0, ap), (bm, b0, bp)) for the interior nodes 1..n-2:
    f'_i = am f_{i-1} + a0 f_i + ap f_{i+1}, likewise f'' with b.  Exact on
    quadratics; f' is second order and f'' first order where the spacing
    jumps, second order elsewhere.
    """
    r = np.asarray(r, float)
    h1 = r[1:-1] - r[:-2]
    h2 = r[2:] - r[1:-1]
    am = -h2 / (h1 * (h1 + h2))
    a0 = (h2 - h1) / (h1 * h2)
    ap = h1 / (h2 * (h1 + h2))
    bm = 2 / (h1 * (h1 + h2))
    b0 = -2 / (h1 * h2)
    bp = 2 / (h2 * (h1 + h2))
    return (am, a0, ap), (bm, b0, bp)


def _fd_derivative_nonuniform(f: np.ndarray, r: np.ndarray) -> np.ndarray:
    (am, a0, ap), _ = deriv_weights(r)
    d = np.empty_like(f)
    d[1:-1] = am * f[:-2] + a0 * f[1:-1] + ap * f[2:]
    h = r[1] - r[0]
    d[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    h = r[-1] - r[-2]
    d[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return d


def _fd_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order first derivative on a uniform grid, one-sided at the ends."""
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    d[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    d[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return d


def _simpson_uniform(y: np.ndarray, h: float) -> float:
    """Composite Simpson on a uniform grid; odd interval counts close with 3/8."""
    n = y.size - 1
    if n < 3:
        # fall back to trapezoid on degenerate slices
        return float(np.trapezoid(y, dx=h))
    total = 0.0
    if n % 2 == 1:
        # Simpson 3/8 on the last three intervals
        total += 3 * h / 8 * (y[-4] + 3 * y[-3] + 3 * y[-2] + y[-1])
        y = y[: n - 2]
        n -= 3
    if n > 0:
        total += h / 3 * (y[0] + y[-1] + 4 * np.sum(y[1:-1:2]) + 2 * np.sum(y[2:-1:2]))
    return float(total)


def simpson_nonuniform_weights(x: np.ndarray) -> np.ndarray:
    """Quadrature weights, 4th order on piecewise-uniform abscissae.

    Each maximal uniform segment gets composite Simpson weights (with a 3/8
    closure when its interval count is odd).
    """
    x = np.asarray(x, float)
    w = np.zeros_like(x)
    dx = np.diff(x)
    # split into maximal uniform segments
    brk = [0]
    for i in range(1, dx.size):
        if abs(dx[i] - dx[i - 1]) > 1e-12 * dx[i]:
            brk.append(i)
    brk.append(dx.size)
    for s, e in zip(brk[:-1], brk[1:]):
        h = dx[s]
        n = e - s  # intervals in this segment, nodes s..e
        i0 = s
        if n % 2 == 1 and n >= 3:
            # 3/8 closure at the segment end
            w[e - 3:e + 1] += 3 * h / 8 * np.array([1, 3, 3, 1])
            n -= 3
        elif n % 2 == 1:
            w[e - 1:e + 1] += h / 2  # single-interval trapezoid
            n -= 1
        if n > 0:
            idx = np.arange(i0, i0 + n + 1)
            ws = np.full(n + 1, 2.0)
            ws[1::2] = 4.0
            ws[0] = ws[-1] = 1.0
            w[idx] += h / 3 * ws
    return w


def energy(state: FieldState, r_cutoff: float) -> EnergyReport:
    """Conserved-energy pieces integrated over [0, r_cutoff].

    Composite Simpson quadrature; the radial derivative uses centered
    stencils with one-sided closures.  r_cutoff snaps to the nearest node.
    """
    grid = state.grid
    if not (0 < r_cutoff <= grid.r_max * (1 + 1e-12)):
        raise ValueError(f"r_cutoff must lie in (0, {grid.r_max}], got {r_cutoff}")
    if isinstance(grid, RadialGrid):
        h = grid.spacing
        idx = int(round(r_cutoff / h))
        idx = max(4, min(idx, grid.n_cells))
        r = grid.nodes()[: idx + 1]
        u = state.u[: idx + 1]
        # derivative from the full field, then sliced: interior-accurate at the cut
        ur = _fd_derivative(state.u, h)[: idx + 1]
        ut = state.ut[: idx + 1]
        kinetic = 0.5 * _simpson_uniform(r**2 * ut**2, h)
        gradient = 0.5 * _simpson_uniform(r**2 * ur**2, h)
        potential = _simpson_uniform(np.sin(u) ** 2, h)
    else:
        nodes = grid.nodes()
        idx = max(4, int(np.argmin(np.abs(nodes - r_cutoff))))
        r = nodes[: idx + 1]
        u = state.u[: idx + 1]
        ur = _fd_derivative_nonuniform(state.u, nodes)[: idx + 1]
        ut = state.ut[: idx + 1]
        w = simpson_nonuniform_weights(r)
        kinetic = 0.5 * float(w @ (r**2 * ut**2))
        gradient = 0.5 * float(w @ (r**2 * ur**2))
        potential = float(w @ np.sin(u) ** 2)
        return EnergyReport(
            total=kinetic + gradient + potential,
            kinetic=kinetic,
            gradient=gradient,
            potential=potential,
            r_cutoff=float(nodes[idx]),
        )
    return EnergyReport(
        total=kinetic + gradient + potential,
        kinetic=kinetic,
        gradient=gradient,
        potential=potential,
        r_cutoff=idx * h,
    )


def classify_degree(state: FieldState, tol: float = 0.1) -> int:
    """Nearest integer m with u(r_max) ~ m*pi; rejects values outside tol."""
    val = float(state.u[-1])
    m = round(val / np.pi)
    if abs(val - m * np.pi) > tol:
        raise DegreeError(
            f"boundary value {val:.6g} is not within {tol} of a multiple of pi"
        )
    return int(m)
