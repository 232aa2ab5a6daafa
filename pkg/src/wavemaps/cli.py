"""Command-line frontend: subcommands, flat config files, run manifests.

Every invocation resolves its parameters from defaults, then an optional
``key = value`` config file, then command-line flags (highest precedence),
and records the provenance of each value in a JSON manifest next to the
outputs, together with content digests of every file written.  Exit status:
0 success, 1 scientific failure (a solver raised), 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .cauchy import (
    EvolutionConfig,
    InitialDataSpec,
    estimate_blowup_time,
    evolve,
    make_initial_data,
    rescaled_profile,
)
from .criticality import FamilySpec, bisect, transient_analysis
from .errors import WavemapsError
from .grid import ProfileTable, RadialGrid
from .selfsim import extend_exterior, find_profile
from .similarity import SimilarityConfig, SimilarityState, evolve_similarity, to_similarity
from .spectrum import build_mode, find_eigenvalues
from .statics import bound_states, integrate_pendulum, neumann_points

__all__ = ["RunManifest", "parse_config", "main"]

SUBCOMMANDS = ("selfsim", "spectrum", "static", "evolve", "simevolve",
               "bisect", "transient", "figdata")


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written alongside every run's outputs."""

    subcommand: str
    config_snapshot: dict  # key -> {"value": ..., "source": default|file|flag}
    tool_version: str
    wall_time: float
    outputs: tuple  # of {"path": ..., "sha256": ...}
    status: str = "success"

    def write(self, path) -> None:
        payload = {
            "subcommand": self.subcommand,
            "config_snapshot": self.config_snapshot,
            "tool_version": self.tool_version,
            "wall_time": self.wall_time,
            "outputs": list(self.outputs),
            "status": self.status,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


class UsageError(Exception):
    """Bad invocation: unknown key, type mismatch, missing required key."""


def _parse_grid(text: str):
    try:
        r_str, n_str = text.split(",")
        return RadialGrid(float(r_str), int(n_str))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"grid must be 'R,N', got {text!r}: {exc}") from exc


# parameter schemas: key -> (converter, default, required)
_COMMON = {"out": (str, None, False), "config": (str, None, False)}

_SCHEMAS = {
    "selfsim": {
        "n": (int, None, True),
        "rho_max": (float, 5.0, False),
        **_COMMON,
    },
    "spectrum": {
        "n": (int, None, True),
        "lambda_max": (float, 0.0, False),  # 0 means the default scan range
        **_COMMON,
    },
    "static": {
        "x_lo": (float, -9.2, False),
        "x_hi": (float, 8.0, False),
        "neumann_count": (int, 3, False),
        "domain_radius": (float, 60.0, False),
        "bound_count": (int, 1, False),
        **_COMMON,
    },
    "evolve": {
        "family": (str, "gaussian", False),
        "A": (float, 0.05, False),
        "r0": (float, 2.0, False),
        "s": (float, 1.0, False),
        "grid": (_parse_grid, RadialGrid(16.0, 1024), False),
        "cfl": (float, 0.25, False),
        "t_end": (float, 20.0, False),
        "dissipation": (float, 0.0, False),
        **_COMMON,
    },
    "simevolve": {
        "from_profile": (str, "", False),  # CSV path; empty means TS f0
        "T": (float, 1.0, False),
        "rho_max": (float, 3.0, False),
        "n_cells": (int, 1024, False),
        "tau_end": (float, 5.0, False),
        "tau_snap": (float, 1.0, False),
        "cfl": (float, 0.5, False),
        "dissipation": (float, 0.0, False),
        **_COMMON,
    },
    "bisect": {
        "family": (str, "gaussian", False),
        "param": (str, "A", False),
        "lo": (float, 0.02, False),
        "hi": (float, 0.05, False),
        "tol": (float, 1e-10, False),
        "r0": (float, 2.0, False),
        "s": (float, 1.0, False),
        "grid": (_parse_grid, RadialGrid(16.0, 1024), False),
        "t_end": (float, 40.0, False),
        "dissipation": (float, 0.02, False),
        **_COMMON,
    },
    "transient": {
        "record": (str, None, True),
        "decades": (int, 5, False),
        **_COMMON,
    },
    "figdata": {
        "figure": (int, None, True),
        **_COMMON,
    },
}


def parse_config(path) -> dict:
    """Flat ``key = value`` file with ``#`` comments; returns raw strings."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise UsageError(f"{path}:{lineno}: empty key or value in {raw.rstrip()!r}")
            if key in out:
                raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def _resolve(subcommand: str, file_values: dict, flag_values: dict):
    """Defaults < file < flags, with provenance; unknown keys are errors."""
    schema = _SCHEMAS[subcommand]
    for key in file_values:
        if key not in schema:
            raise UsageError(f"unknown config key {key!r} for {subcommand}")
    resolved = {}
    snapshot = {}
    for key, (conv, default, required) in schema.items():
        if key in flag_values and flag_values[key] is not None:
            raw, source = flag_values[key], "flag"
        elif key in file_values:
            raw, source = file_values[key], "file"
        elif required:
            raise UsageError(f"missing required key {key!r} for {subcommand}")
        else:
            resolved[key] = default
            snapshot[key] = {"value": _jsonable(default), "source": "default"}
            continue
        try:
            value = conv(raw) if isinstance(raw, str) else raw
        except UsageError:
            raise
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
        resolved[key] = value
        snapshot[key] = {"value": _jsonable(value), "source": source}
    return resolved, snapshot


def _jsonable(v):
    if isinstance(v, RadialGrid):
        return f"{v.r_max},{v.n_cells}"
    return v


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class _OutputTracker:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def path(self, name):
        p = os.path.join(self.out_dir, name)
        self.files.append(p)
        return p

    def write_json(self, name, payload):
        p = self.path(name)
        with open(p, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_table(self, name, table: ProfileTable):
        table.to_csv(self.path(name))

    def digests(self):
        return tuple({"path": p, "sha256": _sha256(p)} for p in self.files)


def _sample_profile(profile, rho_max, n=2001) -> ProfileTable:
    rho = np.linspace(0.0, rho_max, n)
    return ProfileTable(rho, profile.value(rho), profile.slope(rho))


def _run_selfsim(params, out: _OutputTracker):
    profile = find_profile(params["n"])
    if params["rho_max"] > 1.0:
        profile = extend_exterior(profile, params["rho_max"])
    out.write_table(f"profile_f{params['n']}.csv",
                    _sample_profile(profile, params["rho_max"]))
    out.write_json("selfsim.json", {
        "n": profile.n, "a": profile.a, "b": profile.b,
        "mismatch": profile.mismatch,
    })


def _run_spectrum(params, out: _OutputTracker):
    profile = find_profile(params["n"])
    rng = (0.1, params["lambda_max"]) if params["lambda_max"] > 0 else None
    report = find_eigenvalues(profile, lambda_range=rng)
    out.write_table("mismatch_curve.csv", report.mismatch_curve)
    out.write_json("spectrum.json", {
        "n": report.n, "eigenvalues": list(report.eigenvalues),
    })


def _run_static(params, out: _OutputTracker):
    prof = integrate_pendulum((params["x_lo"], params["x_hi"]))
    out.write_table("static_profile.csv",
                    ProfileTable(prof.x_samples, prof.u, prof.du))
    points = neumann_points(prof, params["neumann_count"])
    payload = {"neumann_points": list(points)}
    if params["bound_count"] > 0:
        rep = bound_states(prof, params["domain_radius"], params["bound_count"])
        payload["bound_eigenvalues"] = list(rep.eigenvalues)
        payload["node_counts"] = list(rep.node_counts)
    out.write_json("static.json", payload)


def _initial_data_from(params) -> InitialDataSpec:
    family = params["family"]
    if family == "gaussian":
        return InitialDataSpec("gaussian", {"A": params["A"], "r0": params["r0"],
                                            "s": params["s"]})
    if family == "kink":
        return InitialDataSpec("kink", {"s": params["s"]})
    raise UsageError(f"CLI evolve supports gaussian and kink, got {family!r}")


def _run_evolve(params, out: _OutputTracker):
    grid = params["grid"]
    cfg = EvolutionConfig(grid=grid, t_end=params["t_end"], cfl=params["cfl"],
                          dissipation=params["dissipation"])
    state = make_initial_data(_initial_data_from(params), grid)
    final, report = evolve(state, cfg)
    if report.gradient_history is not None:
        out.write_table("gradient_history.csv", report.gradient_history)
    for k, snap in enumerate(report.snapshots):
        out.write_table(f"snapshot_{k:03d}.csv",
                        ProfileTable(snap.grid.nodes(), snap.u, snap.ut))
    out.write_table("final_state.csv",
                    ProfileTable(final.grid.nodes(), final.u, final.ut))
    payload = {
        "blew_up": report.blew_up,
        "dispersed": report.dispersed,
        "final_time": report.final_time,
        "level_cap_reached": report.level_cap_reached,
    }
    if report.blew_up:
        payload["T_estimate"] = estimate_blowup_time(report)
    out.write_json("report.json", payload)


def _run_simevolve(params, out: _OutputTracker):
    scfg = SimilarityConfig(T_guess=params["T"], rho_max=params["rho_max"],
                            cfl=params["cfl"], n_cells=params["n_cells"],
                            dissipation=params["dissipation"])
    grid = RadialGrid(params["rho_max"], params["n_cells"])
    rho = grid.nodes()
    if params["from_profile"]:
        table = ProfileTable.from_csv(params["from_profile"])
        u = table(rho)
        u[0] = 0.0
        state = SimilarityState(0.0, grid, u, np.zeros_like(u))
    else:
        state = SimilarityState(0.0, grid, 2 * np.arctan(rho), np.zeros_like(rho))
    k = 0
    out.write_table(f"simframe_{k:03d}.csv", ProfileTable(rho, state.u, state.utau))
    while state.tau < params["tau_end"] - 1e-12:
        target = min(state.tau + params["tau_snap"], params["tau_end"])
        state = evolve_similarity(state, target, scfg)
        k += 1
        out.write_table(f"simframe_{k:03d}.csv",
                        ProfileTable(rho, state.u, state.utau))
    out.write_json("simevolve.json", {"tau_end": state.tau, "frames": k + 1})


def _family_from(params) -> FamilySpec:
    if params["family"] != "gaussian":
        base = InitialDataSpec("kink", {"s": params["s"]})
        return FamilySpec(base, params["param"], params["lo"], params["hi"])
    base = InitialDataSpec("gaussian", {"A": params["lo"], "r0": params["r0"],
                                        "s": params["s"]})
    return FamilySpec(base, params["param"], params["lo"], params["hi"])


def _run_bisect(params, out: _OutputTracker):
    grid = params["grid"]
    cfg = EvolutionConfig(grid=grid, t_end=params["t_end"],
                          dissipation=params["dissipation"])
    family = _family_from(params)
    record = bisect(family, params["tol"], cfg)
    out.write_json("bisect.json", {
        "p_star": record.p_star,
        "achieved_gap": record.achieved_gap,
        "iterations": [[p, o.value] for p, o, _ in record.iterations],
        "family": {
            "family": family.base.family,
            "params": family.base.params,
            "parameter": family.parameter,
            "p_lo": family.p_lo,
            "p_hi": family.p_hi,
        },
        "grid": _jsonable(grid),
        "t_end": params["t_end"],
        "dissipation": params["dissipation"],
    })


def _run_transient(params, out: _OutputTracker):
    with open(params["record"]) as fh:
        rec = json.load(fh)
    from .criticality import BisectionRecord, Outcome
    record = BisectionRecord(
        tuple((p, Outcome(o), {}) for p, o in rec["iterations"]),
        rec["p_star"], rec["achieved_gap"],
    )
    fam = rec["family"]
    family = FamilySpec(InitialDataSpec(fam["family"], fam["params"]),
                        fam["parameter"], fam["p_lo"], fam["p_hi"])
    grid = _parse_grid(rec["grid"])
    cfg = EvolutionConfig(grid=grid, t_end=rec["t_end"],
                          dissipation=rec.get("dissipation", 0.0))
    f1 = find_profile(1)
    fit = transient_analysis(family, record, params["decades"], cfg,
                             f1.interior)
    out.write_json("transient.json", {
        "lambda_estimate": fit.lambda_estimate,
        "samples": [list(s) for s in fit.samples],
        "fit_residual": fit.fit_residual,
    })


def _figdata(params, out: _OutputTracker):
    figure = params["figure"]
    if figure == 1:
        for n in range(5):
            profile = extend_exterior(find_profile(n), 5.0)
            out.write_table(f"fig1_f{n}.csv", _sample_profile(profile, 5.0))
    elif figure == 2:
        profile = find_profile(1)
        gauge = build_mode(profile, 1.0)
        unstable = build_mode(profile, 6.333625325)
        # normalize to equal slope at the origin (quadratic leading order)
        rho = np.linspace(0.0, 1.0, 1025)

        def normalized(mode):
            v = mode.v(rho[1:])
            scale = v[0] / rho[1] ** 2
            return ProfileTable(rho, np.concatenate([[0.0], v / scale]))

        out.write_table("fig2_gauge.csv", normalized(gauge))
        out.write_table("fig2_unstable.csv", normalized(unstable))
    elif figure == 3:
        prof = integrate_pendulum((-9.2, 8.0))
        r = np.exp(prof.x_samples)
        out.write_table("fig3_static.csv", ProfileTable(r, prof.u))
    elif figure in (4, 5):
        _figdata_marginal(figure, out)
    elif figure in (6, 7):
        _figdata_kink(figure, out)
    else:
        raise UsageError(f"figure must be 1..7, got {figure}")


def _figdata_marginal(figure, out: _OutputTracker):
    """Marginal gaussian pair around p* (coarse defaults, documented)."""
    grid = RadialGrid(16.0, 512)
    cfg = EvolutionConfig(grid=grid, t_end=40.0, dissipation=0.02)
    base = InitialDataSpec("gaussian", {"A": 0.03, "r0": 2.0, "s": 1.0})
    family = FamilySpec(base, "A", 0.02, 0.05)
    record = bisect(family, 1e-8, cfg)
    f1 = find_profile(1)
    gap = record.achieved_gap * record.p_star
    for side, p in (("sub", record.p_star - 2 * gap),
                    ("super", record.p_star + 2 * gap)):
        state = make_initial_data(family.at(p), grid)
        _, rep = evolve(state, cfg)
        if figure == 4:
            usable = [s for s in rep.snapshots
                      if rep.blew_up and s.t < rep.T_estimate] or rep.snapshots
            for k, snap in enumerate(usable[:6]):
                if rep.blew_up and snap.t < rep.T_estimate:
                    prof = rescaled_profile(snap, rep.T_estimate, (0.0, 1.0))
                else:
                    prof = ProfileTable(snap.grid.nodes(), snap.u)
                out.write_table(f"fig4_{side}_{k:02d}.csv", prof)
        elif figure == 5 and side == "super" and rep.blew_up:
            snap = rep.snapshots[-1]
            T = rep.T_estimate
            scale = T - snap.t
            rho = np.linspace(0.0, 0.5, 257)
            u = np.asarray(_interp_state(snap, rho * scale))
            ut = np.asarray(_interp_state(snap, rho * scale, deriv=True))
            utau = scale * ut - rho * scale * _interp_gradient(snap, rho * scale)
            out.write_table("fig5_exit_utau.csv", ProfileTable(rho, utau))
            mode = build_mode(f1, 6.333625325)
            v = np.concatenate([[0.0], mode.v(rho[1:])])
            if abs(utau[-1]) > 0 and abs(v[-1]) > 0:
                v = v * (utau[-1] / v[-1])
            out.write_table("fig5_unstable_mode.csv", ProfileTable(rho, v))
    if figure == 4:
        rho = np.linspace(0.0, 1.0, 513)
        out.write_table("fig4_f1.csv", ProfileTable(rho, f1.value(rho)))


def _interp_state(state, r, deriv=False):
    from .grid import lagrange_resample
    field = state.ut if deriv else state.u
    return lagrange_resample(state.grid.nodes(), field, np.asarray(r, float))


def _interp_gradient(state, r):
    from .grid import lagrange_resample
    nodes = state.grid.nodes()
    from .similarity import _fd_derivative_any
    return lagrange_resample(nodes, _fd_derivative_any(state), np.asarray(r, float))


def _figdata_kink(figure, out: _OutputTracker):
    """Kink blowup followed in similarity variables (coarse defaults)."""
    grid = RadialGrid(16.0, 1024)
    cfg = EvolutionConfig(grid=grid, t_end=20.0)
    state = make_initial_data(InitialDataSpec("kink", {"s": 1.0}), grid)
    _, rep = evolve(state, cfg)
    T = rep.T_estimate
    taus = (0.0, 1.0, 2.0) if figure == 6 else (3.0, 4.0, 5.0)
    tau0 = -math.log(T)
    for k, dtau in enumerate(taus):
        tau = tau0 + dtau
        t = T - math.exp(-tau)
        snap = min((s for s in rep.snapshots if s.t < T),
                   key=lambda s: abs(s.t - t), default=None)
        if snap is None:
            continue
        prof = rescaled_profile(snap, T, (0.0, 1.0))
        out.write_table(f"fig{figure}_frame_{k}.csv", prof)
    rho = np.linspace(0.0, 1.0, 513)
    out.write_table(f"fig{figure}_f0.csv", ProfileTable(rho, 2 * np.arctan(rho)))


_RUNNERS = {
    "selfsim": _run_selfsim,
    "spectrum": _run_spectrum,
    "static": _run_static,
    "evolve": _run_evolve,
    "simevolve": _run_simevolve,
    "bisect": _run_bisect,
    "transient": _run_transient,
    "figdata": _figdata,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="wavemaps")
    sub = parser.add_subparsers(dest="subcommand")
    for name, schema in _SCHEMAS.items():
        sp = sub.add_parser(name)
        for key in schema:
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2

    flag_values = {k: v for k, v in vars(args).items() if k != "subcommand"}
    started = time.monotonic()
    out_dir = (flag_values.get("out")
               or os.environ.get("WAVEMAPS_OUTDIR")
               or os.getcwd())
    tracker = _OutputTracker(out_dir)
    snapshot = {}
    status = "success"
    code = 0
    try:
        file_values = {}
        if flag_values.get("config"):
            file_values = parse_config(flag_values["config"])
        params, snapshot = _resolve(args.subcommand, file_values, flag_values)
        params["out"] = out_dir
        _RUNNERS[args.subcommand](params, tracker)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        status, code = f"usage error: {exc}", 2
    except (WavemapsError, ValueError) as exc:
        print(f"scientific failure: {exc}", file=sys.stderr)
        status, code = f"scientific failure: {exc}", 1
    manifest = RunManifest(
        subcommand=args.subcommand,
        config_snapshot=snapshot,
        tool_version=__version__,
        wall_time=time.monotonic() - started,
        outputs=tracker.digests(),
        status=status,
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
