"""Config-driven experiment runs, sweeps and file output.

A config is one JSON document.  Everything is validated before any file is
written, and every run is deterministic.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path

import numpy as np

from . import entangle as ent
from .errors import (ConfigError, GapClosedError, InvariantViolation,
                     SizingError, TopowalkError)
from .sshmodel import (BlochModel, boundary_transmission, effective_winding_from_graph,
                       winding_number)
from .walkgraph import (ChainSpec, LatticeGraph, PerturbationSchedule, RegionPhases,
                        boundary_peak_mass, build_chain, crossing_mass, evolve, inject,
                        spread_slope)

KINDS = ("walk", "boundary", "perturb", "winding-sweep", "transmission", "register",
         "entangle-bulk", "entangle-edge")
STEPPED = {"walk", "boundary", "perturb", "register", "entangle-bulk", "entangle-edge"}
MAX_GRID = 100_000
NORM_DRIFT = 1e-10

DEFAULT_PARAMS = {
    "walk": {"fit_start": 10, "boundary": None, "window": 2, "guard_ends": True},
    "boundary": {"fit_start": 10, "boundary": None, "window": 2, "guard_ends": True, "sweep_region": -1},
    "perturb": {"fit_start": 10, "boundary": None, "window": 2, "guard_ends": True},
    "winding-sweep": {"n_k": 1024},
    "transmission": {"k0": math.pi / 2, "sigma_k": 0.2 * math.pi, "checkpoints": 8},
    "register": {"n_qubits": 50, "seed": 2024, "mix_strength": 0.005, "flip_steps": 120,
                 "flip_half_width": 9},
    "entangle-bulk": {"sign": 1},
    "entangle-edge": {"sign": 1, "boundary": None, "window": 2},
}


@dataclass(frozen=True)
class Injection:
    cell: int
    subsite: str = "A"
    pol: str = "H"
    mode: str = "rightward"

    def to_dict(self) -> dict:
        return {"cell": self.cell, "subsite": self.subsite, "pol": self.pol, "mode": self.mode}


@dataclass(frozen=True)
class Sweep:
    mode: str
    axes: tuple  # ((name, (values...)), ...)

    def points(self) -> list[dict]:
        names = [n for n, _ in self.axes]
        if self.mode == "grid":
            combos = product(*[v for _, v in self.axes])
        else:
            combos = zip(*[v for _, v in self.axes])
        return [dict(zip(names, c)) for c in combos]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "axes": {n: list(v) for n, v in self.axes}}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    chains: tuple = ()
    injection: Injection | None = None
    steps: int | None = None
    perturbation: tuple = ()
    params: dict = field(default_factory=dict)
    sweep: Sweep | None = None
    name: str = ""
    description: str = ""

    def param(self, key):
        return self.params.get(key, DEFAULT_PARAMS[self.kind].get(key))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "name": self.name, "description": self.description,
               "chains": [spec_to_dict(c) for c in self.chains], "params": dict(self.params)}
        if self.injection is not None:
            out["injection"] = self.injection.to_dict()
        if self.steps is not None:
            out["steps"] = self.steps
        if self.perturbation:
            out["perturbation"] = [dict(e) for e in self.perturbation]
        if self.sweep is not None:
            out["sweep"] = self.sweep.to_dict()
        return out


def spec_to_dict(spec: ChainSpec) -> dict:
    return {
        "theta": spec.threeport_theta,
        "periodic": spec.periodic,
        "regions": [{"phi_a": r.phi_a, "phi_b_H": r.phi_b_H, "phi_b_V": r.phi_b_V, "cells": n}
                    for r, n in spec.regions],
    }


# parsing

class _Ctx:
    """Maps field paths to line numbers of the source text."""

    def __init__(self, text: str | None):
        self.text = text or ""

    def line(self, key: str) -> int | None:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def fail(self, path: str, msg: str):
        raise ConfigError(msg, field=path, line=self.line(path.split(".")[-1].split("[")[0]))


def _num(ctx, path, value, kind=float, lo=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        ctx.fail(path, f"expected a number, got {value!r}")
    if kind is int and (not float(value).is_integer()):
        ctx.fail(path, f"expected an integer, got {value!r}")
    value = kind(value)
    if not math.isfinite(value):
        ctx.fail(path, "must be finite")
    if lo is not None and value < lo:
        ctx.fail(path, f"must be >= {lo}, got {value}")
    return value


def _region(ctx, path, d) -> tuple[RegionPhases, int]:
    if not isinstance(d, dict):
        ctx.fail(path, "region must be an object")
    known = {"phi_a", "phi_b", "phi_b_H", "phi_b_V", "cells"}
    extra = set(d) - known
    if extra:
        ctx.fail(f"{path}.{sorted(extra)[0]}", "unknown region field")
    if "phi_a" not in d:
        ctx.fail(f"{path}.phi_a", "missing")
    phi_a = _num(ctx, f"{path}.phi_a", d["phi_a"])
    if "phi_b" in d:
        bh = bv = _num(ctx, f"{path}.phi_b", d["phi_b"])
    else:
        for k in ("phi_b_H", "phi_b_V"):
            if k not in d:
                ctx.fail(f"{path}.{k}", "missing (or give phi_b for both polarizations)")
        bh = _num(ctx, f"{path}.phi_b_H", d["phi_b_H"])
        bv = _num(ctx, f"{path}.phi_b_V", d["phi_b_V"])
    if "cells" not in d:
        ctx.fail(f"{path}.cells", "missing")
    return RegionPhases(phi_a, bh, bv), _num(ctx, f"{path}.cells", d["cells"], int, 1)


def _chain(ctx, path, d) -> ChainSpec:
    if not isinstance(d, dict):
        ctx.fail(path, "chain must be an object")
    regions = d.get("regions")
    if not isinstance(regions, list) or not regions:
        ctx.fail(f"{path}.regions", "must be a non-empty list")
    regs = tuple(_region(ctx, f"{path}.regions[{i}]", r) for i, r in enumerate(regions))
    theta = _num(ctx, f"{path}.theta", d.get("theta", -math.pi / 2))
    periodic = d.get("periodic", False)
    if not isinstance(periodic, bool):
        ctx.fail(f"{path}.periodic", "must be true or false")
    try:
        return ChainSpec(regs, theta, periodic)
    except TopowalkError as exc:
        ctx.fail(f"{path}.regions", str(exc))


def _values(ctx, path, v):
    if isinstance(v, dict):
        keys = {"start", "stop", "num"}
        if set(v) != keys:
            ctx.fail(path, "range must have exactly start, stop, num")
        num = _num(ctx, f"{path}.num", v["num"], int, 1)
        vals = np.linspace(_num(ctx, f"{path}.start", v["start"]), _num(ctx, f"{path}.stop", v["stop"]), num)
        return tuple(float(x) for x in vals)
    if not isinstance(v, list) or not v:
        ctx.fail(path, "sweep axis must be a non-empty list or a start/stop/num range")
    return tuple(x if isinstance(x, str) else _num(ctx, f"{path}[{i}]", x) for i, x in enumerate(v))


SWEEP_AXES = {
    "boundary": ({"phi_a", "phi_b"},),
    "winding-sweep": ({"phi_a", "phi_b", "pol"}, {"phi_a", "phi_b"}, {"v", "w"}),
    "transmission": ({"contrast"}, {"v", "w"}),
}


def _sweep(ctx, kind, d) -> Sweep:
    if not isinstance(d, dict):
        ctx.fail("sweep", "must be an object")
    mode = d.get("mode", "grid")
    if mode not in ("grid", "points"):
        ctx.fail("sweep.mode", "must be 'grid' or 'points'")
    axes = d.get("axes")
    if not isinstance(axes, dict) or not axes:
        ctx.fail("sweep.axes", "must be a non-empty object")
    allowed = SWEEP_AXES.get(kind)
    if allowed is None:
        ctx.fail("sweep", f"experiment kind '{kind}' does not take a sweep")
    if set(axes) not in allowed:
        ctx.fail("sweep.axes", f"axes for '{kind}' must be one of {[sorted(a) for a in allowed]}")
    parsed = tuple((n, _values(ctx, f"sweep.axes.{n}", axes[n])) for n in sorted(axes))
    if "pol" in axes and any(p not in ("H", "V") for p in dict(parsed)["pol"]):
        ctx.fail("sweep.axes.pol", "polarizations must be 'H' or 'V'")
    sizes = [len(v) for _, v in parsed]
    total = math.prod(sizes) if mode == "grid" else sizes[0]
    if mode == "points" and len(set(sizes)) != 1:
        ctx.fail("sweep.axes", "in points mode every axis needs the same length")
    if total > MAX_GRID:
        ctx.fail("sweep.axes", f"grid has {total} points; the limit is {MAX_GRID}")
    return Sweep(mode, parsed)


def _perturbation(ctx, entries, n_regions):
    if not isinstance(entries, list):
        ctx.fail("perturbation", "must be a list")
    out = []
    for i, e in enumerate(entries):
        p = f"perturbation[{i}]"
        if not isinstance(e, dict):
            ctx.fail(p, "entry must be an object")
        step = _num(ctx, f"{p}.step", e.get("step"), int, 0)
        region = _num(ctx, f"{p}.region", e.get("region"), int, 0)
        if region >= n_regions:
            ctx.fail(f"{p}.region", f"chain has only {n_regions} regions")
        entry = {"step": step, "region": region}
        if "copy_region" in e:
            src = _num(ctx, f"{p}.copy_region", e["copy_region"], int, 0)
            if src >= n_regions:
                ctx.fail(f"{p}.copy_region", f"chain has only {n_regions} regions")
            entry["copy_region"] = src
        elif "phases" in e:
            r, _ = _region(ctx, f"{p}.phases", dict(e["phases"], cells=1))
            entry["phases"] = {"phi_a": r.phi_a, "phi_b_H": r.phi_b_H, "phi_b_V": r.phi_b_V}
        else:
            ctx.fail(p, "needs 'copy_region' or 'phases'")
        out.append(entry)
    return tuple(out)


PARAM_RULES = {
    "fit_start": (int, 0, None), "window": (int, 1, None), "n_k": (int, 64, None),
    "checkpoints": (int, 1, None), "n_qubits": (int, 1, None), "seed": (int, 0, None),
    "flip_steps": (int, 1, None), "flip_half_width": (int, 0, None), "sweep_region": (int, None, None),
    "k0": (float, None, None), "sigma_k": (float, None, None), "mix_strength": (float, 0.0, 1.0),
}


def _check_param(ctx, key, value):
    path = f"params.{key}"
    if key == "guard_ends":
        if not isinstance(value, bool):
            ctx.fail(path, "must be true or false")
    elif key == "sign":
        if value not in (1, -1) or isinstance(value, bool):
            ctx.fail(path, "must be 1 or -1")
    elif key == "boundary":
        return  # checked against the chains below
    else:
        kind, lo, hi = PARAM_RULES[key]
        value = _num(ctx, path, value, kind, lo)
        if hi is not None and value > hi:
            ctx.fail(path, f"must be <= {hi}, got {value}")


def parse_config(data: dict | str, text: str | None = None) -> ExperimentConfig:
    """Validate a config mapping (or JSON text) into an :class:`ExperimentConfig`."""
    if isinstance(data, str):
        text = data
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    ctx = _Ctx(text)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", line=1)
    known = {"kind", "name", "description", "chains", "injection", "steps", "perturbation", "params", "sweep"}
    for key in data:
        if key not in known:
            ctx.fail(key, "unknown field")
    kind = data.get("kind")
    if kind not in KINDS:
        ctx.fail("kind", f"must be one of {list(KINDS)}, got {kind!r}")
    chains = data.get("chains", [])
    if not isinstance(chains, list):
        ctx.fail("chains", "must be a list")
    specs = tuple(_chain(ctx, f"chains[{i}]", c) for i, c in enumerate(chains))
    need = {"entangle-bulk": 2, "entangle-edge": 2}.get(kind, 0 if kind in ("winding-sweep", "transmission") else 1)
    if len(specs) < need:
        ctx.fail("chains", f"'{kind}' needs at least {need} chain(s)")

    params = data.get("params", {})
    if not isinstance(params, dict):
        ctx.fail("params", "must be an object")
    for key, value in params.items():
        if key not in DEFAULT_PARAMS[kind]:
            ctx.fail(f"params.{key}", f"unknown parameter for '{kind}'")
        _check_param(ctx, key, value)

    steps = data.get("steps")
    if kind in STEPPED:
        if steps is None:
            ctx.fail("steps", "missing")
        steps = _num(ctx, "steps", steps, int, 1)
    elif steps is not None:
        steps = _num(ctx, "steps", steps, int, 1)

    inj = None
    if "injection" in data:
        d = data["injection"]
        if not isinstance(d, dict):
            ctx.fail("injection", "must be an object")
        cell = _num(ctx, "injection.cell", d.get("cell"), int, 0)
        sub = d.get("subsite", "A")
        pol = d.get("pol", "H")
        mode = d.get("mode", "rightward")
        if sub not in ("A", "B"):
            ctx.fail("injection.subsite", "must be 'A' or 'B'")
        if pol not in ("H", "V"):
            ctx.fail("injection.pol", "must be 'H' or 'V'")
        if mode not in ("rightward", "symmetric"):
            ctx.fail("injection.mode", "must be 'rightward' or 'symmetric'")
        for i, s in enumerate(specs):
            if cell >= s.n_cells:
                ctx.fail("injection.cell", f"cell {cell} is outside chain {i} ({s.n_cells} cells)")
        inj = Injection(cell, sub, pol, mode)
    elif kind in STEPPED:
        ctx.fail("injection", "missing")

    for key in ("boundary",):
        b = params.get(key)
        if b is not None:
            b = _num(ctx, f"params.{key}", b, int, 1)
            for s in specs:
                if b >= s.n_cells:
                    ctx.fail(f"params.{key}", f"boundary {b} is outside the chain")
    if kind in ("boundary", "perturb", "entangle-edge") and params.get("boundary") is None:
        if not specs[0].boundary_positions:
            ctx.fail("chains[0].regions", f"'{kind}' needs a chain with at least two regions")

    pert = ()
    if "perturbation" in data:
        pert = _perturbation(ctx, data["perturbation"], len(specs[0].regions) if specs else 0)
    if kind == "perturb" and not pert:
        ctx.fail("perturbation", "'perturb' needs a non-empty perturbation schedule")

    sweep = _sweep(ctx, kind, data["sweep"]) if "sweep" in data else None
    if kind in ("winding-sweep", "transmission") and sweep is None:
        ctx.fail("sweep", f"'{kind}' needs a sweep")

    return ExperimentConfig(kind, specs, inj, steps, pert, dict(params), sweep,
                            str(data.get("name", "")), str(data.get("description", "")))


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text)


def preset_names() -> list[str]:
    files = resources.files("topowalk").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    f = resources.files("topowalk").joinpath("presets", f"{name}.json")
    if not f.is_file():
        raise ConfigError(f"no preset named '{name}' (try --list-presets)", field="preset")
    return parse_config(f.read_text())


# running

@dataclass
class RunResult:
    summary: dict
    files: dict  # filename -> text
    lines: list


def _schedule(cfg: ExperimentConfig, spec: ChainSpec) -> PerturbationSchedule | None:
    if not cfg.perturbation:
        return None
    entries = []
    for e in cfg.perturbation:
        if "copy_region" in e:
            phases = spec.regions[e["copy_region"]][0]
        else:
            phases = RegionPhases(**e["phases"])
        entries.append((e["step"], {e["region"]: phases}))
    return PerturbationSchedule(tuple(entries))


def _check_norm(value: float, what: str):
    if abs(value - 1) > NORM_DRIFT:
        raise InvariantViolation("norm conservation", f"{what}: |psi|^2 = {value!r}")


def _walk(cfg: ExperimentConfig, spec: ChainSpec, schedule=None):
    g = build_chain(spec)
    inj = cfg.injection
    state = inject(g, inj.cell, inj.subsite, inj.pol, inj.mode)
    try:
        final, hist = evolve(state, g, cfg.steps, schedule, guard_ends=bool(cfg.param("guard_ends")))
    except SizingError as exc:
        raise InvariantViolation("wavefront inside chain", str(exc)) from None
    _check_norm(final.norm_squared(), "walk")
    return g, final, hist


def _boundary_of(cfg: ExperimentConfig, spec: ChainSpec):
    b = cfg.param("boundary")
    if b is None and spec.boundary_positions:
        b = spec.boundary_positions[0]
    return b


def _walk_summary(cfg, spec, hist, boundary):
    out = {"spec": spec_to_dict(spec), "steps": cfg.steps, "injection": cfg.injection.to_dict()}
    try:
        fit = spread_slope(hist, start=cfg.param("fit_start"))
        out["spread_slope"], out["r2"] = fit.slope, fit.r2
    except TopowalkError:
        out["spread_slope"], out["r2"] = None, None
    if boundary is not None:
        w = cfg.param("window")
        out["boundary"] = boundary
        out["crossing_mass"] = crossing_mass(hist[-1], boundary, "right")
        out["crossing_mass_left"] = crossing_mass(hist[-1], boundary, "left")
        out["boundary_peak_mass_final"] = float(boundary_peak_mass(hist[-1:], boundary, w)[0])
    else:
        out["crossing_mass"] = None
        out["boundary_peak_mass_final"] = None
    return out


def _history_text(hist) -> str:
    buf = io.StringIO()
    _write_history(hist, buf)
    return buf.getvalue()


def _write_history(hist, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["step", "cell", "subsite", "probability"])
    for d in hist:
        cells, subs = np.nonzero(d.probabilities > 1e-15)
        for c, s in zip(cells, subs):
            w.writerow([d.step, int(c), "AB"[s], repr(float(d.probabilities[c, s]))])


def _peak_text(hist, boundary, window) -> str:
    series = boundary_peak_mass(hist, boundary, window)
    lines = ["step,boundary_peak_mass"] + [f"{d.step},{v!r}" for d, v in zip(hist, map(float, series))]
    return "\n".join(lines) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if x is None else (repr(float(x)) if isinstance(x, (float, np.floating)) else x)
                    for x in row])
    return buf.getvalue()


def _manifest(cfg, files: dict) -> str:
    axes = {
        "distribution.csv": {"x": "cell", "y": "probability", "series": "subsite", "frame": "step"},
        "boundary_peak.csv": {"x": "step", "y": "boundary_peak_mass"},
        "sweep.csv": {"x": [n for n, _ in cfg.sweep.axes] if cfg.sweep else None},
    }
    out = {"name": cfg.name, "kind": cfg.kind, "description": cfg.description,
           "files": {k: axes.get(k, {}) for k in sorted(files) if k != "manifest.json"}}
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def _run_walk(cfg: ExperimentConfig, pool=None) -> RunResult:
    spec = cfg.chains[0]
    schedule = _schedule(cfg, spec)
    g, final, hist = _walk(cfg, spec, schedule)
    boundary = _boundary_of(cfg, spec)
    summary = {"kind": cfg.kind, "name": cfg.name, **_walk_summary(cfg, spec, hist, boundary)}
    files = {"distribution.csv": _history_text(hist)}
    if boundary is not None:
        files["boundary_peak.csv"] = _peak_text(hist, boundary, cfg.param("window"))
    if cfg.kind == "perturb":
        _, _, base = _walk(cfg, spec, None)
        base_cross = crossing_mass(base[-1], boundary, "right")
        summary["crossing_mass_unperturbed"] = base_cross
        summary["crossing_ratio"] = summary["crossing_mass"] / base_cross if base_cross > 0 else None
        summary["perturbation"] = [dict(e) for e in cfg.perturbation]
    if cfg.sweep is not None:
        rows = _map(pool, _boundary_point, [(cfg.to_dict(), p) for p in cfg.sweep.points()])
        header = ["index", "phi_a", "phi_b", "nu_left", "nu_right", "min_gap", "boundary_peak_mass_final",
                  "crossing_mass"]
        files["sweep.csv"] = _csv_text(header, [[i, *r] for i, r in enumerate(rows)])
        summary["sweep_points"] = len(rows)
    lines = [f"{k}: {summary[k]}" for k in ("spread_slope", "r2", "crossing_mass", "crossing_mass_left",
                                              "boundary_peak_mass_final", "crossing_mass_unperturbed",
                                              "crossing_ratio")
             if summary.get(k) is not None]
    return RunResult(summary, files, lines)


def _region_nu(spec: ChainSpec, region: int, pol):
    g = LatticeGraph(ChainSpec.uniform(spec.regions[region][0], 3, threeport_theta=spec.threeport_theta,
                                       periodic=True))
    try:
        r = effective_winding_from_graph(g, pol)
        return r.nu, r.min_gap
    except GapClosedError:
        return None, 0.0


def _boundary_point(args):
    cfg_dict, point = args
    cfg = parse_config(cfg_dict)
    spec = cfg.chains[0]
    idx = cfg.param("sweep_region") % len(spec.regions)
    spec = spec.with_region_phases({idx: RegionPhases.uniform(point["phi_a"], point["phi_b"])})
    _, _, hist = _walk(cfg, spec)
    b = _boundary_of(cfg, spec)
    pol = cfg.injection.pol
    nus = [_region_nu(spec, i, pol) for i in range(len(spec.regions))]
    gap = min(g for _, g in nus)
    peak = float(boundary_peak_mass(hist[-1:], b, cfg.param("window"))[0])
    return [point["phi_a"], point["phi_b"], nus[0][0], nus[-1][0], gap, peak,
            crossing_mass(hist[-1], b, "right")]


def _winding_point(args):
    point, params = args
    if "v" in point:
        m = BlochModel(point["v"], point["w"])
        try:
            nu = winding_number(m, params["n_k"]).nu
        except GapClosedError:
            nu = None
        return [point["v"], point["w"], nu, 2 * abs(m.v - m.w)]
    spec = ChainSpec.uniform(RegionPhases.uniform(point["phi_a"], point["phi_b"]), 3,
                             threeport_theta=params["theta"], periodic=True)
    pol = point.get("pol", "H")
    try:
        r = effective_winding_from_graph(LatticeGraph(spec), pol, params["n_k"])
        nu, gap = r.nu, r.min_gap
    except GapClosedError:
        nu, gap = None, 0.0
    except TopowalkError:  # a diamond that traps light has no scattering matrix
        nu, gap = None, 0.0
    return [point["phi_a"], point["phi_b"], pol, nu, gap]


def _transmission_point(args):
    point, params = args
    if "contrast" in point:
        r = point["contrast"]
        v, w = (1 + r) / 2, (1 - r) / 2
    else:
        v, w = point["v"], point["w"]
    res = boundary_transmission(v, w, params["k0"], params["sigma_k"], params["checkpoints"], detail=True)
    return [v, w, abs(v - w) / (v + w), res.transmission, res.reflection]


def _map(pool, fn, items):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * (pool._max_workers or 1)))))


def _run_winding(cfg, pool=None) -> RunResult:
    points = cfg.sweep.points()
    theta = cfg.chains[0].threeport_theta if cfg.chains else -math.pi / 2
    params = {"n_k": cfg.param("n_k"), "theta": theta}
    rows = _map(pool, _winding_point, [(p, params) for p in points])
    if "v" in points[0]:
        header = ["v", "w", "nu", "gap"]
    else:
        header = ["phi_a", "phi_b", "pol", "nu", "min_gap"]
    summary = {"kind": cfg.kind, "name": cfg.name, "points": len(rows),
               "nu_counts": {str(k): sum(1 for r in rows if r[-2] == k) for k in (0, 1, None)}}
    return RunResult(summary, {"sweep.csv": _csv_text(header, rows)}, [f"points: {len(rows)}"])


def _run_transmission(cfg, pool=None) -> RunResult:
    params = {k: cfg.param(k) for k in ("k0", "sigma_k", "checkpoints")}
    try:
        rows = _map(pool, _transmission_point, [(p, params) for p in cfg.sweep.points()])
    except SizingError as exc:
        raise InvariantViolation("wavefront inside chain", str(exc)) from None
    for r in rows:
        if abs(r[3] + r[4] - 1) > 1e-9:
            raise InvariantViolation("transmission + reflection = 1", f"got {r[3] + r[4]!r} at v={r[0]}, w={r[1]}")
    summary = {"kind": cfg.kind, "name": cfg.name, "points": len(rows),
               "transmission": [r[3] for r in rows]}
    text = _csv_text(["v", "w", "contrast", "transmission", "reflection"], rows)
    return RunResult(summary, {"sweep.csv": text}, [f"points: {len(rows)}"])


def _run_register(cfg, pool=None) -> RunResult:
    ring = build_chain(cfg.chains[0])
    rng = np.random.default_rng(cfg.param("seed"))
    qubits = [ent.PolarizationQubit.random(rng) for _ in range(cfg.param("n_qubits"))]
    inj = cfg.injection
    err = 0.0
    for q in qubits:
        st = ent.register_write(q, ring, inj.cell, inj.subsite, inj.mode)
        st, _ = evolve(st, ring, cfg.steps, record=False)
        _check_norm(st.norm_squared(), "register")
        p_h, p_v = ent.register_read(st)
        err = max(err, abs(p_h - q.probabilities[0]), abs(p_v - q.probabilities[1]))
    kw = dict(steps=cfg.param("flip_steps"), half_width=cfg.param("flip_half_width"))
    h = ent.PolarizationQubit(1, 0)
    flip = ent.polarization_flip_rate(ring, h, cfg.param("mix_strength"), **kw)
    summary = ent.report(None, flip_rate=flip, register_fidelity=1 - err)
    summary.update({"kind": cfg.kind, "name": cfg.name, "readout_error_max": err,
                    "mix_strength": cfg.param("mix_strength"), "storage_steps": cfg.steps})
    if len(cfg.chains) > 1:
        trivial = build_chain(cfg.chains[1])
        ft = ent.polarization_flip_rate(trivial, h, cfg.param("mix_strength"), **kw)
        summary["flip_rate_reference"] = ft
        summary["suppression"] = ft / flip if flip > 0 else None
    return RunResult(summary, {}, [f"readout_error_max: {err}", f"flip_rate: {flip}"])


def _run_entangle(cfg, pool=None) -> RunResult:
    up, lo = build_chain(cfg.chains[0]), build_chain(cfg.chains[1])
    inj = cfg.injection
    st = ent.bell_state(cfg.param("sign"), (up, lo), inj.cell, inj.subsite, inj.mode)
    s0 = ent.entanglement_entropy(st)
    st = ent.evolve_two_photon(st, cfg.steps)
    _check_norm(st.norm_squared(), "two-photon state")
    s1 = ent.entanglement_entropy(st)
    edge = None
    extra = {"kind": cfg.kind, "name": cfg.name, "entropy_bits_initial": s0, "steps": cfg.steps}
    if cfg.kind == "entangle-edge":
        b = _boundary_of(cfg, cfg.chains[0])
        edge = ent.edge_projection(st, b, cfg.param("window"))
        extra["edge_entropy_bits"] = edge.entropy_bits()
    summary = ent.report(None, entropy_bits=s1, edge=edge, extra=extra)
    lines = [f"entropy_bits: {s1}"]
    if edge is not None:
        lines.append(f"edge_probabilities: {edge.probabilities().round(6).tolist()} residual: {edge.residual:.6f}")
    return RunResult(summary, {}, lines)


RUNNERS = {"walk": _run_walk, "boundary": _run_walk, "perturb": _run_walk,
           "winding-sweep": _run_winding, "transmission": _run_transmission,
           "register": _run_register, "entangle-bulk": _run_entangle, "entangle-edge": _run_entangle}


def run(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """Run an experiment in memory; nothing is written."""
    workers = (os.cpu_count() or 1) if threads == 0 else threads
    has_points = cfg.sweep is not None and len(cfg.sweep.points()) > 1
    if workers > 1 and has_points:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            res = RUNNERS[cfg.kind](cfg, pool)
    else:
        res = RUNNERS[cfg.kind](cfg, None)
    res.summary["config"] = cfg.to_dict()
    res.files["summary.json"] = json.dumps(_jsonable(res.summary), indent=2, sort_keys=True) + "\n"
    res.files["manifest.json"] = _manifest(cfg, res.files)
    return res


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_outputs(result: RunResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(result.files):
        p = out / name
        p.write_text(result.files[name])
        written.append(p)
    return written


def config_copy(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    d = copy.deepcopy(cfg.to_dict())
    d.update(changes)
    return parse_config(d)
