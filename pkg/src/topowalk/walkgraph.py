"""Chains of diamond-graph unit cells and discrete-time walks on them.

A unit cell holds two diamonds, subsite ``A`` (phase ``phi_a``) followed by
subsite ``B`` (phase ``phi_b``), i.e. four three-ports.  Cell ``n`` sits at
``x = n``; its subsites at ``n - 1/4`` and ``n + 1/4``.

Two resolutions of the same lattice are available:

``"diamond"``
    every diamond is one two-port scatterer (internal round trips summed to
    steady state).  One step moves a photon from one diamond to the next.  All
    experiments use this resolution.
``"multiport"``
    every three-port scatters separately and every edge, internal ones
    included, takes one step.

A walk state is a complex vector over directed edges for each polarization.
Amplitude on edge ``e`` is the photon travelling from ``src[e]`` to
``dst[e]``; one step scatters at every node and re-emits onto outgoing edges.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import FitError, InvalidParameterError, InvalidSpecError, SizingError
from .multiport import build_threeport, compose_diamond

TWO_PI = 2.0 * math.pi
DEFAULT_THETA = -math.pi / 2
POLARIZATIONS = ("H", "V")
SUBSITES = ("A", "B")
RESOLUTIONS = ("diamond", "multiport")

PORT_A, PORT_B, PORT_C = 0, 1, 2
PORT_L, PORT_R = 0, 1


def pol_index(pol) -> int:
    if pol in (0, "H", "h"):
        return 0
    if pol in (1, "V", "v"):
        return 1
    raise InvalidParameterError(f"polarization must be 'H' or 'V', got {pol!r}")


def subsite_index(subsite) -> int:
    if subsite in (0, "A", "a"):
        return 0
    if subsite in (1, "B", "b"):
        return 1
    raise InvalidParameterError(f"subsite must be 'A' or 'B', got {subsite!r}")


def wrap_phase(phi: float) -> float:
    phi = float(phi)
    if not math.isfinite(phi):
        raise InvalidParameterError(f"phase must be finite, got {phi!r}")
    return (phi + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class RegionPhases:
    """Diamond phases of one region; only ``phi_b`` depends on polarization.

    Values are stored wrapped into ``[-pi, pi)``.
    """

    phi_a: float
    phi_b_H: float
    phi_b_V: float

    def __post_init__(self):
        for name in ("phi_a", "phi_b_H", "phi_b_V"):
            object.__setattr__(self, name, wrap_phase(getattr(self, name)))

    @classmethod
    def uniform(cls, phi_a: float, phi_b: float) -> "RegionPhases":
        """Same phases for both polarizations."""
        return cls(phi_a, phi_b, phi_b)

    def phi_b(self, pol) -> float:
        return self.phi_b_V if pol_index(pol) else self.phi_b_H

    def pair(self, pol) -> tuple[float, float]:
        return self.phi_a, self.phi_b(pol)

    def to_dict(self) -> dict:
        return {"phi_a": self.phi_a, "phi_b_H": self.phi_b_H, "phi_b_V": self.phi_b_V}


@dataclass(frozen=True)
class ChainSpec:
    regions: tuple
    threeport_theta: float = DEFAULT_THETA
    periodic: bool = False

    def __post_init__(self):
        regions = tuple((r, int(n)) for r, n in self.regions)
        if not regions:
            raise InvalidSpecError("a chain needs at least one region")
        for r, n in regions:
            if not isinstance(r, RegionPhases):
                raise InvalidSpecError(f"region phases must be RegionPhases, got {type(r).__name__}")
            if n < 1:
                raise InvalidSpecError(f"region cell counts must be >= 1, got {n}")
        total = sum(n for _, n in regions)
        if total < 2:
            raise InvalidSpecError(f"a chain needs at least 2 cells, got {total}")
        theta = float(self.threeport_theta)
        if not math.isfinite(theta):
            raise InvalidSpecError("threeport_theta must be finite")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "threeport_theta", theta)
        object.__setattr__(self, "periodic", bool(self.periodic))

    @classmethod
    def uniform(cls, phases: RegionPhases, cells: int, **kw) -> "ChainSpec":
        return cls(((phases, cells),), **kw)

    @property
    def n_cells(self) -> int:
        return sum(n for _, n in self.regions)

    @property
    def boundary_positions(self) -> tuple[int, ...]:
        """First cell of every region after the first."""
        edges = np.cumsum([n for _, n in self.regions])[:-1]
        return tuple(int(e) for e in edges)

    def region_of_cell(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.regions)), [n for _, n in self.regions])

    def with_region_phases(self, overrides: Mapping[int, RegionPhases]) -> "ChainSpec":
        regions = list(self.regions)
        for i, phases in overrides.items():
            regions[int(i)] = (phases, regions[int(i)][1])
        return ChainSpec(tuple(regions), self.threeport_theta, self.periodic)

    def to_dict(self) -> dict:
        return {
            "theta": self.threeport_theta,
            "periodic": self.periodic,
            "regions": [dict(r.to_dict(), cells=n) for r, n in self.regions],
        }


@dataclass(frozen=True)
class EdgeTable:
    """Directed edges of a scattering network (one row per edge)."""

    src: np.ndarray
    src_port: np.ndarray
    dst: np.ndarray
    dst_port: np.ndarray
    reverse: np.ndarray
    n_nodes: int
    n_ports: int

    def __len__(self) -> int:
        return len(self.src)

    def incoming(self) -> np.ndarray:
        """``incoming[node, port]`` is the edge that arrives there."""
        table = np.full((self.n_nodes, self.n_ports), -1, dtype=np.int64)
        table[self.dst, self.dst_port] = np.arange(len(self))
        return table

    def outgoing(self) -> np.ndarray:
        table = np.full((self.n_nodes, self.n_ports), -1, dtype=np.int64)
        table[self.src, self.src_port] = np.arange(len(self))
        return table


def _edge_table(links, loops, n_nodes, n_ports) -> EdgeTable:
    src, sport, dst, dport, rev = [], [], [], [], []
    for (a, pa, b, pb) in links:
        i = len(src)
        src += [a, b]
        sport += [pa, pb]
        dst += [b, a]
        dport += [pb, pa]
        rev += [i + 1, i]
    for (a, pa) in loops:
        rev.append(len(src))
        src.append(a)
        sport.append(pa)
        dst.append(a)
        dport.append(pa)
    arr = lambda x: np.asarray(x, dtype=np.int64)
    return EdgeTable(arr(src), arr(sport), arr(dst), arr(dport), arr(rev), n_nodes, n_ports)


class LatticeGraph:
    """Scattering network of a :class:`ChainSpec` (treat as immutable).

    Diamond ``d`` belongs to cell ``d // 2`` and subsite ``d % 2``; its two
    three-ports are vertices ``2d`` (left) and ``2d + 1`` (right).
    """

    def __init__(self, spec: ChainSpec):
        self.spec = spec
        self.n_cells = spec.n_cells
        self.n_diamonds = 2 * self.n_cells
        self.n_vertices = 4 * self.n_cells
        self.threeport = build_threeport(spec.threeport_theta)

        region = spec.region_of_cell()
        phases = np.empty((2, self.n_diamonds))
        for p in range(2):
            for cell, r in enumerate(region):
                phi_a, phi_b = spec.regions[r][0].pair(p)
                phases[p, 2 * cell] = phi_a
                phases[p, 2 * cell + 1] = phi_b
        phases.setflags(write=False)
        self.diamond_phases = phases
        self.cell_region = region

        nd = self.n_diamonds
        links = [(d, PORT_R, d + 1, PORT_L) for d in range(nd - 1)]
        loops = []
        if spec.periodic:
            links.append((nd - 1, PORT_R, 0, PORT_L))
        else:
            loops = [(0, PORT_L), (nd - 1, PORT_R)]
        self._diamond_edges = _edge_table(links, loops, nd, 2)

        links, shifter = [], []
        for d in range(nd):
            links.append((2 * d, PORT_B, 2 * d + 1, PORT_B))
            links.append((2 * d, PORT_C, 2 * d + 1, PORT_C))
            shifter.append(d)
            if d + 1 < nd:
                links.append((2 * d + 1, PORT_A, 2 * d + 2, PORT_A))
        loops = []
        if spec.periodic:
            links.append((2 * nd - 1, PORT_A, 0, PORT_A))
        else:
            loops = [(0, PORT_A), (2 * nd - 1, PORT_A)]
        self._multiport_edges = _edge_table(links, loops, self.n_vertices, 3)
        mp = self._multiport_edges
        on_c = (mp.src_port == PORT_C) & (mp.dst_port == PORT_C) & (mp.src // 2 == mp.dst // 2)
        self._shifter_edges = on_c
        self._op_cache: dict = {}
        self._unit_cache: dict = {}

    def __repr__(self) -> str:
        return f"LatticeGraph(cells={self.n_cells}, regions={len(self.spec.regions)}, periodic={self.spec.periodic})"

    @property
    def boundary_positions(self) -> tuple[int, ...]:
        return self.spec.boundary_positions

    @property
    def is_uniform(self) -> bool:
        return len({r for r, _ in self.spec.regions}) == 1

    def edges(self, resolution: str = "diamond") -> EdgeTable:
        if resolution == "diamond":
            return self._diamond_edges
        if resolution == "multiport":
            return self._multiport_edges
        raise InvalidParameterError(f"resolution must be one of {RESOLUTIONS}, got {resolution!r}")

    def n_edges(self, resolution: str = "diamond") -> int:
        return len(self.edges(resolution))

    def edge_diamond(self, resolution: str = "diamond") -> np.ndarray:
        """Diamond each directed edge leaves from."""
        src = self.edges(resolution).src
        return src if resolution == "diamond" else src // 2

    def edge_site(self, resolution: str = "diamond") -> np.ndarray:
        """Flat ``2 * cell + subsite`` index of the subsite each edge leaves."""
        return self.edge_diamond(resolution)

    def edge_phases(self, pol) -> np.ndarray:
        """Multiport-resolution phase factor picked up on every directed edge."""
        p = pol_index(pol)
        mp = self._multiport_edges
        out = np.ones(len(mp), dtype=complex)
        d = mp.src[self._shifter_edges] // 2
        out[self._shifter_edges] = np.exp(1j * self.diamond_phases[p, d])
        return out

    def diamond_unit(self, diamond: int, pol):
        phi = float(self.diamond_phases[pol_index(pol), diamond])
        unit = self._unit_cache.get(phi)
        if unit is None:
            unit = compose_diamond(phi, self.threeport, self.threeport)
            self._unit_cache[phi] = unit
        return unit

    def with_region_phases(self, overrides: Mapping[int, RegionPhases]) -> "LatticeGraph":
        return LatticeGraph(self.spec.with_region_phases(overrides))

    def region_graph(self, index: int, cells: int = 3) -> "LatticeGraph":
        """Uniform periodic graph carrying region ``index``'s phases."""
        phases = self.spec.regions[index][0]
        return LatticeGraph(ChainSpec.uniform(phases, cells, threeport_theta=self.spec.threeport_theta, periodic=True))

    def vertex_degree(self) -> np.ndarray:
        """Number of incident edge pairs per multiport vertex."""
        mp = self._multiport_edges
        return np.bincount(mp.src, minlength=self.n_vertices)


def build_chain(spec: ChainSpec) -> LatticeGraph:
    if not isinstance(spec, ChainSpec):
        raise InvalidSpecError("build_chain expects a ChainSpec")
    return LatticeGraph(spec)


def _assemble(table: EdgeTable, node_mats: np.ndarray, edge_phase: np.ndarray) -> sp.csr_matrix:
    inc = table.incoming()
    n = len(table)
    rows = np.repeat(np.arange(n), table.n_ports)
    cols = inc[table.src].ravel()
    vals = (node_mats[table.src, table.src_port, :] * edge_phase[:, None]).ravel()
    keep = cols >= 0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))


def step_operator(graph: LatticeGraph, pol, resolution: str = "diamond") -> sp.csr_matrix:
    """Sparse one-step unitary over directed edges for polarization ``pol``."""
    p = pol_index(pol)
    key = (p, resolution)
    op = graph._op_cache.get(key)
    if op is not None:
        return op
    table = graph.edges(resolution)
    if resolution == "diamond":
        mats = np.stack([graph.diamond_unit(d, p).smatrix for d in range(graph.n_diamonds)])
        phase = np.ones(len(table), dtype=complex)
    else:
        mats = np.broadcast_to(graph.threeport.matrix, (graph.n_vertices, 3, 3))
        phase = graph.edge_phases(p)
    op = _assemble(table, mats, phase)
    graph._op_cache[key] = op
    return op


@dataclass
class WalkState:
    """Edge amplitudes for both polarizations; ``amplitudes[pol, edge]``."""

    graph: LatticeGraph = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    step: int = 0
    resolution: str = "diamond"

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def polarization_weights(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    def copy(self) -> "WalkState":
        return WalkState(self.graph, self.amplitudes.copy(), self.step, self.resolution)

    def vector(self) -> np.ndarray:
        """Flattened single-photon vector (polarization major)."""
        return self.amplitudes.ravel()


@dataclass
class Distribution:
    """Site-resolved probabilities ``probabilities[cell, subsite]``."""

    probabilities: np.ndarray
    step: int = 0

    @property
    def n_cells(self) -> int:
        return self.probabilities.shape[0]

    def total(self) -> float:
        return float(self.probabilities.sum())

    def cells(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    def positions(self) -> np.ndarray:
        n = np.arange(self.n_cells, dtype=float)[:, None]
        return n + np.array([-0.25, 0.25])

    def mean(self) -> float:
        return float(np.sum(self.positions() * self.probabilities) / self.total())

    def std(self) -> float:
        x = self.positions()
        w = self.probabilities / self.total()
        mu = np.sum(x * w)
        return float(math.sqrt(max(np.sum(w * (x - mu) ** 2), 0.0)))


@dataclass(frozen=True)
class PerturbationSchedule:
    """``entries``: ``(step, {region_index: RegionPhases})`` pairs.

    An entry at step ``s`` replaces the phases for the transition from step
    ``s`` to ``s + 1`` only.
    """

    entries: tuple = ()

    def __post_init__(self):
        entries = []
        for s, overrides in self.entries:
            if int(s) < 0:
                raise InvalidParameterError("perturbation steps must be >= 0")
            entries.append((int(s), dict(overrides)))
        object.__setattr__(self, "entries", tuple(sorted(entries, key=lambda e: e[0])))

    @classmethod
    def jolt(cls, step: int, graph: LatticeGraph, source_region: int = 1, target_region: int = 0):
        """Copy one region's phases onto another for a single step."""
        return cls(((step, {target_region: graph.spec.regions[source_region][0]}),))

    def overrides_at(self, step: int) -> dict | None:
        merged = None
        for s, overrides in self.entries:
            if s == step:
                merged = {**(merged or {}), **overrides}
        return merged


def inject(graph: LatticeGraph, cell: int, subsite="A", pol="H", mode: str = "rightward",
           resolution: str = "diamond") -> WalkState:
    """Single photon leaving the given subsite's diamond.

    ``mode="rightward"`` puts unit amplitude on the edge leaving through the
    diamond's right port; ``"symmetric"`` splits it equally over both ports.
    """
    if not 0 <= int(cell) < graph.n_cells:
        raise IndexError(f"cell {cell} outside chain of {graph.n_cells} cells")
    d = 2 * int(cell) + subsite_index(subsite)
    p = pol_index(pol)
    table = graph.edges(resolution)
    out = table.outgoing()
    if resolution == "diamond":
        right, left = out[d, PORT_R], out[d, PORT_L]
    else:
        right, left = out[2 * d + 1, PORT_A], out[2 * d, PORT_A]
    amps = np.zeros((2, len(table)), dtype=complex)
    if mode == "rightward":
        amps[p, right] = 1.0
    elif mode == "symmetric":
        amps[p, right] = amps[p, left] = 1.0 / math.sqrt(2.0)
    else:
        raise InvalidParameterError(f"injection mode must be 'rightward' or 'symmetric', got {mode!r}")
    return WalkState(graph, amps, 0, resolution)


def position_distribution(state: WalkState) -> Distribution:
    """Assign each directed edge's probability to the subsite it leaves."""
    g = state.graph
    site = g.edge_site(state.resolution)
    prob = np.sum(np.abs(state.amplitudes) ** 2, axis=0)
    cells = np.bincount(site, weights=prob, minlength=g.n_diamonds)
    return Distribution(cells.reshape(g.n_cells, 2), state.step)


def check_chain_ends(dist: Distribution, margin: int = 1, tol: float = 1e-12) -> None:
    """Raise :class:`SizingError` if probability has reached the outer cells."""
    cells = dist.cells()
    edge_mass = cells[:margin].sum() + cells[-margin:].sum()
    if edge_mass > tol:
        raise SizingError(f"wavefront reached the chain end at step {dist.step} (mass {edge_mass:.3e})")


def evolve(state: WalkState, graph: LatticeGraph | None = None, steps: int = 0,
           perturbation: PerturbationSchedule | None = None, record: bool = True,
           guard_ends: bool = False):
    """Apply ``steps`` walk steps.  Returns ``(final_state, history)``.

    ``history`` holds the distribution before the first step and after every
    step (``steps + 1`` entries) when ``record`` is set.
    """
    if steps < 0:
        raise InvalidParameterError("steps must be >= 0")
    graph = graph or state.graph
    if graph.n_edges(state.resolution) != state.amplitudes.shape[1]:
        raise InvalidParameterError("state and graph have different edge sets")
    res = state.resolution
    ops = [step_operator(graph, p, res) for p in range(2)]
    amps = state.amplitudes.copy()
    live = [bool(np.any(amps[p])) for p in range(2)]
    periodic = graph.spec.periodic
    cur = WalkState(graph, amps, state.step, res)
    history = [position_distribution(cur)] if record else []
    for i in range(steps):
        t = state.step + i
        overrides = perturbation.overrides_at(t) if perturbation else None
        if overrides:
            jolted = graph.with_region_phases(overrides)
            use = [step_operator(jolted, p, res) for p in range(2)]
        else:
            use = ops
        for p in range(2):
            if live[p]:
                amps[p] = use[p] @ amps[p]
        cur = WalkState(graph, amps, t + 1, res)
        if record or guard_ends:
            dist = position_distribution(cur)
            if guard_ends and not periodic:
                check_chain_ends(dist)
            if record:
                history.append(dist)
    return WalkState(graph, amps.copy(), state.step + steps, res), history


@dataclass(frozen=True)
class SpreadFit:
    slope: float
    intercept: float
    r2: float
    model: str = "linear"


def std_series(history: Sequence[Distribution]) -> tuple[np.ndarray, np.ndarray]:
    steps = np.array([d.step for d in history], dtype=float)
    stds = np.array([d.std() for d in history])
    return steps, stds


def _linear_fit(x, y) -> tuple[float, float, float]:
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def spread_slope(history: Sequence[Distribution], start: int = 0, model: str = "linear") -> SpreadFit:
    """Least-squares fit of position standard deviation against step.

    ``model="sqrt"`` regresses against ``sqrt(step)`` instead, the diffusive
    law; the slope is then the diffusion prefactor.
    """
    hist = [d for d in history if d.step >= start]
    if len(hist) < 10:
        raise InvalidParameterError(f"need at least 10 history entries, got {len(hist)}")
    steps, stds = std_series(hist)
    if np.all(stds == 0.0):
        raise FitError("position spread is identically zero; nothing to fit")
    if model == "linear":
        x = steps
    elif model == "sqrt":
        x = np.sqrt(steps)
    else:
        raise InvalidParameterError(f"unknown spread model {model!r}")
    slope, intercept, r2 = _linear_fit(x, stds)
    return SpreadFit(slope, intercept, r2, model)


def crossing_mass(dist: Distribution, boundary_cell: int, side: str = "right") -> float:
    """Probability strictly beyond the interface in front of ``boundary_cell``.

    The interface lies between cells ``boundary_cell - 1`` and
    ``boundary_cell``; those two cells hold the bound state and count for
    neither side.
    """
    b = int(boundary_cell)
    if not 0 < b < dist.n_cells:
        raise InvalidParameterError(f"boundary cell {b} is not interior to the chain")
    cells = dist.cells()
    if side == "right":
        return float(cells[b + 1:].sum())
    if side == "left":
        return float(cells[:max(b - 1, 0)].sum())
    raise InvalidParameterError(f"side must be 'left' or 'right', got {side!r}")


def boundary_peak_mass(history: Iterable[Distribution], boundary_cell: int, window: int = 2) -> np.ndarray:
    """Probability within ``window`` cells of ``boundary_cell`` at every step."""
    if window < 1:
        raise InvalidParameterError("window must be >= 1")
    out = []
    for d in history:
        lo = max(int(boundary_cell) - window, 0)
        out.append(d.cells()[lo:int(boundary_cell) + window + 1].sum())
    return np.array(out)


def classical_walk(state: WalkState, steps: int) -> list[Distribution]:
    """Random walk with the same edge graph and transition probabilities ``|S_ij|^2``.

    Serves as the diffusive reference for the quantum spreading test.
    """
    g = state.graph
    res = state.resolution
    probs = np.abs(state.amplitudes) ** 2
    markov = [abs(step_operator(g, p, res)).power(2).tocsr() for p in range(2)]
    site = g.edge_site(res)
    out = []
    for t in range(steps + 1):
        flat = probs.sum(axis=0)
        cells = np.bincount(site, weights=flat, minlength=g.n_diamonds)
        out.append(Distribution(cells.reshape(g.n_cells, 2), state.step + t))
        if t < steps:
            probs = np.stack([markov[p] @ probs[p] for p in range(2)])
    return out


def write_history_csv(history: Iterable[Distribution], path, threshold: float = 1e-15) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cell", "subsite", "probability"])
        for d in history:
            cells, subs = np.nonzero(d.probabilities > threshold)
            for c, s in zip(cells, subs):
                w.writerow([d.step, int(c), SUBSITES[s], repr(float(d.probabilities[c, s]))])
