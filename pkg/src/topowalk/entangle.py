"""Two-photon states over a pair of chains, registers and edge entanglement.

Photons never interact, so a two-photon state is kept as a short list of
product terms ``coef * |upper> |lower>`` and each factor evolves on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (InvalidParameterError, MisconfigurationError,
                     NoEdgeStateError, NormalizationError)
from .walkgraph import (LatticeGraph, PerturbationSchedule, WalkState,
                        boundary_peak_mass, evolve, inject, pol_index)

NORM_TOL = 1e-10
EDGE_THRESHOLD = 0.05
CALIBRATION_STEPS = 200
CALIBRATION_TAIL = 20
EDGE_WINDOW = 2


@dataclass(frozen=True)
class PolarizationQubit:
    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-12:
            raise NormalizationError(f"|alpha|^2 + |beta|^2 = {abs(a) ** 2 + abs(b) ** 2}, expected 1")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def normalized(cls, alpha: complex, beta: complex) -> "PolarizationQubit":
        n = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        if n == 0:
            raise NormalizationError("cannot normalize the zero qubit")
        return cls(alpha / n, beta / n)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "PolarizationQubit":
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        return cls.normalized(z[0], z[1])

    @property
    def probabilities(self) -> tuple[float, float]:
        return abs(self.alpha) ** 2, abs(self.beta) ** 2


@dataclass
class TwoPhotonState:
    """``terms``: list of ``(coef, upper WalkState, lower WalkState)``."""

    terms: list
    upper: LatticeGraph = field(repr=False)
    lower: LatticeGraph = field(repr=False)

    @property
    def step(self) -> int:
        return self.terms[0][1].step if self.terms else 0

    def _factors(self):
        coefs = np.array([c for c, _, _ in self.terms], dtype=complex)
        up = np.stack([u.vector() for _, u, _ in self.terms], axis=1)
        lo = np.stack([l.vector() for _, _, l in self.terms], axis=1)
        return coefs, up, lo

    def norm_squared(self) -> float:
        c, up, lo = self._factors()
        gram = (up.conj().T @ up) * (lo.conj().T @ lo)
        return float(np.real(c.conj() @ gram @ c))

    def amplitude(self, upper_vec: np.ndarray, lower_vec: np.ndarray) -> complex:
        """Overlap with the product ``|upper_vec> |lower_vec>``."""
        c, up, lo = self._factors()
        return complex(np.sum(c * (upper_vec.conj() @ up) * (lower_vec.conj() @ lo)))


def bell_state(sign: int, graphs: tuple[LatticeGraph, LatticeGraph], cell: int, subsite="A",
               mode: str = "rightward") -> TwoPhotonState:
    """``(|H>_u |V>_l + sign |V>_u |H>_l) / sqrt 2`` with both photons at ``cell``."""
    if sign not in (1, -1, "+", "-"):
        raise InvalidParameterError(f"sign must be +1 or -1, got {sign!r}")
    s = -1 if sign in (-1, "-") else 1
    up, lo = graphs
    h = 1 / math.sqrt(2)
    terms = [
        (h, inject(up, cell, subsite, "H", mode), inject(lo, cell, subsite, "V", mode)),
        (s * h, inject(up, cell, subsite, "V", mode), inject(lo, cell, subsite, "H", mode)),
    ]
    return TwoPhotonState(terms, up, lo)


def product_state(graphs, cells, pols, subsite="A", mode: str = "rightward") -> TwoPhotonState:
    up, lo = graphs
    return TwoPhotonState([(1.0, inject(up, cells[0], subsite, pols[0], mode),
                            inject(lo, cells[1], subsite, pols[1], mode))], up, lo)


def evolve_two_photon(state: TwoPhotonState, steps: int,
                      perturbation: PerturbationSchedule | tuple | None = None) -> TwoPhotonState:
    """Evolve every factor on its own chain.

    ``perturbation`` may be one schedule for both chains or an
    ``(upper, lower)`` pair.
    """
    if steps < 0:
        raise InvalidParameterError("steps must be >= 0")
    if isinstance(perturbation, tuple):
        pu, pl = perturbation
    else:
        pu = pl = perturbation
    terms = []
    for c, u, l in state.terms:
        u2, _ = evolve(u, state.upper, steps, pu, record=False)
        l2, _ = evolve(l, state.lower, steps, pl, record=False)
        terms.append((c, u2, l2))
    return TwoPhotonState(terms, state.upper, state.lower)


def schmidt_coefficients(state: TwoPhotonState) -> np.ndarray:
    """Schmidt weights (squared singular values) across the upper/lower cut."""
    c, up, lo = state._factors()
    qu, ru = np.linalg.qr(up)
    ql, rl = np.linalg.qr(lo)
    core = ru @ np.diag(c) @ rl.T
    s = np.linalg.svd(core, compute_uv=False)
    return s ** 2


def _entropy_bits(weights: np.ndarray) -> float:
    p = weights[weights > 1e-300]
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def entanglement_entropy(state: TwoPhotonState, partition: str = "upper") -> float:
    """Von Neumann entropy (bits) of one photon's reduced state.

    Both reductions share the Schmidt spectrum, so ``partition`` only selects
    which photon is reported.
    """
    if partition not in ("upper", "lower"):
        raise InvalidParameterError(f"partition must be 'upper' or 'lower', got {partition!r}")
    n = state.norm_squared()
    if abs(n - 1) > NORM_TOL:
        raise NormalizationError(f"state norm^2 = {n}, expected 1")
    return _entropy_bits(schmidt_coefficients(state))


def reduced_polarization_matrix(state: TwoPhotonState, partition: str = "upper") -> np.ndarray:
    """2x2 polarization density matrix of one photon (position traced out)."""
    c, up, lo = state._factors()
    mine, other = (up, lo) if partition == "upper" else (lo, up)
    n_edges = mine.shape[0] // 2
    gram = other.conj().T @ other  # <other_j|other_i> weights
    rho = np.zeros((2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            va = mine[a * n_edges:(a + 1) * n_edges] * c
            vb = mine[b * n_edges:(b + 1) * n_edges] * c
            rho[a, b] = np.sum((vb.conj().T @ va) * gram)
    return rho


# registers

def register_write(q: PolarizationQubit, ring: LatticeGraph, cell: int = 0, subsite="A",
                   mode: str = "rightward", check: bool = True) -> WalkState:
    """Store ``alpha |H> + beta |V>`` in a ring whose H and V windings differ."""
    if check:
        from .sshmodel import effective_winding_from_graph

        nu_h = effective_winding_from_graph(ring, "H").nu
        nu_v = effective_winding_from_graph(ring, "V").nu
        if nu_h == nu_v:
            raise MisconfigurationError(f"H and V both see winding {nu_h}; the register cannot encode a bit")
    h = inject(ring, cell, subsite, "H", mode)
    v = inject(ring, cell, subsite, "V", mode)
    amps = q.alpha * h.amplitudes + q.beta * v.amplitudes
    return WalkState(ring, amps, 0, h.resolution)


def register_read(state: WalkState) -> tuple[float, float]:
    weights = state.polarization_weights()
    total = weights.sum()
    if abs(total - 1) > NORM_TOL:
        raise NormalizationError(f"state norm^2 = {total}, expected 1")
    return float(weights[0]), float(weights[1])


@dataclass(frozen=True)
class MixingSchedule:
    """Where and when a polarization-mixing rotation acts.

    The rotation is applied after every step in ``[first_step, last_step)`` to
    edges leaving cells in ``[cell_lo, cell_hi]``.
    """

    cell_lo: int
    cell_hi: int
    first_step: int = 0
    last_step: int | None = None

    def active(self, step: int) -> bool:
        return step >= self.first_step and (self.last_step is None or step < self.last_step)


def mix_polarizations(state: WalkState, strength: float, edges: np.ndarray) -> None:
    """In-place rotation by ``arcsin(strength)`` coupling H and V on ``edges``."""
    s = float(strength)
    c = math.sqrt(1 - s * s)
    h = state.amplitudes[0, edges].copy()
    v = state.amplitudes[1, edges]
    state.amplitudes[0, edges] = c * h - 1j * s * v
    state.amplitudes[1, edges] = -1j * s * h + c * v


def mixed_evolution(state: WalkState, steps: int, strength: float, schedule: MixingSchedule) -> WalkState:
    g = state.graph
    cells = g.edge_site(state.resolution) // 2
    edges = np.where((cells >= schedule.cell_lo) & (cells <= schedule.cell_hi))[0]
    cur = state.copy()
    for _ in range(steps):
        cur, _ = evolve(cur, g, 1, record=False)
        if strength and schedule.active(cur.step - 1):
            mix_polarizations(cur, strength, edges)
    return cur


def polarization_flip_rate(ring: LatticeGraph, q: PolarizationQubit, mix_strength: float,
                           schedule: MixingSchedule | None = None, cell: int | None = None,
                           steps: int = 120, half_width: int = 9) -> float:
    """Probability per encounter that a stored bit ends up in the other polarization.

    The photon starts inside the mixing window and one encounter lasts until it
    has left.  Each basis component is run separately and the flipped weight is
    averaged with the qubit's populations.
    """
    if not 0 <= mix_strength <= 1:
        raise InvalidParameterError("mix_strength must lie in [0, 1]")
    if cell is None:
        cell = ring.n_cells // 2
    if schedule is None:
        schedule = MixingSchedule(cell - half_width, cell + half_width)
    rate = 0.0
    for pol, weight in zip((0, 1), q.probabilities):
        if weight == 0:
            continue
        final = mixed_evolution(inject(ring, cell, "A", pol), steps, mix_strength, schedule)
        rate += weight * final.polarization_weights()[1 - pol]
    return float(rate)


# edge-state entanglement

@dataclass(frozen=True)
class EdgeBasisAmplitudes:
    """Joint amplitudes over ``{e, none} x {e, none}`` (upper first)."""

    amplitudes: np.ndarray
    residual: float
    labels: tuple = ("e", "none")

    def __post_init__(self):
        self.amplitudes.setflags(write=False)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def entropy_bits(self) -> float:
        """Entanglement of the state renormalized onto the edge basis."""
        a = self.amplitudes / np.linalg.norm(self.amplitudes)
        return _entropy_bits(np.linalg.svd(a, compute_uv=False) ** 2)

    def as_dict(self) -> dict:
        out = {}
        for i, x in enumerate(self.labels):
            for j, y in enumerate(self.labels):
                z = self.amplitudes[i, j]
                out[f"{x}_{y}"] = [float(z.real), float(z.imag)]
        out["residual"] = float(self.residual)
        return out


@dataclass(frozen=True)
class EdgeReference:
    edge_pol: int
    edge_vec: np.ndarray
    empty_vec: np.ndarray
    window_mass: float


def calibrate_edge(graph: LatticeGraph, boundary_cell: int, at_step: int, cell: int | None = None,
                   subsite="A", window: int = EDGE_WINDOW) -> EdgeReference:
    """Reference states for one chain.

    A photon starts next to the boundary in each polarization.  The one whose
    window mass over the last 20 of 200 steps stays at or above 0.05 hosts the
    edge state ``|e>`` (its window component at ``at_step``, normalized); the
    other polarization's full evolved state is ``|none>``.
    """
    cell = boundary_cell - 1 if cell is None else cell
    runs = []
    for pol in (0, 1):
        n = max(CALIBRATION_STEPS, at_step)
        _, hist = evolve(inject(graph, cell, subsite, pol), graph, n)
        peak = boundary_peak_mass(hist[CALIBRATION_STEPS - CALIBRATION_TAIL + 1:CALIBRATION_STEPS + 1],
                                  boundary_cell, window)
        final, _ = evolve(inject(graph, cell, subsite, pol), graph, at_step, record=False)
        runs.append((float(peak.mean()), final))
    edge_pol = int(np.argmax([m for m, _ in runs]))
    mass, edge_state = runs[edge_pol]
    if mass < EDGE_THRESHOLD:
        raise NoEdgeStateError(f"no bound state at cell {boundary_cell}: window mass {mass:.3g} < {EDGE_THRESHOLD}")
    cells = graph.edge_site(edge_state.resolution) // 2
    inside = np.abs(cells - boundary_cell) <= window
    e = np.zeros_like(edge_state.amplitudes)
    e[:, inside] = edge_state.amplitudes[:, inside]
    e = e.ravel() / np.linalg.norm(e)
    empty = runs[1 - edge_pol][1].vector()
    empty = empty / np.linalg.norm(empty)
    return EdgeReference(edge_pol, e, empty, mass)


def edge_projection(state: TwoPhotonState, boundary_cell: int, window: int = EDGE_WINDOW,
                    cell: int | None = None, references=None) -> EdgeBasisAmplitudes:
    """Project onto ``{e, none}`` per photon; the rest is the residual."""
    if references is None:
        references = tuple(calibrate_edge(g, boundary_cell, state.step, cell, window=window)
                           for g in (state.upper, state.lower))
    ru, rl = references
    basis_u = (ru.edge_vec, ru.empty_vec)
    basis_l = (rl.edge_vec, rl.empty_vec)
    amps = np.array([[state.amplitude(x, y) for y in basis_l] for x in basis_u])
    residual = state.norm_squared() - float(np.sum(np.abs(amps) ** 2))
    return EdgeBasisAmplitudes(amps, residual)


def report(path, entropy_bits=None, edge: EdgeBasisAmplitudes | None = None, flip_rate=None,
           register_fidelity=None, extra: dict | None = None) -> dict:
    """Write the experiment report JSON and return it."""
    out = {
        "entropy_bits": entropy_bits,
        "edge_amplitudes": edge.as_dict() if edge is not None else None,
        "flip_rate": flip_rate,
        "register_fidelity": register_fidelity,
    }
    if extra:
        out.update(extra)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return out
