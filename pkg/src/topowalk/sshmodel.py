"""Two-band chiral (SSH) effective theory and topology read off walk graphs.

Conventions: the off-diagonal Bloch element is ``v + w e^{-ik}``, written
``E_k e^{i theta_k - ik/2}``; in real space ``v`` couples ``A_n`` to ``B_n`` and
``w`` couples ``B_n`` to ``A_{n+1}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import (GapClosedError, InvalidParameterError, InvalidSpecError,
                     ResolutionError, SingularityError, SizingError)
from .multiport import diamond_transmission
from .walkgraph import (ChainSpec, LatticeGraph, RegionPhases, pol_index,
                        step_operator, PORT_L, PORT_R)

GAP_TOL = 1e-12
GRAPH_GAP_TOL = 1e-9
DEFAULT_NK = 1024
MIN_NK = 64

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
CHIRAL = sla.expm(-0.5j * math.pi * SIGMA_Z)


@dataclass(frozen=True)
class BlochModel:
    v: float
    w: float

    def __post_init__(self):
        for name in ("v", "w"):
            val = float(getattr(self, name))
            if not math.isfinite(val) or val < 0:
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {val!r}")
            object.__setattr__(self, name, val)

    @property
    def gap_closed(self) -> bool:
        return abs(self.v - self.w) <= GAP_TOL

    @property
    def contrast(self) -> float:
        """``|v - w| / (v + w)``, zero for a gapless chain."""
        s = self.v + self.w
        return abs(self.v - self.w) / s if s else 0.0


@dataclass(frozen=True)
class DVector:
    dx: float
    dy: float
    k: float

    @classmethod
    def at(cls, m: BlochModel, k: float) -> "DVector":
        return cls(m.v + m.w * math.cos(k), m.w * math.sin(k), k)

    @property
    def norm(self) -> float:
        return math.hypot(self.dx, self.dy)


@dataclass(frozen=True)
class WindingResult:
    nu: int
    raw_phase_accumulation: float
    n_k: int
    min_gap: float = float("nan")


def _check_k(k: float) -> float:
    k = float(k)
    if not -math.pi - 1e-12 <= k <= math.pi + 1e-12:
        raise InvalidParameterError(f"k must lie in [-pi, pi], got {k}")
    return k


def energy(m: BlochModel, k: float) -> float:
    k = _check_k(k)
    return math.sqrt(max(m.v ** 2 + m.w ** 2 + 2 * m.v * m.w * math.cos(k), 0.0))


def _theta(v, w, k):
    return np.arctan2((v - w) * np.sin(k / 2), (v + w) * np.cos(k / 2))


def theta_k(m: BlochModel, k: float) -> float:
    """Phase angle of the off-diagonal element after removing ``e^{-ik/2}``.

    Continuous on the open zone; undefined where the gap closes.
    """
    k = _check_k(k)
    if m.gap_closed and abs(abs(k) - math.pi) < 1e-12:
        raise SingularityError("theta_k is undefined where the gap closes (v = w, k = pi)")
    if m.v == 0 and m.w == 0:
        raise SingularityError("theta_k is undefined for v = w = 0")
    return float(_theta(m.v, m.w, k))


def bloch_h(m: BlochModel, k: float) -> np.ndarray:
    k = _check_k(k)
    off = m.v + m.w * np.exp(-1j * k)
    return np.array([[0, off], [np.conj(off), 0]], dtype=complex)


def eigenvectors(m: BlochModel, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower band eigenvectors ``(1, +-e^{-i(theta_k - k/2)}) / sqrt 2``."""
    th = theta_k(m, k)
    if energy(m, k) <= GAP_TOL:
        raise SingularityError("eigenvectors are degenerate where the gap closes")
    ph = np.exp(-1j * (th - k / 2))
    s = 1 / math.sqrt(2)
    return np.array([s, s * ph]), np.array([s, -s * ph])


def chiral_residual(m: BlochModel, k: float) -> float:
    h = bloch_h(m, k)
    return float(np.max(np.abs(CHIRAL @ h @ np.linalg.inv(CHIRAL) + h)))


def winding_number(m: BlochModel, n_k: int = DEFAULT_NK) -> WindingResult:
    """Times ``d(k) = (v + w cos k, w sin k)`` circles the origin over the zone."""
    if n_k < MIN_NK:
        raise InvalidParameterError(f"n_k must be >= {MIN_NK}, got {n_k}")
    if m.gap_closed:
        raise GapClosedError(f"gap closed at v = w = {m.v}")
    ks = np.linspace(-math.pi, math.pi, n_k + 1)
    ang = np.angle((m.v + m.w * np.cos(ks)) + 1j * m.w * np.sin(ks))
    return _wind(ang, n_k, 2 * abs(m.v - m.w))


def _wind(ang: np.ndarray, n_k: int, gap: float) -> WindingResult:
    jumps = np.abs(np.angle(np.exp(1j * np.diff(ang))))
    if np.any(jumps > math.pi - 1e-6):
        raise ResolutionError("phase jumps by about pi between samples; increase n_k")
    total = float(np.unwrap(ang)[-1] - np.unwrap(ang)[0])
    return WindingResult(int(round(total / (2 * math.pi))), total, n_k, gap)


def _kgrid(n_cells: int) -> np.ndarray:
    return 2 * math.pi * np.arange(n_cells) / n_cells - math.pi


def ssh_wavefunction(m: BlochModel, n0: int, t: float, N: int) -> np.ndarray:
    """Amplitudes ``[cell, subsite]`` on a periodic chain, from the mode sum.

    Starts at ``(n0, A)``.  Sites are taken as Kronecker deltas.
    """
    if N < 8:
        raise InvalidParameterError("N must be >= 8")
    ks = _kgrid(N)
    e = np.sqrt(np.maximum(m.v ** 2 + m.w ** 2 + 2 * m.v * m.w * np.cos(ks), 0.0))
    th = _theta(m.v, m.w, ks)
    phase = np.exp(1j * np.outer(np.arange(N) - n0, ks))
    amp_a = phase @ np.cos(e * t) / N
    amp_b = phase @ (1j * np.exp(-1j * th + 1j * ks / 2) * np.sin(e * t)) / N
    return np.stack([amp_a, amp_b], axis=1)


def real_space_hamiltonian(v_cells, w_bonds, periodic: bool = True) -> sp.csr_matrix:
    """Tight-binding chain; ``w_bonds[n]`` joins ``B_n`` to ``A_{n+1}``."""
    v_cells = np.asarray(v_cells, dtype=float)
    w_bonds = np.asarray(w_bonds, dtype=float)
    n = len(v_cells)
    rows = list(2 * np.arange(n))
    cols = list(2 * np.arange(n) + 1)
    vals = list(v_cells)
    last = n if periodic else n - 1
    for c in range(last):
        rows.append(2 * c + 1)
        cols.append((2 * c + 2) % (2 * n))
        vals.append(w_bonds[c])
    upper = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
    return (upper + upper.T).tocsr()


def exact_evolution_oracle(m: BlochModel, n0: int, t: float, N: int) -> np.ndarray:
    """Dense matrix exponential ``exp(+iHt)`` applied to ``(n0, A)``."""
    if N < 8:
        raise InvalidParameterError("N must be >= 8")
    h = real_space_hamiltonian(np.full(N, m.v), np.full(N, m.w)).toarray()
    psi0 = np.zeros(2 * N, dtype=complex)
    psi0[2 * n0] = 1.0
    return (sla.expm(1j * t * h) @ psi0).reshape(N, 2)


@dataclass(frozen=True)
class TransmissionResult:
    transmission: float
    reflection: float
    n_cells: int
    boundary_cell: int
    duration: float


def _packet(v, w, n_cells, center, k0, sigma_k):
    ks = _kgrid(4096)
    # taper to zero outside (0, pi): only right movers, and no weight where the
    # lower band's eigenvector jumps (k = pi when v = w)
    g = np.exp(-((ks - k0) ** 2) / (2 * sigma_k ** 2)) * np.clip(np.sin(ks), 0, None) ** 8
    keep = g > 0
    ks, g = ks[keep], g[keep]
    ph = np.angle(v + w * np.exp(-1j * ks))
    modes = np.exp(1j * np.outer(np.arange(n_cells) - center, ks)) * g
    psi = np.empty(2 * n_cells, dtype=complex)
    psi[0::2] = modes.sum(axis=1)
    psi[1::2] = -(modes * np.exp(-1j * ph)).sum(axis=1)
    return psi / np.linalg.norm(psi)


def boundary_transmission(v: float, w: float, k0: float = math.pi / 2,
                          sigma_k: float = 0.2 * math.pi, steps: int = 8,
                          detail: bool = False, n_cells: int | None = None):
    """Probability that a lower-band wavepacket crosses a ``v <-> w`` interface.

    The packet is normalized against the same run on a boundary-free chain, so
    a chain without contrast transmits exactly 1.  ``steps`` is the number of
    time checkpoints at which the chain ends are checked.  ``n_cells``
    overrides the automatic chain length (at least 8x the travel distance).
    """
    if not 0 < sigma_k < 1:
        raise InvalidParameterError("sigma_k must lie in (0, 1)")
    if v <= 0 or w <= 0:
        raise InvalidParameterError("v and w must be positive for a moving wavepacket")
    if not 0 < k0 < math.pi:
        raise InvalidParameterError("k0 must lie in (0, pi) so the packet moves toward the boundary")
    if steps < 1:
        raise InvalidParameterError("steps must be >= 1")
    e0 = math.sqrt(v * v + w * w + 2 * v * w * math.cos(k0))
    vg = v * w * math.sin(k0) / e0
    offset = math.ceil(6.0 / sigma_k + 5)
    travel = 2 * offset
    n = int(max(8 * travel, 200)) if n_cells is None else int(n_cells)
    b = n // 2
    duration = 2.5 * travel / vg
    psi0 = _packet(v, w, n, b - offset, k0, sigma_k)

    left = np.arange(n) < b
    vc = np.where(left, v, w)
    wb = np.where(np.arange(n) < b - 1, w, v)
    wb[b - 1] = w
    runs = []
    for h in (real_space_hamiltonian(vc, wb, periodic=False),
              real_space_hamiltonian(np.full(n, v), np.full(n, w), periodic=False)):
        out = expm_multiply(-1j * h, psi0, start=0, stop=duration, num=steps + 1, endpoint=True)
        for snap in out:
            p = np.abs(snap) ** 2
            if p[:10].sum() + p[-10:].sum() > 1e-10:
                raise SizingError("wavepacket reached the chain end; enlarge the chain")
        p = np.abs(out[-1]) ** 2
        runs.append((p[2 * b:].sum(), p[:2 * b].sum()))
    (beyond, before), (beyond_ref, before_ref) = runs
    t = float(beyond / beyond_ref)
    r = float((before - before_ref) / beyond_ref)
    res = TransmissionResult(t, r, n, b, duration)
    return res if detail else t


# graph topology

def _cell_blocks(graph: LatticeGraph, pol) -> tuple[dict, np.ndarray, np.ndarray]:
    """Translation blocks of the diamond-level step operator on a ring."""
    op = step_operator(graph, pol).toarray()
    e = graph.edges("diamond")
    cell = e.dst // 2
    order = np.lexsort((e.dst_port, e.dst % 2, cell))
    idx = [order[cell[order] == c] for c in range(graph.n_cells)]
    mid = graph.n_cells // 2
    blocks = {s: op[np.ix_(idx[mid], idx[(mid + s) % graph.n_cells])] for s in (-1, 0, 1)}
    return blocks, e.dst[idx[mid]] % 2, e.dst_port[idx[mid]]


def _coin_root(coin: np.ndarray) -> np.ndarray:
    """Square root of a mirror-symmetric coin ``[[t, r], [r, t]]``.

    The eigenvectors are fixed, ``(1, +-1)``.  The root of the second
    eigenvalue is taken relative to the first so the relative phase is halved
    on the principal branch; the naive principal root flips the frame
    orientation (and the winding sign) whenever an eigenvalue crosses -1.
    """
    q = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    diag = q @ coin @ q
    plus, minus = diag[0, 0], diag[1, 1]
    root_plus = np.sqrt(plus)
    root_minus = root_plus * np.sqrt(abs(minus / plus)) * np.exp(0.5j * np.angle(minus / plus))
    return q @ np.diag([root_plus, root_minus]) @ q


def _graph_bloch_vectors(graph: LatticeGraph, pol, n_k: int) -> tuple[np.ndarray, np.ndarray]:
    blocks, sub, port = _cell_blocks(graph, pol)
    at_a = np.where(sub == 0)[0]
    # basis order: arrived through L (moving right), arrived through R
    at_a = at_a[np.argsort(port[at_a])]
    unit = graph.diamond_unit(0, pol).smatrix
    coin = np.array([[unit[PORT_R, PORT_L], unit[PORT_R, PORT_R]],
                     [unit[PORT_L, PORT_L], unit[PORT_L, PORT_R]]])
    half = _coin_root(coin)
    half_inv = half.conj().T
    ks = np.linspace(-math.pi, math.pi, n_k + 1)
    u = sum(b[None] * np.exp(1j * ks * s)[:, None, None] for s, b in blocks.items())
    w2 = (u @ u)[:, at_a][:, :, at_a]
    sym = half @ w2 @ half_inv
    sym = sym / np.sqrt(np.linalg.det(sym))[:, None, None]
    m = np.stack([(1j * np.einsum("kij,ji->k", sym, s) / 2).real for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)], axis=1)
    return ks, m


def effective_winding_from_graph(graph: LatticeGraph, pol="H", n_k: int = DEFAULT_NK,
                                 region: int | None = None) -> WindingResult:
    """Winding of the two-step walk operator of one region.

    The two-step operator restricted to light arriving at subsite ``A`` is a
    2x2 unitary per quasi-momentum.  Half of subsite ``A``'s coin is moved to
    the far end so the operator is chiral symmetric (its ``sigma_y`` part
    vanishes); the winding of its ``(sigma_z, sigma_x)`` components counts the
    topological phase.
    """
    if n_k < MIN_NK:
        raise InvalidParameterError(f"n_k must be >= {MIN_NK}, got {n_k}")
    if region is None:
        if not graph.is_uniform:
            raise InvalidSpecError("graph has several regions; pass region=<index>")
        region = 0
    ring = graph.region_graph(region, cells=3)
    ks, m = _graph_bloch_vectors(ring, pol, n_k)
    norms = np.hypot(m[:, 0], m[:, 2])
    min_gap = float(norms.min())
    if min_gap < GRAPH_GAP_TOL:
        raise GapClosedError(f"quasi-energy gap closes (min |m| = {min_gap:.2e})")
    ang = np.angle(m[:, 2] + 1j * m[:, 0])
    return _wind(ang, n_k, min_gap)


def chiral_defect_from_graph(graph: LatticeGraph, pol="H", n_k: int = 128, region: int = 0) -> float:
    """Largest ``sigma_y`` component of the symmetrized two-step operator."""
    _, m = _graph_bloch_vectors(graph.region_graph(region, cells=3), pol, n_k)
    return float(np.max(np.abs(m[:, 1])))


def effective_hoppings(phases: RegionPhases, pol="H", theta: float = -math.pi / 2) -> BlochModel:
    """Diagnostic ``(v, w)``: the two diamonds' transmission magnitudes."""
    phi_a, phi_b = phases.pair(pol)
    return BlochModel(diamond_transmission(phi_a, theta), diamond_transmission(phi_b, theta))


def phase_winding(phi_a: float, phi_b: float, pol="H", theta: float = -math.pi / 2,
                  n_k: int = DEFAULT_NK) -> WindingResult:
    spec = ChainSpec.uniform(RegionPhases.uniform(phi_a, phi_b), 3, threeport_theta=theta, periodic=True)
    return effective_winding_from_graph(LatticeGraph(spec), pol_index(pol), n_k)


def write_band_sweep_csv(rows, path) -> None:
    """Rows of ``(v, w, nu, gap)``; ``nu`` may be empty for gapless points."""
    _write_rows(path, ["v", "w", "nu", "gap"], rows)


def write_phase_sweep_csv(rows, path) -> None:
    """Rows of ``(phi_a, phi_b, pol, nu, min_gap)``."""
    _write_rows(path, ["phi_a", "phi_b", "pol", "nu", "min_gap"], rows)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row])
