"""Directionally-unbiased three-ports and the diamond units built from them.

Ports of a three-port are ordered ``A, B, C``.  A diamond unit joins two
three-ports through their ``B`` and ``C`` ports; the ``C``-``C`` edge carries
the adjustable phase shifter and the two ``A`` ports face outwards (left and
right).  Internal round trips are summed to steady state, so a diamond acts as
a single two-port scatterer with ports ``L`` (0) and ``R`` (1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

PORTS = ("A", "B", "C")
UNITARITY_TOL = 1e-12

# (left-port, right-port, carries phase shifter)
DIAMOND_WIRING = (("B", "B", False), ("C", "C", True))


def _finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ThreePortUnitary:
    """Scattering matrix of a symmetric three-port with mirror-unit phase ``theta``.

    ``matrix[i, j]`` is the amplitude to leave through port ``i`` after entering
    through port ``j``.
    """

    theta: float
    matrix: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def reflection(self) -> complex:
        return complex(self.matrix[0, 0])

    @property
    def transmission(self) -> complex:
        return complex(self.matrix[0, 1])

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(3))))


def build_threeport(theta: float) -> ThreePortUnitary:
    """Return the three-port unitary for mirror-unit phase ``theta`` (radians).

    All three internal vertices share the same phase, so the matrix has equal
    diagonal entries ``p`` and equal off-diagonal entries ``p (i e^{-i theta} - 1)``
    with prefactor ``p = e^{i theta} / (2 + i e^{i theta})``.
    """
    theta = _finite("theta", theta)
    e = np.exp(1j * theta)
    pre = e / (2.0 + 1j * e)
    off = 1j / e - 1.0
    m = np.full((3, 3), off, dtype=complex)
    np.fill_diagonal(m, 1.0)
    return ThreePortUnitary(theta=theta, matrix=pre * m)


@dataclass(frozen=True)
class DiamondUnit:
    """Two three-ports and a phase shifter acting as one two-port scatterer.

    ``smatrix[out, in]`` uses port order ``(L, R)``: ``L`` is the free ``A`` port
    of ``left``, ``R`` the free ``A`` port of ``right``.
    """

    phi: float
    left: ThreePortUnitary
    right: ThreePortUnitary
    smatrix: np.ndarray = field(repr=False, compare=False)
    entry_port: str = "L"
    exit_port: str = "R"
    wiring: tuple = DIAMOND_WIRING

    def __post_init__(self):
        self.smatrix.setflags(write=False)

    @property
    def transmission(self) -> complex:
        return complex(self.smatrix[1, 0])

    @property
    def reflection(self) -> complex:
        return complex(self.smatrix[0, 0])

    def scatter(self, amplitudes) -> np.ndarray:
        """Apply the composed action to incoming ``(L, R)`` amplitudes."""
        return self.smatrix @ np.asarray(amplitudes, dtype=complex)


def compose_diamond(phi: float, t1: ThreePortUnitary, t2: ThreePortUnitary) -> DiamondUnit:
    """Sum all internal round trips of the diamond ``t1 =(B,C)= t2``.

    Solves the steady-state equations ``o1 = U1 i1``, ``o2 = U2 i2`` where the
    internal inputs are fed by the other three-port's outputs (the ``C`` link
    picking up ``e^{i phi}``).
    """
    phi = _finite("phi", phi)
    f = np.exp(1j * phi)
    link = np.diag([0.0, 1.0, f])  # A is external; B direct; C through the shifter
    u1, u2 = t1.matrix, t2.matrix
    system = np.eye(6, dtype=complex)
    system[:3, 3:] = -u1 @ link
    system[3:, :3] = -u2 @ link
    if np.linalg.cond(system) > 1e12:
        raise InvalidParameterError(f"diamond with phi={phi} traps light internally; no steady state")
    rhs = np.zeros((6, 2), dtype=complex)
    rhs[:3, 0] = u1[:, 0]  # unit input at the left A port
    rhs[3:, 1] = u2[:, 0]  # unit input at the right A port
    sol = np.linalg.solve(system, rhs)
    s = np.array([[sol[0, 0], sol[0, 1]], [sol[3, 0], sol[3, 1]]])
    return DiamondUnit(phi=phi, left=t1, right=t2, smatrix=s)


def diamond_transmission(phi: float, theta: float) -> float:
    """|t| of a symmetric diamond; plays the role of a hopping amplitude."""
    t = build_threeport(theta)
    return abs(compose_diamond(phi, t, t).transmission)
