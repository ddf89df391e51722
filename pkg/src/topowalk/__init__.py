"""Photonic quantum walks on chains of unbiased three-port multiports."""

from .errors import *  # noqa: F401,F403
from .multiport import ThreePortUnitary, DiamondUnit, build_threeport, compose_diamond, diamond_transmission
from .walkgraph import (ChainSpec, Distribution, LatticeGraph, PerturbationSchedule, RegionPhases,
                        WalkState, boundary_peak_mass, build_chain, classical_walk, crossing_mass,
                        evolve, inject, position_distribution, spread_slope, step_operator)
from .sshmodel import (BlochModel, WindingResult, boundary_transmission, effective_winding_from_graph,
                       energy, eigenvectors, bloch_h, exact_evolution_oracle, ssh_wavefunction,
                       theta_k, winding_number)

__version__ = "0.1.0"
