import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topowalk.errors import InvalidParameterError
from topowalk.multiport import build_threeport, compose_diamond, diamond_transmission

angles = st.floats(-20, 20, allow_nan=False)


def test_quarter_turn_is_i_times_identity():
    # off-diagonal i e^{-i pi/2} - 1 = 0, prefactor i / (2 + i*i) = i
    u = build_threeport(math.pi / 2).matrix
    np.testing.assert_allclose(u, 1j * np.eye(3), atol=1e-14)


def test_zero_phase_entries_and_row_norms():
    u = build_threeport(0.0).matrix
    o = 1j - 1
    expected = np.array([[1, o, o], [o, 1, o], [o, o, 1]]) / (2 + 1j)
    np.testing.assert_allclose(u, expected, atol=1e-14)
    # (1 + 2*|i-1|^2) / |2+i|^2 = 5/5
    np.testing.assert_allclose(np.sum(np.abs(u) ** 2, axis=1), 1.0, atol=1e-14)


def test_grover_point():
    u = build_threeport(-math.pi / 2).matrix
    grover = np.full((3, 3), 2 / 3) - np.eye(3)
    np.testing.assert_allclose(u, 1j * grover, atol=1e-14)


def test_unitary_over_many_thetas():
    rng = np.random.default_rng(11)
    worst = 0.0
    for theta in rng.uniform(0, 2 * math.pi, 1000):
        worst = max(worst, build_threeport(theta).unitarity_error())
    assert worst < 1e-12


@given(angles)
def test_port_permutations_leave_matrix_unchanged(theta):
    u = build_threeport(theta).matrix
    for perm in itertools.permutations(range(3)):
        p = np.eye(3)[list(perm)]
        assert np.array_equal(p @ u @ p.T, u)


@given(angles)
def test_two_pi_periodic(theta):
    a = build_threeport(theta).matrix
    b = build_threeport(theta + 2 * math.pi).matrix
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf, "x"])
def test_non_finite_theta_rejected(bad):
    with pytest.raises(InvalidParameterError):
        build_threeport(bad)


def test_matrix_is_read_only():
    u = build_threeport(0.3)
    with pytest.raises(ValueError):
        u.matrix[0, 0] = 0


def _round_trip_oracle(phi, t):
    """Sum internal round trips term by term instead of solving for them."""
    link = np.diag([0.0, 1.0, np.exp(1j * phi)])
    u = t.matrix
    out = np.zeros((2, 2), dtype=complex)
    for col, start in ((0, 0), (1, 1)):
        # amplitude currently leaving each three-port's internal ports
        first = u[:, 0].copy()
        left, right = (first, np.zeros(3, complex)) if start == 0 else (np.zeros(3, complex), first)
        out[0, col] += left[0]
        out[1, col] += right[0]
        for _ in range(4000):
            left, right = u @ (link @ right), u @ (link @ left)
            out[0, col] += left[0]
            out[1, col] += right[0]
            if np.abs(left[1:]).max() + np.abs(right[1:]).max() < 1e-15:
                break
    return out


@pytest.mark.parametrize("phi,theta", [(0.0, -math.pi / 2), (2.5, -math.pi / 2), (1.1, 0.4), (-2.0, 1.0)])
def test_diamond_matches_round_trip_sum(phi, theta):
    t = build_threeport(theta)
    d = compose_diamond(phi, t, t)
    np.testing.assert_allclose(d.smatrix, _round_trip_oracle(phi, t), atol=1e-10)


@settings(max_examples=60)
@given(angles, st.floats(-math.pi, math.pi))
def test_diamond_is_norm_preserving(phi, theta):
    t = build_threeport(theta)
    try:
        s = compose_diamond(phi, t, t).smatrix
    except InvalidParameterError:
        return  # light trapped inside; no steady state to test
    assert np.max(np.abs(s.conj().T @ s - np.eye(2))) < 1e-12


@given(angles)
def test_diamond_periodic_in_phi(phi):
    t = build_threeport(-math.pi / 2)
    a = compose_diamond(phi, t, t).smatrix
    b = compose_diamond(phi + 2 * math.pi, t, t).smatrix
    assert np.max(np.abs(a - b)) < 1e-12


def test_diamond_mirror_symmetry():
    t = build_threeport(-math.pi / 2)
    d = compose_diamond(0.7, t, t)
    assert abs(d.smatrix[0, 0] - d.smatrix[1, 1]) < 1e-13
    assert abs(d.smatrix[0, 1] - d.smatrix[1, 0]) < 1e-13
    assert d.entry_port == "L" and d.exit_port == "R"
    np.testing.assert_allclose(d.scatter([1, 0]), d.smatrix[:, 0])


@pytest.mark.parametrize("phi,expected", [(0.0, 0.8), (math.pi / 2, math.sqrt(0.5)), (math.pi, 0.0)])
def test_diamond_transmission_values(phi, expected):
    assert diamond_transmission(phi, -math.pi / 2) == pytest.approx(expected, abs=1e-12)


def test_lossless_internal_resonance_rejected():
    # mirror three-ports with a quarter-wave shifter: the C loop is a closed
    # resonator, so the steady-state equations are singular
    t = build_threeport(math.pi / 2)
    with pytest.raises(InvalidParameterError):
        compose_diamond(math.pi / 2, t, t)
