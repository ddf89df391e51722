import csv
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from topowalk.errors import FitError, InvalidParameterError, InvalidSpecError, SizingError
from topowalk.walkgraph import (ChainSpec, Distribution, PerturbationSchedule, RegionPhases,
                                boundary_peak_mass, build_chain, classical_walk, crossing_mass,
                                evolve, inject, position_distribution, spread_slope, step_operator,
                                write_history_csv)

HALF_PI = math.pi / 2
WIND1 = RegionPhases.uniform(-HALF_PI, 0.0)
WIND0 = RegionPhases.uniform(1.5, 2.5)
phase = st.floats(-math.pi, math.pi, allow_nan=False)


@pytest.fixture(scope="module")
def two_region():
    return build_chain(ChainSpec(((WIND1, 86), (WIND0, 86))))


@pytest.fixture(scope="module")
def uniform():
    return build_chain(ChainSpec.uniform(WIND1, 172))


def _max_unitarity_error(op):
    gram = (op.conj().T @ op - sp.identity(op.shape[0])).tocoo()
    return float(np.max(np.abs(gram.data))) if gram.nnz else 0.0


def test_ten_cells_have_forty_three_ports():
    g = build_chain(ChainSpec.uniform(WIND1, 10))
    assert g.n_vertices == 40
    assert np.all(g.vertex_degree() == 3)


def test_boundary_positions_from_regions():
    spec = ChainSpec(((WIND1, 5), (WIND0, 5)))
    assert spec.boundary_positions == (5,)
    assert spec.n_cells == 10


@pytest.mark.parametrize("regions", [((WIND1, 1),), ((WIND1, 0),), ()])
def test_too_small_chain_rejected(regions):
    with pytest.raises(InvalidSpecError):
        build_chain(ChainSpec(regions))


def test_phases_are_wrapped():
    r = RegionPhases(3 * math.pi, -HALF_PI + 2 * math.pi, 7.0)
    assert r.phi_a == pytest.approx(-math.pi)
    assert r.phi_b_H == pytest.approx(-HALF_PI)
    assert r.phi_b_V == pytest.approx(7.0 - 2 * math.pi)
    with pytest.raises(InvalidParameterError):
        RegionPhases(math.nan, 0, 0)


@pytest.mark.parametrize("resolution", ["diamond", "multiport"])
def test_every_edge_has_one_reverse_partner(two_region, resolution):
    e = two_region.edges(resolution)
    rev = e.reverse
    assert np.array_equal(rev[rev], np.arange(len(e)))
    assert np.array_equal(e.src[rev], e.dst)
    assert np.array_equal(e.src_port[rev], e.dst_port)
    # each (node, port) is entered by exactly one edge
    assert np.all(e.incoming() >= 0)


def test_fig7_chain_is_evolvable(two_region):
    assert two_region.boundary_positions == (86,)
    state, hist = evolve(inject(two_region, 68, "A", "V"), two_region, 5)
    assert len(hist) == 6 and state.step == 5


@pytest.mark.parametrize("resolution", ["diamond", "multiport"])
@pytest.mark.parametrize("pol", ["H", "V"])
def test_step_operator_unitary(two_region, resolution, pol):
    assert _max_unitarity_error(step_operator(two_region, pol, resolution)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(phase, phase, phase, phase, st.booleans())
def test_unitary_for_random_phases(a1, b1, a2, b2, periodic):
    spec = ChainSpec(((RegionPhases(a1, b1, b2), 3), (RegionPhases(a2, b2, b1), 2)), periodic=periodic)
    g = build_chain(spec)
    for res in ("diamond", "multiport"):
        for pol in ("H", "V"):
            assert _max_unitarity_error(step_operator(g, pol, res)) < 1e-12


@pytest.mark.parametrize("resolution,fanout", [("diamond", 2), ("multiport", 3)])
def test_one_step_reaches_one_vertex_only(uniform, resolution, fanout):
    op = step_operator(uniform, "H", resolution)
    e = uniform.edges(resolution)
    for edge in (0, 17, len(e) // 2):
        v = np.zeros(len(e), complex)
        v[edge] = 1
        hit = np.nonzero(op @ v)[0]
        assert len(hit) <= fanout
        assert np.all(e.src[hit] == e.dst[edge])


def test_polarization_operators_differ_only_on_shifted_edges():
    g = build_chain(ChainSpec.uniform(RegionPhases(-HALF_PI, 0.4, -1.2), 6))
    diff = (step_operator(g, "H", "multiport") - step_operator(g, "V", "multiport")).tocoo()
    rows = np.unique(diff.row[np.abs(diff.data) > 0])
    e = g.edges("multiport")
    # only C->C edges inside B diamonds carry the polarization-dependent phase
    assert np.all(e.src_port[rows] == 2) and np.all(e.dst_port[rows] == 2)
    assert np.all((e.src[rows] // 2) % 2 == 1)
    same = build_chain(ChainSpec.uniform(RegionPhases(-HALF_PI, 0.4, 0.4), 6))
    for res in ("diamond", "multiport"):
        assert (step_operator(same, "H", res) != step_operator(same, "V", res)).nnz == 0


def test_injection_is_a_delta(uniform):
    state = inject(uniform, 68, "A", "V")
    assert state.norm_squared() == pytest.approx(1.0, abs=1e-15)
    d = position_distribution(state)
    assert d.probabilities[68, 0] == 1.0 and d.total() == 1.0
    same, hist = evolve(state, uniform, 0)
    assert np.array_equal(same.amplitudes, state.amplitudes) and len(hist) == 1


@pytest.mark.parametrize("resolution", ["diamond", "multiport"])
@pytest.mark.parametrize("mode", ["rightward", "symmetric"])
def test_injection_modes(uniform, resolution, mode):
    s = inject(uniform, 10, "B", "H", mode, resolution)
    assert s.norm_squared() == pytest.approx(1.0, abs=1e-15)
    assert position_distribution(s).probabilities[10, 1] == pytest.approx(1.0)
    assert np.count_nonzero(s.amplitudes) == (1 if mode == "rightward" else 2)


@pytest.mark.parametrize("cell", [-1, 172, 500])
def test_injection_outside_chain(uniform, cell):
    with pytest.raises(IndexError):
        inject(uniform, cell, "A", "H")


def test_bad_labels_rejected(uniform):
    with pytest.raises(InvalidParameterError):
        inject(uniform, 3, "C", "H")
    with pytest.raises(InvalidParameterError):
        inject(uniform, 3, "A", "D")
    with pytest.raises(InvalidParameterError):
        inject(uniform, 3, "A", "H", mode="sideways")


def test_distribution_sums_to_one(two_region):
    _, hist = evolve(inject(two_region, 85, "B", "H", "symmetric"), two_region, 60)
    for d in hist:
        assert abs(d.total() - 1) < 1e-10
        assert np.all(d.probabilities >= 0)


def test_reversibility(two_region):
    s = inject(two_region, 80, "A", "V")
    op = step_operator(two_region, "V")
    v = s.amplitudes[1]
    for _ in range(40):
        v = op @ v
    for _ in range(40):
        v = op.conj().T @ v
    assert np.max(np.abs(v - s.amplitudes[1])) < 1e-10


@pytest.mark.parametrize("resolution", ["diamond", "multiport"])
def test_translation_covariance(uniform, resolution):
    a, _ = evolve(inject(uniform, 60, "A", "H", resolution=resolution), uniform, 30, record=False)
    b, _ = evolve(inject(uniform, 63, "A", "H", resolution=resolution), uniform, 30, record=False)
    pa, pb = position_distribution(a).probabilities, position_distribution(b).probabilities
    np.testing.assert_allclose(pa[:-3], pb[3:], atol=1e-13)


def test_polarizations_never_mix(two_region):
    for pol in (0, 1):
        s, _ = evolve(inject(two_region, 70, "A", pol), two_region, 150, record=False)
        assert not np.any(s.amplitudes[1 - pol])


def test_guarded_evolution_detects_chain_end():
    g = build_chain(ChainSpec.uniform(WIND1, 20))
    with pytest.raises(SizingError):
        evolve(inject(g, 3, "A", "H"), g, 40, guard_ends=True)


def test_fig6_spreads_ballistically(uniform):
    _, hist = evolve(inject(uniform, 68, "A", "V"), uniform, 50)
    fit = spread_slope(hist, start=10)
    assert fit.r2 > 0.99 and fit.slope > 0.1


def test_fig6_final_histogram_two_lobed(uniform):
    _, hist = evolve(inject(uniform, 68, "A", "V"), uniform, 50)
    cells = hist[-1].cells()
    middle = cells[62:75].mean()
    assert cells[40:60].max() > 2 * middle
    assert cells[77:100].max() > 2 * middle


def test_classical_oracle_spreads_diffusively(uniform):
    start = inject(uniform, 68, "A", "V")
    hist = classical_walk(start, 50)
    assert all(abs(d.total() - 1) < 1e-12 for d in hist)
    linear = spread_slope(hist, start=10)
    root = spread_slope(hist, start=10, model="sqrt")
    assert root.r2 > linear.r2
    _, quantum = evolve(start, uniform, 50)
    assert spread_slope(quantum, start=10).r2 > linear.r2


def test_spread_fit_edge_cases():
    flat = [Distribution(np.array([[0.5, 0.0], [0.0, 0.5]]), s) for s in range(12)]
    fit = spread_slope(flat)
    assert fit.slope == pytest.approx(0.0, abs=1e-14) and fit.r2 == 1.0
    delta = [Distribution(np.array([[1.0, 0.0], [0.0, 0.0]]), s) for s in range(12)]
    with pytest.raises(FitError):
        spread_slope(delta)
    with pytest.raises(InvalidParameterError):
        spread_slope(flat[:9])


def test_crossing_mass_of_delta(uniform):
    d = position_distribution(inject(uniform, 68, "A", "H"))
    assert crossing_mass(d, 86, "right") == 0.0
    assert crossing_mass(d, 86, "left") == 1.0
    with pytest.raises(InvalidParameterError):
        crossing_mass(d, 0)


def test_window_over_whole_chain_holds_everything(two_region):
    _, hist = evolve(inject(two_region, 85, "A", "V"), two_region, 30)
    np.testing.assert_allclose(boundary_peak_mass(hist, 86, 200), 1.0, atol=1e-10)
    with pytest.raises(InvalidParameterError):
        boundary_peak_mass(hist, 86, 0)


def test_fig8_peak_is_pinned_at_boundary(two_region):
    _, hist = evolve(inject(two_region, 85, "A", "V"), two_region, 100)
    cells = hist[-1].cells()
    assert abs(int(np.argmax(cells)) - 86) <= 1


def test_fig7b_peak_settles(two_region):
    _, hist = evolve(inject(two_region, 85, "A", "V"), two_region, 100)
    series = boundary_peak_mass(hist, 86, 2)
    tail = series[50:]
    assert tail.min() > 0.2
    # step-to-step flicker is a few percent; the running level is flat
    assert abs(series[50:75].mean() - series[75:].mean()) < 0.03


def test_uniform_chain_has_no_pinned_peak(uniform):
    _, hist = evolve(inject(uniform, 85, "A", "V"), uniform, 100)
    series = boundary_peak_mass(hist, 86, 2)
    assert series[-1] < 0.05
    assert series[-1] < series[:20].max() / 5


def test_jolt_schedule_only_touches_one_step(two_region):
    sched = PerturbationSchedule.jolt(30, two_region, source_region=1, target_region=0)
    assert sched.overrides_at(30) == {0: WIND0}
    assert sched.overrides_at(29) is None and sched.overrides_at(31) is None
    s = inject(two_region, 68, "A", "V")
    plain, _ = evolve(s, two_region, 30, record=False)
    jolted, _ = evolve(s, two_region, 30, sched, record=False)
    assert np.array_equal(plain.amplitudes, jolted.amplitudes)
    a, _ = evolve(s, two_region, 31, record=False)
    b, _ = evolve(s, two_region, 31, sched, record=False)
    assert not np.allclose(a.amplitudes, b.amplitudes)
    assert b.norm_squared() == pytest.approx(1.0, abs=1e-12)


def test_history_csv(tmp_path, uniform):
    _, hist = evolve(inject(uniform, 68, "A", "V"), uniform, 3)
    path = tmp_path / "d.csv"
    write_history_csv(hist, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["step", "cell", "subsite", "probability"]
    assert rows[1] == ["0", "68", "A", "1.0"]
    assert all(float(r[3]) > 1e-15 for r in rows[1:])
