import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderflux.currents import link_currents
from ladderflux.dynamics import (
    DampingRegime,
    DissipationSpec,
    MeasurementPair,
    NumericalError,
    RabiTrace,
    analytic_trace,
    damping_regime,
    dissipator,
    excitation_overlaps,
    extract_current,
    fidelity_exact,
    fidelity_strong_coupling,
    generation_plan,
    integrate_master_equation,
    lindblad_two_level_numeric,
    pair_density_matrix,
    pair_fit_parameters,
    rabi_population_difference,
    simulate_measurement,
)
from ladderflux.eigensolve import diagonalize
from ladderflux.model import LadderConfig, Leg, Units, build_open_ladder

REFERENCE = LadderConfig(20, g=3.5, k=1.75, phi=math.pi / 2, units=Units.PHYSICAL_MHZ)


@pytest.fixture(scope="module")
def ground():
    return diagonalize(build_open_ladder(REFERENCE))


def test_generation_plan(ground):
    plan = generation_plan(ground, 1.0)
    assert plan.t_pi == 0.5
    overlaps = excitation_overlaps(plan, ground)
    assert overlaps[0] == pytest.approx(1.0)
    assert np.max(np.abs(overlaps[1:])) < 1e-12
    with pytest.raises(ValueError):
        generation_plan(ground, 0.0)


def test_degenerate_ground_level_is_rejected():
    # decoupled legs with zero flux: every level is twofold degenerate
    sys_ = diagonalize(build_open_ladder(LadderConfig(6, k=0.0, phi=0.0)))
    with pytest.raises(ValueError, match="degenerate"):
        generation_plan(sys_, 1.0)


def test_reference_fidelity():
    assert fidelity_strong_coupling(0.5, 1.0, 0.05, 0.1) == pytest.approx(0.9273, abs=1e-4)
    exact = fidelity_exact(0.5, 1.0, 0.05, 0.1)
    assert abs(exact / 0.9273 - 1) < 0.005


def test_collective_rates_of_homogeneous_ladder(ground):
    rates = DissipationSpec.homogeneous(20, 0.05, 0.1)
    assert rates.collective(ground.state(1)) == pytest.approx((0.05, 0.1))


def test_damping_regimes():
    assert damping_regime(1.0, 0.05, 0.1) is DampingRegime.UNDERDAMPED
    assert damping_regime(1.0, 2.0, 0.0) is DampingRegime.CRITICAL
    assert damping_regime(0.1, 5.0, 1.0) is DampingRegime.OVERDAMPED


def test_exact_fidelity_continuous_across_critical_damping():
    t = np.linspace(0, 2, 21)
    at = fidelity_exact(t, 1.0, 2.0, 0.0)
    near = fidelity_exact(t, 1.0, 2.0 + 1e-7, 0.0)
    assert np.allclose(at, near, atol=1e-6)


@pytest.mark.parametrize("ratio", [10.0, 1.0, 0.1])
def test_numeric_lindblad_matches_closed_form(ratio):
    c1, dephasing = 1.0, ratio
    step = 1 / (200 * 2 * math.pi * max(c1, dephasing))
    times, rho11 = lindblad_two_level_numeric(c1, 0.5 * dephasing, dephasing, 1.0, step, samples=101)
    assert np.max(np.abs(rho11 - fidelity_exact(times, c1, 0.5 * dephasing, dephasing))) < 1e-6


def test_numeric_lindblad_critical_regime():
    step = 1 / (400 * 2 * math.pi * 2)
    times, rho11 = lindblad_two_level_numeric(1.0, 2.0, 0.0, 1.0, step, samples=51)
    assert np.max(np.abs(rho11 - fidelity_exact(times, 1.0, 2.0, 0.0))) < 1e-6


def test_step_guard():
    with pytest.raises(ValueError):
        lindblad_two_level_numeric(1.0, 0.1, 0.1, 1.0, step=0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.data())
def test_dissipator_preserves_trace_and_hermiticity(dim, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    relax = np.concatenate([[0.0], rng.uniform(0, 2, dim - 1)])
    deph = np.concatenate([[0.0], rng.uniform(0, 2, dim - 1)])
    d = dissipator(rho, relax, deph)
    assert abs(np.trace(d)) < 1e-12
    assert np.allclose(d, d.conj().T)


def test_master_equation_detects_blow_up():
    h = np.array([[0, 50], [50, 0]], dtype=complex)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    with pytest.raises(NumericalError):
        integrate_master_equation(h, rho0, np.zeros(2), np.zeros(2), [0.0, 1.0], step=0.2)


def test_pair_density_matrix(ground):
    pair = MeasurementPair.intraleg(10)
    rho = pair_density_matrix(pair, ground.state(1), REFERENCE)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert pair.sites()[1].rung == 11
    assert MeasurementPair.rung_pair(3).sites()[1].leg is Leg.R


@pytest.mark.parametrize("pair", [MeasurementPair.intraleg(10), MeasurementPair.intraleg(4, "R"), MeasurementPair.rung_pair(10)])
def test_simulated_trace_follows_analytic_form(ground, pair):
    rates = DissipationSpec.homogeneous(20, 0.05, 0.1)
    coupling, _ = pair_fit_parameters(pair, REFERENCE, rates)
    horizon = 3 * math.pi / coupling
    trace = simulate_measurement(pair, ground.state(1), REFERENCE, rates, horizon, samples=301)
    ref = analytic_trace(pair, ground.state(1), REFERENCE, rates, horizon, samples=301)
    assert np.max(np.abs(trace.values - ref.values)) < 0.02


def test_initial_slope_is_the_current(ground):
    # dP/dt at t = 0 equals 2 j
    pair = MeasurementPair.rung_pair(10)
    rates = DissipationSpec.homogeneous(20, 0.0, 0.0)
    j = link_currents(ground.state(1), REFERENCE).rungs[9]
    h = 1e-6
    slope = (rabi_population_difference(h, pair, ground.state(1), REFERENCE, rates)
             - rabi_population_difference(-h, pair, ground.state(1), REFERENCE, rates)) / (2 * h)
    assert slope == pytest.approx(2 * j, rel=1e-6)


def test_extract_current_noiseless_and_noisy(ground):
    rates = DissipationSpec.homogeneous(20, 0.05, 0.1)
    pair = MeasurementPair.intraleg(10)
    coupling, decay = pair_fit_parameters(pair, REFERENCE, rates)
    trace = simulate_measurement(pair, ground.state(1), REFERENCE, rates, 3 * math.pi / coupling, samples=2001)
    fit = extract_current(trace, coupling, decay)
    assert fit.j_estimate == pytest.approx(0.43, rel=0.01)
    assert fit.samples_used == 2001
    noisy = simulate_measurement(
        pair, ground.state(1), REFERENCE, rates, 3 * math.pi / coupling, samples=2001, noise_sigma=0.01, seed=5
    )
    again = simulate_measurement(
        pair, ground.state(1), REFERENCE, rates, 3 * math.pi / coupling, samples=2001, noise_sigma=0.01, seed=5
    )
    assert np.array_equal(noisy.values, again.values)
    assert extract_current(noisy, coupling, decay).j_estimate == pytest.approx(0.43, rel=0.1)


def test_extract_current_guards():
    trace = RabiTrace(np.linspace(0, 0.1, 11), np.zeros(11))
    with pytest.raises(ValueError):
        extract_current(trace, 1.0, 0.0)
    with pytest.raises(ValueError):
        extract_current(trace, 0.0, 0.0)


def test_dimensionless_measurement_uses_unit_scale():
    cfg = LadderConfig(6, g=1.0, k=0.5, phi=math.pi / 2)
    rates = DissipationSpec.homogeneous(6, 0.01, 0.02)
    pair = MeasurementPair.intraleg(3)
    coupling, decay = pair_fit_parameters(pair, cfg, rates)
    assert coupling == 1.0 and decay == pytest.approx(0.015)
