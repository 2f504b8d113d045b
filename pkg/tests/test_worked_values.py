"""Hand-computed values at a few named parameter points."""
import cmath
import math

import numpy as np
import pytest

from beatsim import model, trajectory as tr
from beatsim.ensemble import trajectory_seed
from beatsim.model import AtomParams

# delta+ = -delta- = 0.5, so A(+-) = 1 -+ i and |A|^2 = 2
SPLIT_HALF = AtomParams.from_detunings(0.5, -0.5, 0.05)
SAMPLE_SET = SPLIT_HALF.with_omega(0.075)


def test_resonant_amplitudes_are_two():
    p = AtomParams(delta0=0.0, delta_g=0.2, delta_e=0.2, omega=0.05)
    assert model.scattering_amplitude(p, +1) == 2 + 0j
    assert model.scattering_amplitude(p, -1) == 2 + 0j


def test_split_half_amplitudes():
    assert model.scattering_amplitude(SPLIT_HALF, +1) == pytest.approx(1 - 1j, abs=1e-15)
    assert model.scattering_amplitude(SPLIT_HALF, -1) == pytest.approx(1 + 1j, abs=1e-15)


def test_split_half_damping_and_stark():
    g_plus, g_minus, ac_plus, ac_minus = model.damping_and_stark(SPLIT_HALF)
    assert g_plus == pytest.approx(0.0025, rel=1e-12)
    assert g_minus == pytest.approx(0.0025, rel=1e-12)
    assert ac_plus == pytest.approx(-0.0025, rel=1e-12)
    assert ac_minus == pytest.approx(0.0025, rel=1e-12)
    assert model.jump_phase_per_scatter(SPLIT_HALF) == pytest.approx(math.pi / 2, rel=1e-14)


def test_small_split_jump_phase():
    p = AtomParams.from_detunings(0.01, -0.01, 0.05)
    theta = model.jump_phase_per_scatter(p)
    assert theta == pytest.approx(2 * math.atan(0.02), rel=1e-14)
    assert theta == pytest.approx(0.04, rel=1e-3)


def test_sample_set_rate_and_resonant_limit():
    assert model.total_jump_rate(SAMPLE_SET) == pytest.approx(0.01125, rel=1e-12)
    near = AtomParams(delta0=0.0, delta_g=0.1, delta_e=0.1 + 1e-6, omega=0.05)
    assert model.total_jump_rate(near) == pytest.approx(4 * 0.05 ** 2, rel=1e-9)


def test_incoherent_phase_at_split_half():
    assert model.incoherent_phase_per_cycle(SPLIT_HALF) == 1.0


def test_saturation_halves_rate_at_one_over_root_eight():
    p = SPLIT_HALF.with_omega(1 / math.sqrt(8))
    assert model.saturated_rate(p) == pytest.approx(0.5 * 4 * p.omega ** 2, rel=1e-14)
    assert model.saturated_rate(p.with_omega(1e4)) == pytest.approx(0.5, rel=1e-7)


def test_excited_snapshot_at_split_half():
    minus, plus = tr.excited_snapshot(tr.initial_state(), SPLIT_HALF)
    root2 = math.sqrt(2)
    assert minus == pytest.approx(0.05 * (1 + 1j) / root2, abs=1e-16)
    assert plus == pytest.approx(0.05 * (1 - 1j) / root2, abs=1e-16)
    assert tr.excited_snapshot(tr.initial_state(), SPLIT_HALF.with_omega(0.0)) == (0, 0)


@pytest.mark.parametrize("weight", [0.0, 0.2, 0.5, 0.9])
def test_jump_rate_is_state_independent_at_equal_rates(weight):
    state = tr.GroundAmplitudes(math.sqrt(weight), math.sqrt(1 - weight) * cmath.exp(0.3j))
    assert tr.jump_rate_now(state, SAMPLE_SET) == pytest.approx(0.01125, rel=1e-12)


def test_single_component_rate():
    p = AtomParams(delta0=0.2, delta_g=0.1, delta_e=0.4, omega=0.06)
    state = tr.GroundAmplitudes(1.0, 0.0)
    a_minus = 1 / (0.5 + 1j * (0.2 - 0.3))
    assert tr.jump_rate_now(state, p) == pytest.approx(0.06 ** 2 * abs(a_minus) ** 2, rel=1e-12)


def test_equal_detunings_jump_adds_no_phase():
    p = AtomParams(delta0=0.3, delta_g=0.2, delta_e=0.2, omega=0.1)
    start = tr.apply_jump(tr.initial_state(), p)
    after = tr.apply_jump(start, p)
    assert after.jump_phase_accum == 0.0
    assert after.coherence == pytest.approx(start.coherence, abs=1e-15)


def test_mean_jump_count_over_sample_runs():
    counts = np.array([tr.run_trajectory(SAMPLE_SET, 1000.0, 1000.0,
                                         trajectory_seed(2, k)).n_jumps for k in range(200)])
    stderr = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - 11.25) < 3 * stderr
