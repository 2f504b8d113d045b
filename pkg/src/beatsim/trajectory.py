"""Single quantum trajectories of the driven ground-state superposition.

Between Rayleigh scattering events the two ground amplitudes evolve with the
closed-form factors of the adiabatically eliminated model: Larmor precession,
AC Stark phase, and null-measurement damping.  A scattering event multiplies
each amplitude by its scattering amplitude and renormalizes.

The norm lost between jumps is exactly the no-jump probability, so waiting
times are drawn from the state-dependent intensity by thinning.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import model
from .model import AtomParams

_SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class GroundAmplitudes:
    """Ground-state amplitudes plus trajectory bookkeeping.

    The amplitudes are renormalized after every jump; between jumps their norm
    decays and carries the null-measurement record.
    """

    alpha_minus: complex = _SQRT_HALF
    alpha_plus: complex = _SQRT_HALF
    t: float = 0.0
    n_jumps: int = 0
    jump_phase_accum: float = 0.0

    @property
    def norm(self) -> float:
        return abs(self.alpha_minus) ** 2 + abs(self.alpha_plus) ** 2

    @property
    def populations(self) -> tuple[float, float]:
        """Normalized ``(|a-|^2, |a+|^2)``."""
        p_minus = abs(self.alpha_minus) ** 2
        p_plus = abs(self.alpha_plus) ** 2
        total = p_minus + p_plus
        return p_minus / total, p_plus / total

    @property
    def coherence(self) -> complex:
        """Normalized ``alpha_minus * conj(alpha_plus)``."""
        return self.alpha_minus * self.alpha_plus.conjugate() / self.norm

    def normalized(self) -> "GroundAmplitudes":
        scale = 1.0 / math.sqrt(self.norm)
        return replace(self, alpha_minus=self.alpha_minus * scale,
                       alpha_plus=self.alpha_plus * scale)


@dataclass
class TrajectoryRecord:
    """Sampled history of one trajectory.

    Attributes:
        seed: Integer seed of the trajectory's generator.
        jump_times: Strictly increasing scattering times in ``[0, t_max]``.
        t_grid: Uniform sampling times.
        phase_series: Accumulated jump phase at each grid time.
        coherence_series: Normalized coherence at each grid time.
        pop_minus_series: Normalized ``|alpha_minus|^2`` at each grid time.
        jump_count_series: Number of jumps up to each grid time.
    """

    seed: int
    jump_times: np.ndarray
    t_grid: np.ndarray
    phase_series: np.ndarray
    coherence_series: np.ndarray
    pop_minus_series: np.ndarray
    jump_count_series: np.ndarray = field(repr=False)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


@dataclass(frozen=True)
class _Kinetics:
    # complex decay constants k such that alpha(t + dt) = alpha(t) exp(-k dt)
    k_minus: complex
    k_plus: complex
    rate_minus: float
    rate_plus: float
    a_minus: complex
    a_plus: complex
    theta: float

    @property
    def rate_max(self) -> float:
        return max(self.rate_minus, self.rate_plus)

    @property
    def equal_rates(self) -> bool:
        return abs(self.rate_plus - self.rate_minus) <= 1e-14 * self.rate_max


@lru_cache(maxsize=256)
def _kinetics(params: AtomParams) -> _Kinetics:
    gamma_plus, gamma_minus, ac_plus, ac_minus = model.damping_and_stark(params)
    rate_plus, rate_minus = model.component_rates(params)
    return _Kinetics(
        k_minus=complex(gamma_minus, -params.delta_g + ac_minus),
        k_plus=complex(gamma_plus, params.delta_g + ac_plus),
        rate_minus=rate_minus,
        rate_plus=rate_plus,
        a_minus=model.scattering_amplitude(params, -1),
        a_plus=model.scattering_amplitude(params, 1),
        theta=model.jump_phase_per_scatter(params),
    )


def initial_state() -> GroundAmplitudes:
    """Equal superposition ``(|g-> + |g+>)/sqrt(2)`` at ``t = 0``."""
    return GroundAmplitudes()


def propagate(state: GroundAmplitudes, dt: float, params: AtomParams) -> GroundAmplitudes:
    """Evolve the amplitudes for ``dt`` without a jump (unnormalized)."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt!r}")
    if dt == 0:
        return state
    kin = _kinetics(params)
    return replace(
        state,
        alpha_minus=state.alpha_minus * cmath.exp(-kin.k_minus * dt),
        alpha_plus=state.alpha_plus * cmath.exp(-kin.k_plus * dt),
        t=state.t + dt,
    )


def excited_snapshot(state: GroundAmplitudes, params: AtomParams) -> tuple[complex, complex]:
    """Slaved excited amplitudes ``omega A(+-) alpha(+-) / sqrt(norm)``, as ``(minus, plus)``.

    The common factor ``exp(i delta0 t)`` of the rotating frame is dropped.
    """
    kin = _kinetics(params)
    scale = params.omega / math.sqrt(state.norm)
    return (scale * kin.a_minus * state.alpha_minus,
            scale * kin.a_plus * state.alpha_plus)


def jump_rate_now(state: GroundAmplitudes, params: AtomParams) -> float:
    """Instantaneous scattering rate of the normalized state."""
    kin = _kinetics(params)
    p_minus, p_plus = state.populations
    return kin.rate_minus * p_minus + kin.rate_plus * p_plus


def sample_waiting_time(state: GroundAmplitudes, params: AtomParams,
                        rng: np.random.Generator) -> float:
    """Delay until the next scattering event, by thinning against the maximal rate.

    Returns ``math.inf`` when the drive is off and no jump can occur.
    """
    kin = _kinetics(params)
    rate_max = kin.rate_max
    if rate_max <= 0.0:
        return math.inf
    if kin.equal_rates:
        return rng.exponential(1.0 / rate_max)
    w_minus = abs(state.alpha_minus) ** 2
    w_plus = abs(state.alpha_plus) ** 2
    rate_min = min(kin.rate_minus, kin.rate_plus)
    elapsed = 0.0
    while True:
        elapsed += rng.exponential(1.0 / rate_max)
        # rescaled by exp(rate_min * elapsed) so neither weight overflows
        wm = w_minus * math.exp(-(kin.rate_minus - rate_min) * elapsed)
        wp = w_plus * math.exp(-(kin.rate_plus - rate_min) * elapsed)
        rate = (kin.rate_minus * wm + kin.rate_plus * wp) / (wm + wp)
        if rng.random() * rate_max < rate:
            return elapsed


def apply_jump(state: GroundAmplitudes, params: AtomParams) -> GroundAmplitudes:
    """Collapse on one scattered photon and renormalize."""
    kin = _kinetics(params)
    alpha_minus = kin.a_minus * state.alpha_minus
    alpha_plus = kin.a_plus * state.alpha_plus
    scale = 1.0 / math.sqrt(abs(alpha_minus) ** 2 + abs(alpha_plus) ** 2)
    n_jumps = state.n_jumps + 1
    return GroundAmplitudes(
        alpha_minus=alpha_minus * scale,
        alpha_plus=alpha_plus * scale,
        t=state.t,
        n_jumps=n_jumps,
        # the per-jump phase is state independent, so the ledger is exact
        jump_phase_accum=n_jumps * kin.theta,
    )


def time_grid(t_max: float, grid_dt: float, t_start: float = 0.0) -> np.ndarray:
    """Uniform grid ``t_start, t_start + grid_dt, ...`` up to ``t_max``."""
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max!r}")
    if grid_dt <= 0:
        raise ValueError(f"grid_dt must be positive, got {grid_dt!r}")
    if not 0.0 <= t_start <= t_max:
        raise ValueError(f"t_start must lie in [0, t_max], got {t_start!r}")
    n_points = int(math.floor((t_max - t_start) / grid_dt + 1e-9)) + 1
    return t_start + grid_dt * np.arange(n_points)


def run_trajectory(params: AtomParams, t_max: float, grid_dt: float, seed: int,
                   t_start: float = 0.0) -> TrajectoryRecord:
    """Simulate one trajectory from the equal superposition up to ``t_max``.

    Args:
        params: Atom parameters.
        t_max: Final time.
        grid_dt: Sampling interval of the recorded series.
        seed: Seed for a fresh ``numpy`` generator owned by this trajectory.
        t_start: First sampling time.
    """
    t_grid = time_grid(t_max, grid_dt, t_start)
    rng = np.random.default_rng(seed)
    state = initial_state()
    times = [0.0]
    minus = [state.alpha_minus]
    plus = [state.alpha_plus]
    while True:
        wait = sample_waiting_time(state, params, rng)
        if state.t + wait > t_max:
            break
        state = apply_jump(propagate(state, wait, params), params)
        times.append(state.t)
        minus.append(state.alpha_minus)
        plus.append(state.alpha_plus)

    kin = _kinetics(params)
    times_arr = np.asarray(times)
    # index of the last jump at or before each grid time
    idx = np.searchsorted(times_arr, t_grid, side="right") - 1
    tau = t_grid - times_arr[idx]
    am = np.asarray(minus)[idx] * np.exp(-kin.k_minus * tau)
    ap = np.asarray(plus)[idx] * np.exp(-kin.k_plus * tau)
    pm = am.real ** 2 + am.imag ** 2
    norm = pm + ap.real ** 2 + ap.imag ** 2
    return TrajectoryRecord(
        seed=seed,
        jump_times=times_arr[1:],
        t_grid=t_grid,
        phase_series=idx * kin.theta,
        coherence_series=am * np.conj(ap) / norm,
        pop_minus_series=pm / norm,
        jump_count_series=idx,
    )
