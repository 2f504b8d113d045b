"""Ensemble averages over trajectories and the analytic Poisson-sum oracle.

Trajectory ``k`` of an ensemble always uses :func:`trajectory_seed` of
``(master_seed, k)``, and reductions are done over fixed-size chunks combined
in index order, so results do not depend on how the work is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import model
from .model import AtomParams
from .trajectory import run_trajectory, time_grid

CHUNK_SIZE = 250


class TruncationError(ValueError):
    """The requested number of Poisson terms cannot meet the error bound."""


def trajectory_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trajectory ``index`` derived from ``master_seed``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class _Moments:
    """Running sums over trajectories; combined by plain addition."""

    n: int
    coh: np.ndarray
    coh_re2: np.ndarray
    coh_im2: np.ndarray
    pop: np.ndarray
    pop2: np.ndarray
    phase: np.ndarray
    phase2: np.ndarray
    jumps: np.ndarray
    seeds: list = field(default_factory=list)
    end_phase: list = field(default_factory=list)
    end_jumps: list = field(default_factory=list)

    @classmethod
    def zeros(cls, size: int) -> "_Moments":
        z = np.zeros(size)
        return cls(0, np.zeros(size, complex), z.copy(), z.copy(), z.copy(),
                   z.copy(), z.copy(), z.copy(), z.copy())

    def add(self, other: "_Moments") -> None:
        self.n += other.n
        for name in ("coh", "coh_re2", "coh_im2", "pop", "pop2", "phase", "phase2", "jumps"):
            getattr(self, name).__iadd__(getattr(other, name))
        self.seeds.extend(other.seeds)
        self.end_phase.extend(other.end_phase)
        self.end_jumps.extend(other.end_jumps)


def _run_chunk(args) -> _Moments:
    params, t_max, grid_dt, t_start, master_seed, start, stop = args
    size = len(time_grid(t_max, grid_dt, t_start))
    acc = _Moments.zeros(size)
    for k in range(start, stop):
        seed = trajectory_seed(master_seed, k)
        rec = run_trajectory(params, t_max, grid_dt, seed, t_start=t_start)
        c = rec.coherence_series
        acc.n += 1
        acc.coh += c
        acc.coh_re2 += c.real ** 2
        acc.coh_im2 += c.imag ** 2
        acc.pop += rec.pop_minus_series
        acc.pop2 += rec.pop_minus_series ** 2
        acc.phase += rec.phase_series
        acc.phase2 += rec.phase_series ** 2
        acc.jumps += rec.jump_count_series
        acc.seeds.append(seed)
        acc.end_phase.append(float(rec.phase_series[-1]))
        acc.end_jumps.append(int(rec.jump_count_series[-1]))
    return acc


def _collect(params: AtomParams, t_max: float, grid_dt: float, t_start: float,
             master_seed: int, start: int, stop: int, n_jobs: int) -> _Moments:
    bounds = list(range(start, stop, CHUNK_SIZE)) + [stop]
    tasks = [(params, t_max, grid_dt, t_start, master_seed, lo, hi)
             for lo, hi in zip(bounds[:-1], bounds[1:])]
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    else:
        parts = [_run_chunk(task) for task in tasks]
    total = _Moments.zeros(len(time_grid(t_max, grid_dt, t_start)))
    for part in parts:
        total.add(part)
    return total


def _stderr(total: np.ndarray, total2: np.ndarray, n: int) -> np.ndarray:
    mean = total / n
    var = np.maximum(total2 / n - mean ** 2, 0.0) * n / (n - 1)
    return np.sqrt(var / n)


@dataclass
class EnsembleSeries:
    """Time-gridded ensemble average of the ground-state coherence.

    Attributes:
        t_grid: Uniform sampling times.
        mean_coherence: Mean normalized ``rho_{g-,g+}`` per time.
        stderr: Standard error of the mean, ``re + 1j*im`` component-wise.
        n_traj: Number of trajectories.
        populations: ``(n_points, 2)`` mean of ``(|a-|^2, |a+|^2)``.
        pop_stderr: Standard error of the ``|a-|^2`` mean.
    """

    t_grid: np.ndarray
    mean_coherence: np.ndarray
    stderr: np.ndarray
    n_traj: int
    populations: np.ndarray
    pop_stderr: np.ndarray

    @classmethod
    def _from_moments(cls, t_grid: np.ndarray, m: _Moments) -> "EnsembleSeries":
        pop_minus = m.pop / m.n
        return cls(
            t_grid=t_grid,
            mean_coherence=m.coh / m.n,
            stderr=_stderr(m.coh.real, m.coh_re2, m.n) + 1j * _stderr(m.coh.imag, m.coh_im2, m.n),
            n_traj=m.n,
            populations=np.column_stack([pop_minus, 1.0 - pop_minus]),
            pop_stderr=_stderr(m.pop, m.pop2, m.n),
        )


@dataclass
class PhaseDiffusionStats:
    """Mean and spread of the accumulated jump phase across runs.

    ``end_phase`` and ``end_jumps`` hold one value per run at the last grid
    time, for scatter plots.
    """

    t_grid: np.ndarray
    mean_phase: np.ndarray
    spread: np.ndarray
    mean_jumps: np.ndarray
    jump_phase: float
    end_phase: np.ndarray
    end_jumps: np.ndarray
    seeds: list

    @property
    def n_traj(self) -> int:
        return len(self.end_phase)


def _check_counts(n_traj: int) -> None:
    if n_traj < 2:
        raise ValueError(f"n_traj must be at least 2, got {n_traj!r}")


def average_ensemble(params: AtomParams, n_traj: int, t_max: float, grid_dt: float,
                     master_seed: int, t_start: float = 0.0, n_jobs: int = 1) -> EnsembleSeries:
    """Average ``n_traj`` trajectories into an :class:`EnsembleSeries`."""
    return average_ensemble_batches(params, n_traj, t_max, grid_dt, master_seed,
                                    n_batches=1, t_start=t_start, n_jobs=n_jobs)[0]


def average_ensemble_batches(params: AtomParams, n_traj: int, t_max: float, grid_dt: float,
                             master_seed: int, n_batches: int, t_start: float = 0.0,
                             n_jobs: int = 1) -> list[EnsembleSeries]:
    """Split one ensemble into ``n_batches`` contiguous, disjoint sub-ensembles.

    Trajectory seeds are those of the undivided ensemble, so the batches
    together hold exactly the trajectories :func:`average_ensemble` would run.
    Use :func:`merge_ensembles` to recover the full average; the scatter of
    per-batch estimates gives honest error bars for time-correlated fits.
    """
    _check_counts(n_traj)
    if not 1 <= n_batches <= n_traj // 2:
        raise ValueError(f"n_batches must be in [1, n_traj // 2], got {n_batches!r}")
    t_grid = time_grid(t_max, grid_dt, t_start)
    edges = np.linspace(0, n_traj, n_batches + 1).round().astype(int)
    return [EnsembleSeries._from_moments(
                t_grid, _collect(params, t_max, grid_dt, t_start, master_seed, lo, hi, n_jobs))
            for lo, hi in zip(edges[:-1], edges[1:])]


def merge_ensembles(parts: list[EnsembleSeries]) -> EnsembleSeries:
    """Pool disjoint sub-ensembles sampled on the same grid."""
    t_grid = parts[0].t_grid
    n = sum(p.n_traj for p in parts)
    sums = _Moments.zeros(len(t_grid))
    for p in parts:
        if not np.array_equal(p.t_grid, t_grid):
            raise ValueError("cannot merge ensembles on different grids")
        k = p.n_traj
        # rebuild raw sums from mean and standard error
        var_re = p.stderr.real ** 2 * k * (k - 1) / k
        var_im = p.stderr.imag ** 2 * k * (k - 1) / k
        var_pop = p.pop_stderr ** 2 * k * (k - 1) / k
        sums.coh += k * p.mean_coherence
        sums.coh_re2 += k * (var_re + p.mean_coherence.real ** 2)
        sums.coh_im2 += k * (var_im + p.mean_coherence.imag ** 2)
        sums.pop += k * p.populations[:, 0]
        sums.pop2 += k * (var_pop + p.populations[:, 0] ** 2)
    sums.n = n
    return EnsembleSeries._from_moments(t_grid, sums)


def phase_diffusion(params: AtomParams, n_traj: int, t_max: float, grid_dt: float,
                    master_seed: int, t_start: float = 0.0, n_jobs: int = 1) -> PhaseDiffusionStats:
    """Mean and standard deviation of the accumulated jump phase per grid time."""
    _check_counts(n_traj)
    t_grid = time_grid(t_max, grid_dt, t_start)
    m = _collect(params, t_max, grid_dt, t_start, master_seed, 0, n_traj, n_jobs)
    mean = m.phase / m.n
    var = np.maximum(m.phase2 / m.n - mean ** 2, 0.0) * m.n / (m.n - 1)
    return PhaseDiffusionStats(
        t_grid=t_grid,
        mean_phase=mean,
        spread=np.sqrt(var),
        mean_jumps=m.jumps / m.n,
        jump_phase=model.jump_phase_per_scatter(params),
        end_phase=np.asarray(m.end_phase),
        end_jumps=np.asarray(m.end_jumps),
        seeds=m.seeds,
    )


def _poisson_tail_bound(mean: float, n_max: int) -> float:
    """Chernoff bound on ``P(X > n_max)`` for ``X ~ Poisson(mean)``."""
    k = n_max + 1
    if mean == 0.0:
        return 0.0
    if k <= mean:
        return 1.0
    return math.exp(-mean + k * (1.0 + math.log(mean / k)))


def poisson_sum_oracle(params: AtomParams, t: float, n_max: int | None = None,
                       tol: float = 1e-12) -> complex:
    """Ensemble coherence at time ``t`` as an explicit sum over photon numbers.

    Each term weights ``n`` scatterings by their Poisson probability and the
    compounded amplitude factor ``(A- conj(A+))**n``.  When ``n_max`` is None
    the smallest sufficient cutoff is chosen; the Chernoff tail bound,
    relative to the magnitude of the result and with a safety factor of two,
    must stay below ``tol``.

    Raises:
        TruncationError: If an explicit ``n_max`` cannot meet ``tol``.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    gamma_plus, gamma_minus, ac_plus, ac_minus = model.damping_and_stark(params)
    a_plus = model.scattering_amplitude(params, 1)
    a_minus = model.scattering_amplitude(params, -1)
    x = params.gamma * params.omega ** 2 * t * a_minus * a_plus.conjugate()
    mean = abs(x)
    # terms are Poisson(mean) weights times exp(i n arg x); the resummed
    # series has magnitude exp(-(mean - Re x))
    floor = 0.5 * tol * math.exp(-(mean - x.real))
    if n_max is None:
        n_max = max(0, int(math.ceil(mean)))
        while _poisson_tail_bound(mean, n_max) > floor:
            n_max = max(n_max + 1, int(n_max * 1.1))
    elif _poisson_tail_bound(mean, n_max) > floor:
        raise TruncationError(
            f"n_max={n_max} leaves a tail bound of {_poisson_tail_bound(mean, n_max):.3g}"
            f" above {floor:.3g}")
    # the series cancels down to exp(-(mean - Re x)), so work with enough
    # extra digits to keep the relative error of the result at tol
    digits = 20 + int((mean - x.real) / math.log(10.0)) - int(math.log10(tol))
    with mpmath.workdps(digits):
        step = mpmath.mpc(x.real, x.imag)
        term = mpmath.exp(-mpmath.mpf(mean))
        series = term
        for k in range(1, n_max + 1):
            term = term * step / k
            series += term
        exponent = mean + complex(-(gamma_plus + gamma_minus),
                                  2.0 * params.delta_g + ac_plus - ac_minus) * t
        result = 0.5 * mpmath.exp(mpmath.mpc(exponent.real, exponent.imag)) * series
        return complex(result)


@dataclass
class CoherenceFit:
    """Exponential fit ``1/2 exp(-(decay_rate/2) t + i (omega t + phi0))`` to a mean coherence.

    ``*_sigma`` values are upper bounds on the standard error that hold for
    arbitrarily correlated per-point errors.
    """

    decay_rate: float
    decay_sigma: float
    angular_frequency: float
    frequency_sigma: float
    phase0: float
    n_points: int
    ok: bool
    flags: list


def _bounded_ls(x: np.ndarray, y: np.ndarray, sigma: np.ndarray, intercept: bool):
    # ordinary least squares; the parameter error is bounded by the sum of
    # |influence| * sigma, valid for any correlation structure.  Per-point
    # weights are avoided on purpose: before the first jump every trajectory
    # agrees, the sample variance vanishes and such points would dominate.
    design = np.column_stack([x, np.ones_like(x)]) if intercept else x[:, None]
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    influence = np.linalg.pinv(design)
    bound = np.abs(influence) @ sigma
    return coef, bound


def fit_coherence(series: EnsembleSeries, noise_factor: float = 3.0) -> CoherenceFit:
    """Fit decay rate and precession frequency of ``series.mean_coherence``.

    Only the leading run of points whose magnitude exceeds ``noise_factor``
    times its standard error is used.  The fit is flagged as failed when that
    run covers no more than half of the grid.
    """
    t = series.t_grid
    c = series.mean_coherence
    mag = np.abs(c)
    # radial and tangential standard errors
    unit = np.where(mag > 0, c / np.where(mag > 0, mag, 1.0), 1.0)
    s_re, s_im = series.stderr.real, series.stderr.imag
    radial = np.hypot(unit.real * s_re, unit.imag * s_im)
    tangential = np.hypot(unit.imag * s_re, unit.real * s_im)
    floor = np.maximum(radial, tangential)
    above = mag > noise_factor * floor
    n_good = len(t) if above.all() else int(np.argmin(above))
    flags = []
    good = slice(0, n_good)
    if n_good <= len(t) // 2:
        flags.append("envelope below noise floor for more than half the grid")
    if n_good < 3:
        return CoherenceFit(math.nan, math.nan, math.nan, math.nan, math.nan,
                            n_good, False, flags + ["too few points"])
    tg = t[good]
    log_sigma = radial[good] / mag[good]
    (slope,), (slope_bound,) = _bounded_ls(tg, np.log(2.0 * mag[good]), log_sigma, intercept=False)
    phase = np.unwrap(np.angle(c[good]))
    phase_sigma = tangential[good] / mag[good]
    (omega, phi0), (omega_bound, _) = _bounded_ls(tg, phase, phase_sigma, intercept=True)
    return CoherenceFit(
        decay_rate=-2.0 * slope,
        decay_sigma=2.0 * slope_bound,
        angular_frequency=omega,
        frequency_sigma=omega_bound,
        phase0=phi0,
        n_points=n_good,
        ok=not flags,
        flags=flags,
    )


@dataclass
class EnvelopeReport:
    gamma_fit: float
    gamma_closed_form: float
    sigma: float
    z_score: float
    ok: bool
    flags: list


def coherence_envelope_check(series: EnsembleSeries, params: AtomParams) -> EnvelopeReport:
    """Compare the fitted envelope decay rate with ``omega^2 gamma |A+ - A-|^2``."""
    fit = fit_coherence(series)
    closed = model.decoherence_rate_direct(params)
    diff = fit.decay_rate - closed
    if fit.decay_sigma > 0:
        z = diff / fit.decay_sigma
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return EnvelopeReport(fit.decay_rate, closed, fit.decay_sigma, z, fit.ok, fit.flags)


@dataclass
class PhaseSlopeEstimate:
    """Endpoint estimates of the mean phase drift and the phase variance.

    ``slope`` is the mean final phase divided by the final time; the variance
    standard error uses the sample fourth central moment.
    """

    t_end: float
    slope: float
    slope_stderr: float
    variance: float
    variance_stderr: float
    predicted_slope: float
    predicted_variance: float

    @property
    def slope_z(self) -> float:
        return (self.slope - self.predicted_slope) / self.slope_stderr

    @property
    def variance_z(self) -> float:
        return (self.variance - self.predicted_variance) / self.variance_stderr


def phase_slope_estimates(stats: PhaseDiffusionStats, params: AtomParams) -> PhaseSlopeEstimate:
    """Compare endpoint phase statistics with the compound-Poisson prediction.

    With jumps at rate ``R`` and a fixed phase step ``theta``, the phase has
    mean ``R theta t`` and variance ``R theta**2 t``.
    """
    x = np.asarray(stats.end_phase, dtype=float)
    n = len(x)
    t_end = float(stats.t_grid[-1])
    mean = x.mean()
    var = x.var(ddof=1)
    m4 = np.mean((x - mean) ** 4)
    var_se = math.sqrt(max(m4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)
    rate = model.total_jump_rate(params)
    theta = stats.jump_phase
    return PhaseSlopeEstimate(
        t_end=t_end,
        slope=mean / t_end,
        slope_stderr=x.std(ddof=1) / math.sqrt(n) / t_end,
        variance=var,
        variance_stderr=var_se,
        predicted_slope=rate * theta,
        predicted_variance=rate * theta ** 2 * t_end,
    )
