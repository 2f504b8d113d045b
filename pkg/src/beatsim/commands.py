"""Implementations of the ``beatsim`` subcommands.

Every command takes a resolved :class:`~beatsim.config.RunConfig`, writes its
files under ``config.output_dir`` and returns the in-memory results.  Outputs
carry the config digest and seed and contain no timestamps, so identical
configurations produce byte-identical files.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ensemble, model, spectral
from .config import RunConfig
from .io import provenance, write_json, write_table
from .model import AtomParams
from .trajectory import run_trajectory

log = logging.getLogger(__name__)


def _out(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _drive_params(config: RunConfig, omega: float) -> AtomParams:
    params = config.atom(omega)
    return model.saturated_params(params) if config.saturation else params


# -- validate ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    error: float
    tolerance: float
    passed: bool
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.tolerance - self.error

    def as_dict(self) -> dict:
        return {"name": self.name, "error": self.error, "tolerance": self.tolerance,
                "margin": self.margin, "passed": self.passed, "detail": self.detail}


def _check(name, error, tolerance, detail=""):
    error = float(error)
    return Check(name, error, float(tolerance), bool(error <= tolerance), detail)


def _rel(a, b):
    return abs(a - b) / abs(b)


def _random_params(rng: np.random.Generator, size: int) -> list[AtomParams]:
    return [AtomParams(delta0=rng.uniform(-2, 2), delta_g=rng.uniform(0, 1),
                       delta_e=rng.uniform(0, 1), omega=rng.uniform(1e-3, 0.3))
            for _ in range(size)]


def validation_checks(config: RunConfig) -> list[Check]:
    """Run the analytic and statistical oracle chain."""
    seed = config.require_seed()
    rng = np.random.default_rng([seed, 1])
    checks = []

    grid = _random_params(rng, 1000)
    err = max(_rel(model.decoherence_rate(p), model.decoherence_rate_direct(p)) for p in grid)
    checks.append(_check("decoherence_identity", err, config.identity_tol,
                         "Gamma two ways over 1000 random parameter sets"))

    err = max(max(abs(model.detunings(p)[0] - (p.delta0 + (p.delta_e - p.delta_g))),
                  abs(model.detunings(p)[1] - (p.delta0 - (p.delta_e - p.delta_g)))) for p in grid)
    checks.append(_check("detuning_definition", err, 0.0))

    equal = [AtomParams(delta0=0.0, delta_g=q.delta_g, delta_e=q.delta_g + abs(q.delta0) / 4,
                        omega=q.omega) for q in grid[:200]]
    err = 0.0
    for p in equal:
        theta = model.jump_phase_per_scatter(p)
        rate = model.total_jump_rate(p)
        if rate > 0 and model.decoherence_rate(p) > 0:
            err = max(err, _rel(2 * rate * math.sin(theta / 2) ** 2, 0.5 * model.decoherence_rate(p)),
                      _rel(rate * math.sin(theta), model.jump_shift_term(p)))
    checks.append(_check("equal_rate_resummation", err, config.identity_tol,
                         "Gamma/2 = R(1-cos theta), jump term = R sin theta"))

    near = [AtomParams(delta0=0.0, delta_g=0.1, delta_e=0.1 + d, omega=w)
            for d in (0.005, 0.01, 0.02, 0.05) for w in (0.01, 0.05)]
    err_gamma = max(_rel(model.decoherence_rate(p),
                         64 * p.omega ** 2 * p.zeeman_difference ** 2) for p in near)
    err_shift = max(_rel(model.jump_shift_term(p),
                         16 * p.omega ** 2 * p.zeeman_difference) for p in near)
    checks.append(_check("near_resonance_gamma", err_gamma, config.limit_tol))
    checks.append(_check("near_resonance_jump_shift", err_shift, config.limit_tol))

    sign_bad = sum(1 for p in near
                   if not (model.net_shift(p) > 0 > model.ac_stark_difference(p)))
    checks.append(_check("anomalous_sign", sign_bad, 0, "count of sign violations"))
    ratio = [AtomParams(delta0=0.0, delta_g=0.1, delta_e=0.1 + d, omega=0.05)
             for d in (0.001, 0.005, 0.01, 0.02)]
    err = max(_rel(model.jump_shift_term(p) / model.ac_stark_difference(p), -2.0) for p in ratio)
    checks.append(_check("jump_to_stark_ratio", err, 0.02))

    err = max(_rel(model.coherent_phase_per_scatter(p), model.incoherent_phase_per_cycle(p))
              for p in ratio[:3])
    checks.append(_check("incoherent_agreement_at_resonance", err, 1e-3))

    p_half = AtomParams(omega=1 / math.sqrt(8))
    err = max(_rel(model.saturated_rate(p_half), 2 * p_half.omega ** 2),
              _rel(model.saturated_rate(AtomParams(omega=1e4)), 0.5))
    checks.append(_check("saturation_limits", err, 1e-6))

    err = 0.0
    for p in _random_params(rng, 20):
        gamma = model.decoherence_rate(p)
        # beyond ~1e4 the float phase of the closed form itself drifts at 1e-10
        t = rng.uniform(0, min(10.0 / gamma, 5000.0))
        err = max(err, _rel(ensemble.poisson_sum_oracle(p, t), model.closed_form_coherence(p, t)))
    checks.append(_check("poisson_sum_vs_closed_form", err, config.oracle_tol))

    p = AtomParams.from_detunings(0.5, -0.5, omega=0.1)
    t_end = 500.0
    stats = ensemble.phase_diffusion(p, config.mc_traj, t_end, t_end / 10, seed)
    mean_jumps = stats.end_jumps.mean()
    se = stats.end_jumps.std(ddof=1) / math.sqrt(len(stats.end_jumps))
    z = abs(mean_jumps - model.total_jump_rate(p) * t_end) / se
    checks.append(_check("monte_carlo_jump_mean", z, config.n_sigma, "z-score vs R t"))

    p = AtomParams(delta0=0.0, delta_g=0.1, delta_e=0.15, omega=0.05)
    t = np.arange(0.0, 4000.0, 1.0)
    beat = spectral.beat_from_coherence(t, model.closed_form_coherence(p, t), 200.0)
    est = spectral.extract_peak(spectral.power_spectrum(beat))
    err = _rel(est.center, model.beat_angular_frequency(p) / (2 * math.pi))
    checks.append(_check("spectral_center", err, 0.005))
    err = _rel(est.fwhm, (model.decoherence_rate(p) + 2 / 200.0) / (2 * math.pi))
    checks.append(_check("spectral_fwhm", err, 0.02))
    return checks


def cmd_validate(config: RunConfig) -> dict:
    checks = validation_checks(config)
    report = {
        "provenance": provenance(config),
        "all_passed": all(c.passed for c in checks),
        "checks": [c.as_dict() for c in checks],
    }
    write_json(_out(config) / "validate.json", report)
    return report


# -- trajectory -------------------------------------------------------------

@dataclass
class TrajectoryResult:
    omega: float
    params: AtomParams
    stats: ensemble.PhaseDiffusionStats
    estimate: ensemble.PhaseSlopeEstimate | None
    files: list = field(default_factory=list)


def cmd_trajectory(config: RunConfig, fmt: str = "csv") -> list[TrajectoryResult]:
    """Phase-diffusion traces, mean line and endpoint scatter per drive strength."""
    seed = config.require_seed()
    out = _out(config)
    meta = provenance(config)
    results, summary = [], []
    for i, omega in enumerate(config.omegas):
        params = _drive_params(config, omega)
        stats = ensemble.phase_diffusion(params, max(config.n_traj, 2), config.t_max,
                                         config.grid_dt, seed, config.t_start, config.threads)
        n_runs = config.n_traj
        traces = {}
        for k in range(n_runs):
            rec = run_trajectory(params, config.t_max, config.grid_dt,
                                 ensemble.trajectory_seed(seed, k), config.t_start)
            traces[f"run_{k:03d}"] = rec.phase_series
        tag = f"trajectory_w{i}"
        row_meta = {**meta, "omega": omega}
        files = [
            write_table(out / f"{tag}_phases", {"t": stats.t_grid, **traces}, row_meta, fmt),
            write_table(out / f"{tag}_summary", {
                "t": stats.t_grid,
                "mean_phase": stats.mean_phase,
                "spread": stats.spread,
                "mean_jumps": stats.mean_jumps,
                "predicted_mean": model.total_jump_rate(params) * stats.jump_phase * stats.t_grid,
                "predicted_spread": np.sqrt(model.total_jump_rate(params) * stats.t_grid)
                * abs(stats.jump_phase),
            }, row_meta, fmt),
            write_table(out / f"{tag}_endpoints", {
                "run": np.arange(stats.n_traj),
                "seed": np.asarray(stats.seeds, dtype=np.uint64),
                "n_jumps": stats.end_jumps,
                "end_phase": stats.end_phase,
            }, row_meta, fmt),
        ]
        estimate = None
        if stats.n_traj >= 4 and stats.end_phase.std() > 0:
            estimate = ensemble.phase_slope_estimates(stats, params)
        summary.append({
            "omega": omega,
            "jump_rate": model.total_jump_rate(params),
            "jump_phase": stats.jump_phase,
            "slope": estimate.slope if estimate else 0.0,
            "slope_stderr": estimate.slope_stderr if estimate else 0.0,
            "predicted_slope": model.total_jump_rate(params) * stats.jump_phase,
            "variance": estimate.variance if estimate else 0.0,
            "variance_stderr": estimate.variance_stderr if estimate else 0.0,
            "predicted_variance": estimate.predicted_variance if estimate else 0.0,
        })
        results.append(TrajectoryResult(omega, params, stats, estimate, files))
    write_json(out / "trajectory_summary.json", {"provenance": meta, "drives": summary})
    return results


# -- ensemble ---------------------------------------------------------------

@dataclass
class EnsembleResult:
    omega: float
    params: AtomParams
    series: ensemble.EnsembleSeries
    fit: ensemble.CoherenceFit
    decay_stderr: float
    frequency_stderr: float
    envelope: ensemble.EnvelopeReport


def _batch_stderr(values) -> float:
    values = np.asarray([v for v in values if np.isfinite(v)])
    if len(values) < 2:
        return math.nan
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def cmd_ensemble(config: RunConfig, fmt: str = "csv") -> list[EnsembleResult]:
    """Ensemble coherence per drive strength with envelope and frequency fits."""
    seed = config.require_seed()
    out = _out(config)
    meta = provenance(config)
    results, summary = [], []
    n_batches = max(1, min(config.n_batches, config.n_traj // 2))
    for i, omega in enumerate(config.omegas):
        params = _drive_params(config, omega)
        batches = ensemble.average_ensemble_batches(
            params, config.n_traj, config.t_max, config.grid_dt, seed, n_batches,
            config.t_start, config.threads)
        series = ensemble.merge_ensembles(batches)
        fit = ensemble.fit_coherence(series)
        batch_fits = [ensemble.fit_coherence(b) for b in batches]
        decay_se = _batch_stderr([f.decay_rate for f in batch_fits])
        freq_se = _batch_stderr([f.angular_frequency for f in batch_fits])
        envelope = ensemble.coherence_envelope_check(series, params)
        write_table(out / f"ensemble_w{i}", {
            "t": series.t_grid,
            "re_mean": series.mean_coherence.real,
            "im_mean": series.mean_coherence.imag,
            "re_stderr": series.stderr.real,
            "im_stderr": series.stderr.imag,
            "pop_minus": series.populations[:, 0],
            "pop_plus": series.populations[:, 1],
        }, {**meta, "omega": omega, "n_traj": series.n_traj}, fmt)
        summary.append({
            "omega": omega,
            "decay_rate_fit": fit.decay_rate,
            "decay_rate_stderr": decay_se,
            "decay_rate_closed_form": model.decoherence_rate(params),
            "angular_frequency_fit": fit.angular_frequency,
            "angular_frequency_stderr": freq_se,
            "angular_frequency_closed_form": model.beat_angular_frequency(params),
            "envelope_z": envelope.z_score,
            "flags": fit.flags,
        })
        results.append(EnsembleResult(omega, params, series, fit, decay_se, freq_se, envelope))
    write_json(out / "ensemble_fit.json", {"provenance": meta, "drives": summary})
    return results


# -- sweep ------------------------------------------------------------------

@dataclass
class SweepPoint:
    n: float
    omega: float
    omega_eff: float
    center: float
    center_stderr: float
    fwhm: float
    fwhm_stderr: float
    center_td: float
    fwhm_td: float
    flags: list


@dataclass
class SweepResult:
    points: list
    bare_center: float
    shift_fit: spectral.SaturationFit | None
    width_fit: spectral.SaturationFit | None
    predicted: dict
    provenance: dict

    @property
    def n(self) -> np.ndarray:
        return np.array([p.n for p in self.points])

    @property
    def shift(self) -> np.ndarray:
        return np.array([p.center for p in self.points]) - self.bare_center

    @property
    def fwhm(self) -> np.ndarray:
        return np.array([p.fwhm for p in self.points])


def _spectral_estimate(series, config: RunConfig):
    beat = spectral.synthesize_beat(series, config.window_tau)
    spec = spectral.power_spectrum(beat, config.zero_pad_factor, config.window)
    return beat, spec, spectral.extract_peak(spec)


def _fit_summary(fit: spectral.SaturationFit | None) -> dict | None:
    if fit is None:
        return None
    return {
        "slope": fit.slope, "beta": fit.beta, "intercept": fit.intercept,
        "residual_norm": fit.residual_norm, "flags": fit.flags,
        "converged": fit.converged,
        "linear": {"slope": fit.linear_slope, "intercept": fit.linear_intercept,
                   "residual_norm": fit.linear_residual_norm},
    }


def sweep_predictions(config: RunConfig) -> dict:
    """Closed-form low-drive slopes per photon of the shift and width (cycles)."""
    unit = config.atom(config.coupling_g)  # n = 1
    tau = config.window_tau
    return {
        "shift_slope": model.net_shift(unit) / (2 * math.pi),
        "width_slope": model.decoherence_rate(unit) / (2 * math.pi),
        "beta": 8 * config.coupling_g ** 2 if config.saturation else 0.0,
        "width_intercept": 1.0 / (math.pi * tau) if tau else 0.0,
    }


def cmd_sweep(config: RunConfig, fmt: str = "csv") -> SweepResult:
    """Drive-strength sweep: ensemble, beat spectrum, center and width, saturation fits."""
    seed = config.require_seed()
    if len(set(config.omegas)) < 3:
        raise ValueError("a sweep needs at least 3 distinct drive points")
    out = _out(config)
    meta = provenance(config)
    n_batches = max(2, min(config.n_batches, config.n_traj // 2))
    points = []
    for i, (n, omega) in enumerate(zip(config.sweep_n, config.omegas)):
        params = _drive_params(config, omega)
        flags = []
        if not config.atom(omega).weak_drive:
            flags.append("outside weak-drive regime")
        batches = ensemble.average_ensemble_batches(
            params, config.n_traj, config.t_max, config.grid_dt, seed, n_batches,
            config.t_start, config.threads)
        series = ensemble.merge_ensembles(batches)
        center = fwhm = center_td = fwhm_td = math.nan
        try:
            beat, spec, est = _spectral_estimate(series, config)
            center, fwhm = est.center, est.fwhm
            write_table(out / f"spectrum_w{i}", {"freq": spec.freq, "power": spec.power},
                        {**meta, "omega": omega, "n": n}, fmt)
            td = spectral.fit_damped_sinusoid(beat, initial=est)
            center_td, fwhm_td = td.center, td.fwhm
            if not td.diagnostics["converged"]:
                flags.append("time-domain fit did not converge")
        except spectral.SpectralError as exc:
            flags.append(f"spectral: {exc}")
        batch_c, batch_w = [], []
        for b in batches:
            try:
                _, _, e = _spectral_estimate(b, config)
                batch_c.append(e.center)
                batch_w.append(e.fwhm)
            except spectral.SpectralError:
                flags.append("batch spectrum ambiguous")
        points.append(SweepPoint(n, omega, params.omega, center, _batch_stderr(batch_c),
                                 fwhm, _batch_stderr(batch_w), center_td, fwhm_td, flags))
        log.info("sweep point n=%g omega=%g center=%g fwhm=%g", n, omega, center, fwhm)

    bare_center = config.delta_g / math.pi
    n_arr = np.array([p.n for p in points])
    shift = np.array([p.center for p in points]) - bare_center
    width = np.array([p.fwhm for p in points])
    ok = np.isfinite(shift) & np.isfinite(width)
    shift_fit = width_fit = None
    if len(np.unique(n_arr[ok])) >= 3:
        shift_fit = spectral.fit_saturation_curve(n_arr[ok], shift[ok], intercept=False)
        width_fit = spectral.fit_saturation_curve(n_arr[ok], width[ok], intercept=True)
    predicted = sweep_predictions(config)
    result = SweepResult(points, bare_center, shift_fit, width_fit, predicted, meta)

    units = config.units
    write_table(out / "sweep", {
        "n": n_arr,
        "omega": [p.omega for p in points],
        "omega_eff": [p.omega_eff for p in points],
        "center": [p.center for p in points],
        "center_stderr": [p.center_stderr for p in points],
        "fwhm": width,
        "fwhm_stderr": [p.fwhm_stderr for p in points],
        "shift": shift,
        "center_td": [p.center_td for p in points],
        "fwhm_td": [p.fwhm_td for p in points],
        "shift_mhz": [units.cycles_to_mhz(s) for s in shift],
        "fwhm_mhz": [units.cycles_to_mhz(w) for w in width],
        "flags": [";".join(p.flags) or "-" for p in points],
    }, meta, fmt)
    write_json(out / "sweep_fit.json", {
        "provenance": meta,
        "bare_center": bare_center,
        "width_combination": "linear",
        "shift_fit": _fit_summary(shift_fit),
        "width_fit": _fit_summary(width_fit),
        "predicted": predicted,
        "annotations": config.annotations,
    })
    return result


# -- compare-incoherent -----------------------------------------------------

def cmd_compare_incoherent(config: RunConfig, fmt: str = "csv") -> list[dict]:
    """Coherent net phase per scattered photon versus the broadband per-cycle phase."""
    out = _out(config)
    meta = provenance(config)
    omega = config.omegas[0]
    rows = []
    for split in config.splits:
        params = AtomParams(delta0=config.delta0, delta_g=config.delta_g,
                            delta_e=config.delta_g + split, omega=omega)
        coherent = model.coherent_phase_per_scatter(params)
        incoherent = model.incoherent_phase_per_cycle(params)
        gap = coherent - incoherent
        rel = abs(gap) / abs(incoherent) if incoherent else (0.0 if gap == 0 else math.inf)
        rows.append({"split": split, "coherent": coherent, "incoherent": incoherent,
                     "gap": gap, "relative_gap": rel})
    write_table(out / "compare_incoherent",
                {k: [r[k] for r in rows] for k in ("split", "coherent", "incoherent",
                                                   "gap", "relative_gap")},
                {**meta, "delta0": config.delta0, "omega": omega}, fmt)
    return rows
