"""Beat spectra, peak extraction and least-squares fits.

Frequencies returned here are cyclic (cycles per ``1/gamma``); a coherence
precessing at angular rate ``w`` peaks at ``w / (2 pi)``.

The fitting routines are also wrapped as scikit-learn estimators
(:class:`BeatSpectrumEstimator`, :class:`DampedSinusoidRegressor`,
:class:`SaturationRegressor`) so they compose with pipelines and
``get_params``/``set_params``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .ensemble import EnsembleSeries

HALF_POWER = 0.5


class SpectralError(ValueError):
    """The spectrum has no well-defined single peak."""


@dataclass
class BeatSignal:
    t_grid: np.ndarray
    values: np.ndarray
    window_tau: float | None = None

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])


@dataclass
class Spectrum:
    """One-sided power spectrum normalized so that ``power.sum() == sum(x**2)``."""

    freq: np.ndarray
    power: np.ndarray
    zero_pad_factor: int = 1
    window: str = "none"
    n_fft: int | None = None

    def density(self) -> np.ndarray:
        """Power with the unpaired DC (and Nyquist) bins restored to two-sided weight.

        The folded ``power`` halves those bins relative to their neighbours,
        which would fake a maximum one bin above DC.
        """
        out = self.power.copy()
        out[0] *= 2.0
        if self.n_fft is not None and self.n_fft % 2 == 0:
            out[-1] *= 2.0
        return out


@dataclass
class SpectrumEstimate:
    center: float
    fwhm: float
    peak_power: float
    method: str
    diagnostics: dict = field(default_factory=dict)


def _check_uniform(t: np.ndarray) -> None:
    if t.ndim != 1 or len(t) < 2:
        raise ValueError("time grid must be one-dimensional with at least two points")
    steps = np.diff(t)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * abs(steps[0]) * max(1.0, len(t)):
        raise ValueError("time grid must be uniform and increasing")


def beat_from_coherence(t_grid, coherence, window_tau: float | None = None) -> BeatSignal:
    """Real beat ``Re[coherence] exp(-t/window_tau)`` on a uniform grid.

    ``window_tau=None`` (or infinity) applies no observation-window decay.
    """
    t = np.asarray(t_grid, dtype=float)
    _check_uniform(t)
    values = np.real(np.asarray(coherence)).astype(float)
    if window_tau is not None and math.isfinite(window_tau):
        if window_tau <= 0:
            raise ValueError(f"window_tau must be positive, got {window_tau!r}")
        values = values * np.exp(-t / window_tau)
    else:
        window_tau = None
    if not np.all(np.isfinite(values)):
        raise ValueError("beat signal contains non-finite values")
    return BeatSignal(t, values, window_tau)


def synthesize_beat(series: EnsembleSeries, window_tau: float | None = None) -> BeatSignal:
    """Beat signal written by an ensemble coherence, optionally damped by a transit window."""
    return beat_from_coherence(series.t_grid, series.mean_coherence, window_tau)


def power_spectrum(signal: BeatSignal, zero_pad_factor: int = 8,
                   window: str = "none") -> Spectrum:
    """One-sided periodogram of ``signal``, zero-padded by ``zero_pad_factor``.

    Args:
        signal: Beat signal with at least 64 samples.
        zero_pad_factor: Transform length as a multiple of the signal length.
        window: ``"none"`` (rectangular) or ``"hann"``.
    """
    x = np.asarray(signal.values, dtype=float)
    if len(x) < 64:
        raise ValueError(f"need at least 64 samples, got {len(x)}")
    if zero_pad_factor < 1:
        raise ValueError(f"zero_pad_factor must be >= 1, got {zero_pad_factor!r}")
    if window == "hann":
        x = x * np.hanning(len(x))
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    m = zero_pad_factor * len(x)
    spec = np.fft.rfft(x, n=m)
    power = np.abs(spec) ** 2 / m
    # fold negative frequencies onto the one-sided grid
    if m % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    return Spectrum(np.fft.rfftfreq(m, signal.dt), power, zero_pad_factor, window, m)


def _half_crossing(freq, power, peak, level, direction):
    i = peak
    last = len(power) - 1
    while power[i] >= level:
        i += direction
        if i < 0 or i > last:
            raise SpectralError("half-maximum crossing lies beyond the spectrum edge")
    j = i - direction
    # linear interpolation between bins i (below) and j (above)
    frac = (power[j] - level) / (power[j] - power[i])
    return freq[j] + frac * (freq[i] - freq[j]), i


def extract_peak(spectrum: Spectrum) -> SpectrumEstimate:
    """Center by 3-point parabolic interpolation on log power, FWHM by linear interpolation.

    Raises:
        SpectralError: If the maximum sits on a grid edge or a secondary local
            maximum outside the main lobe reaches half the peak power.
    """
    freq, power = spectrum.freq, spectrum.density()
    k = int(np.argmax(power))
    if k == 0 or k == len(power) - 1:
        raise SpectralError("spectral maximum lies on the grid edge")
    if power[k] <= 0:
        raise SpectralError("spectrum is identically zero")
    lm, l0, lp = np.log(np.maximum(power[k - 1:k + 2], np.finfo(float).tiny))
    denom = lm - 2.0 * l0 + lp
    offset = 0.5 * (lm - lp) / denom if denom < 0 else 0.0
    df = freq[1] - freq[0]
    center = freq[k] + offset * df
    peak_power = float(np.exp(l0 - 0.25 * (lm - lp) * offset))

    level = HALF_POWER * peak_power
    lo, i_lo = _half_crossing(freq, power, k, level, -1)
    hi, i_hi = _half_crossing(freq, power, k, level, +1)
    outside = np.r_[power[:i_lo + 1], power[i_hi:]]
    interior = (outside[1:-1] > outside[:-2]) & (outside[1:-1] >= outside[2:])
    secondary = outside[1:-1][interior]
    if secondary.size and secondary.max() >= level:
        raise SpectralError("secondary maximum within 3 dB of the main peak")
    return SpectrumEstimate(
        center=float(center),
        fwhm=float(hi - lo),
        peak_power=peak_power,
        method="spectral-interp",
        diagnostics={
            "peak_bin": k,
            "bin_width": float(df),
            "secondary_max_ratio": float(secondary.max() / peak_power) if secondary.size else 0.0,
            "nyquist": float(freq[-1]),
        },
    )


@dataclass
class LeastSquaresResult:
    params: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def _numerical_jacobian(fun, p, f0):
    jac = np.empty((len(f0), len(p)))
    for j in range(len(p)):
        h = 1e-7 * max(abs(p[j]), 1e-3)
        up, dn = p.copy(), p.copy()
        up[j] += h
        dn[j] -= h
        jac[:, j] = (fun(up) - fun(dn)) / (2.0 * h)
    return jac


def gauss_newton(residuals, p0, max_iter: int = 200, rtol: float = 1e-10) -> LeastSquaresResult:
    """Damped Gauss-Newton (Levenberg-style) minimization of ``|residuals(p)|^2``.

    Uses a central-difference Jacobian.  Converges when the relative step
    falls below ``rtol``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _gauss_newton(residuals, p0, max_iter, rtol)


def _gauss_newton(residuals, p0, max_iter, rtol):
    p = np.asarray(p0, dtype=float).copy()
    r = residuals(p)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        jac = _numerical_jacobian(residuals, p, r)
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                step = -np.linalg.solve(jtj + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(jtj + lam * np.diag(diag), grad, rcond=None)[0]
            trial = p + step
            r_trial = residuals(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial <= cost:
                break
            lam *= 10.0
            if lam > 1e12:
                return LeastSquaresResult(p, math.sqrt(cost), it, False)
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(step) <= rtol * (np.linalg.norm(p) + rtol):
            return LeastSquaresResult(p, math.sqrt(cost), it, True)
    return LeastSquaresResult(p, math.sqrt(cost), max_iter, False)


def _damped_cosine(p, t):
    a, b, w, phi = p
    return a * np.exp(-b * t) * np.cos(w * t + phi)


def fit_damped_sinusoid(signal: BeatSignal, n_starts: int = 8, max_iter: int = 200,
                        initial: SpectrumEstimate | None = None) -> SpectrumEstimate:
    """Time-domain fit of ``a exp(-b t) cos(w t + phi)``.

    Frequency and decay start from the spectral peak estimate (computed when
    ``initial`` is not given); ``n_starts`` evenly spaced phase offsets are
    tried.  Returns ``w/(2 pi)`` as center and ``b/pi`` as FWHM-equivalent.
    Non-convergence is reported in ``diagnostics["converged"]``.
    """
    t = signal.t_grid - signal.t_grid[0]
    y = signal.values
    if initial is None:
        initial = extract_peak(power_spectrum(signal))
    w0 = 2.0 * math.pi * initial.center
    b0 = math.pi * initial.fwhm
    a0 = float(np.max(np.abs(y)))

    def resid(p):
        return _damped_cosine(p, t) - y

    best = None
    for k in range(n_starts):
        phi0 = -math.pi + 2.0 * math.pi * k / n_starts
        res = gauss_newton(resid, [a0, b0, w0, phi0], max_iter=max_iter)
        if best is None or res.residual_norm < best.residual_norm:
            best = res
    a, b, w, phi = best.params
    # samples cannot tell w from its aliases w + 2 pi k/dt; fold into the Nyquist band
    w_s = 2.0 * math.pi / signal.dt
    w = w % w_s
    if w > 0.5 * w_s:
        w, phi = w_s - w, -phi
    if a < 0:
        a, phi = -a, phi + math.pi
    if w < 0:
        w, phi = -w, -phi
    phi = (phi + math.pi) % (2.0 * math.pi) - math.pi
    # phase is referenced to the first sample time
    return SpectrumEstimate(
        center=w / (2.0 * math.pi),
        fwhm=b / math.pi,
        peak_power=a,
        method="time-domain-fit",
        diagnostics={
            "amplitude": a,
            "decay": b,
            "angular_frequency": w,
            "phase": phi,
            "residual_norm": best.residual_norm,
            "iterations": best.iterations,
            "converged": best.converged,
        },
    )


@dataclass
class SaturationFit:
    """Least-squares fits of ``s n/(1 + beta n) (+ c)`` and the nested ``s n (+ c)``."""

    slope: float
    beta: float
    intercept: float
    residual_norm: float
    linear_slope: float
    linear_intercept: float
    linear_residual_norm: float
    converged: bool
    flags: list = field(default_factory=list)

    def predict(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return self.slope * n / (1.0 + self.beta * n) + self.intercept

    def predict_linear(self, n) -> np.ndarray:
        return self.linear_slope * np.asarray(n, dtype=float) + self.linear_intercept


def fit_saturation_curve(n, values, intercept: bool = False) -> SaturationFit:
    """Fit a saturating curve to ``(n, value)`` points.

    Args:
        n: Drive strengths (photon numbers), at least 3 distinct.
        values: Measured quantity per point.
        intercept: Include an additive constant (used for widths, whose
            zero-drive value is the window width; shifts must vanish at zero).
    """
    n = np.asarray(n, dtype=float)
    y = np.asarray(values, dtype=float)
    if n.shape != y.shape or n.ndim != 1:
        raise ValueError("n and values must be one-dimensional and of equal length")
    if len(np.unique(n)) < 3:
        raise ValueError("need at least 3 distinct n values")

    def linear_fit(x):
        design = np.column_stack([x, np.ones_like(x)]) if intercept else x[:, None]
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = design @ coef - y
        return coef, float(np.linalg.norm(resid))

    lin, lin_norm = linear_fit(n)
    lin_slope = float(lin[0])
    lin_c = float(lin[1]) if intercept else 0.0

    # for fixed beta the model is linear in (s, c): profile over beta, then polish
    scale = 1.0 / max(np.max(np.abs(n)), 1e-300)
    best_beta, best_norm = 0.0, lin_norm
    for beta in scale * np.concatenate([-0.5 * np.logspace(-4, 0, 10), np.logspace(-4, 3, 60)]):
        if np.any(1.0 + beta * n <= 0):
            continue
        _, norm = linear_fit(n / (1.0 + beta * n))
        if norm < best_norm:
            best_beta, best_norm = beta, norm
    coef0, _ = linear_fit(n / (1.0 + best_beta * n))

    def resid(p):
        pred = p[0] * n / (1.0 + p[1] * n)
        if intercept:
            pred = pred + p[2]
        return pred - y

    start = [coef0[0], best_beta] + ([coef0[1]] if intercept else [])
    res = gauss_newton(resid, start)
    flags = []
    if not res.converged:
        flags.append("saturated fit did not converge")
    if np.any(1.0 + res.params[1] * n <= 0):
        flags.append("pole inside the data range")
    return SaturationFit(
        slope=float(res.params[0]),
        beta=float(res.params[1]),
        intercept=float(res.params[2]) if intercept else 0.0,
        residual_norm=res.residual_norm,
        linear_slope=lin_slope,
        linear_intercept=lin_c,
        linear_residual_norm=lin_norm,
        converged=res.converged,
        flags=flags,
    )


class BeatSpectrumEstimator(BaseEstimator):
    """Estimate center frequency and FWHM of a uniformly sampled beat.

    ``fit(t, y)`` takes sample times and real beat values.

    Args:
        method: ``"spectral"`` for peak interpolation on the periodogram or
            ``"time-domain"`` for a damped-sinusoid fit.
        zero_pad_factor: Transform length as a multiple of the signal length.
        window: ``"none"`` or ``"hann"``.
        window_tau: Extra observation-window decay applied before analysis.
    """

    def __init__(self, method="spectral", zero_pad_factor=8, window="none", window_tau=None):
        self.method = method
        self.zero_pad_factor = zero_pad_factor
        self.window = window
        self.window_tau = window_tau

    def fit(self, t, y):
        t = check_array(np.asarray(t, dtype=float).reshape(-1, 1), ensure_min_samples=64).ravel()
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=64).ravel()
        if len(t) != len(y):
            raise ValueError("t and y must have the same length")
        signal = beat_from_coherence(t, y, self.window_tau)
        peak = extract_peak(power_spectrum(signal, self.zero_pad_factor, self.window))
        if self.method == "spectral":
            est = peak
        elif self.method == "time-domain":
            est = fit_damped_sinusoid(signal, initial=peak)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.estimate_ = est
        self.center_ = est.center
        self.fwhm_ = est.fwhm
        return self


class DampedSinusoidRegressor(RegressorMixin, BaseEstimator):
    """``a exp(-b t) cos(w t + phi)`` regressor on a single time feature."""

    def __init__(self, n_starts=8, max_iter=200):
        self.n_starts = n_starts
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=64)
        t = X[:, 0]
        order = np.argsort(t)
        signal = BeatSignal(t[order], y[order])
        _check_uniform(signal.t_grid)
        est = fit_damped_sinusoid(signal, n_starts=self.n_starts, max_iter=self.max_iter)
        d = est.diagnostics
        self.t0_ = float(signal.t_grid[0])
        self.coef_ = np.array([d["amplitude"], d["decay"], d["angular_frequency"], d["phase"]])
        self.converged_ = d["converged"]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return _damped_cosine(self.coef_, X[:, 0] - self.t0_)


class SaturationRegressor(RegressorMixin, BaseEstimator):
    """Saturating-rate regressor ``s n/(1 + beta n) + c`` on a single feature ``n``.

    Args:
        intercept: Fit the additive constant ``c`` (otherwise fixed at zero).
        saturate: When False, fit the nested linear model ``s n (+ c)``.
    """

    def __init__(self, intercept=False, saturate=True):
        self.intercept = intercept
        self.saturate = saturate

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        fit = fit_saturation_curve(X[:, 0], y, intercept=self.intercept)
        self.fit_ = fit
        if self.saturate:
            self.slope_, self.beta_, self.intercept_ = fit.slope, fit.beta, fit.intercept
        else:
            self.slope_, self.beta_, self.intercept_ = fit.linear_slope, 0.0, fit.linear_intercept
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        n = check_array(X)[:, 0]
        return self.slope_ * n / (1.0 + self.beta_ * n) + self.intercept_
