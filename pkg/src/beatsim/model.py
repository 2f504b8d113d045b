"""Closed-form four-level model of a driven ground-state Zeeman coherence.

All frequencies and rates are in units of the excited-state decay rate
``gamma`` and times in units of ``1/gamma``.  The "+" branch is always the
``g+ -> e+`` transition, detuned by ``delta0 + (delta_e - delta_g)``.

The tracked coherence is ``rho_{g-,g+}``, proportional to
``alpha_minus * conj(alpha_plus)``; with this ordering a drive that raises the
beat frequency gives a positive shift.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

WEAK_DRIVE_LIMIT = 0.1


@dataclass(frozen=True)
class AtomParams:
    """Physical parameters of the four-level atom.

    Attributes:
        gamma: Excited-state decay rate (1 by convention).
        delta0: Drive detuning from the unshifted transition.
        delta_g: Ground-state Zeeman shift.
        delta_e: Excited-state Zeeman shift.
        omega: Drive half-Rabi frequency.
    """

    gamma: float = 1.0
    delta0: float = 0.0
    delta_g: float = 0.1
    delta_e: float = 0.15
    omega: float = 0.05

    def __post_init__(self):
        for name in ("gamma", "delta0", "delta_g", "delta_e", "omega"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        for name in ("delta_g", "delta_e", "omega"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)!r}")

    @classmethod
    def from_detunings(cls, delta_plus: float, delta_minus: float, omega: float,
                       delta_g: float = 0.1, gamma: float = 1.0) -> "AtomParams":
        """Build parameters from the two transition detunings.

        ``delta_plus - delta_minus`` must be non-negative since it equals
        ``2 (delta_e - delta_g)`` and ``delta_e`` is fixed by ``delta_g``.
        """
        split = 0.5 * (delta_plus - delta_minus)
        return cls(gamma=gamma, delta0=0.5 * (delta_plus + delta_minus),
                   delta_g=delta_g, delta_e=delta_g + split, omega=omega)

    @property
    def zeeman_difference(self) -> float:
        return self.delta_e - self.delta_g

    @property
    def weak_drive(self) -> bool:
        """True when the lowest-order treatment in ``(2 omega/gamma)**2`` applies.

        This is advisory only: every function stays defined for strong drive.
        """
        return (2.0 * self.omega / self.gamma) ** 2 < WEAK_DRIVE_LIMIT

    def with_omega(self, omega: float) -> "AtomParams":
        return replace(self, omega=omega)


@dataclass(frozen=True)
class DerivedRates:
    """Every closed-form quantity derived from one :class:`AtomParams`."""

    delta_plus: float
    delta_minus: float
    a_plus: complex
    a_minus: complex
    gamma_plus: float
    gamma_minus: float
    ac_plus: float
    ac_minus: float
    big_gamma: float
    net_shift: float
    jump_rate: float
    jump_phase: float


def detunings(params: AtomParams) -> tuple[float, float]:
    """Return ``(delta_plus, delta_minus)``."""
    return params.delta0 + params.zeeman_difference, params.delta0 - params.zeeman_difference


def scattering_amplitude(params: AtomParams, branch: int) -> complex:
    """Rayleigh scattering amplitude ``1 / (gamma/2 + i delta_branch)``.

    Args:
        params: Atom parameters.
        branch: ``+1`` for the ``g+`` transition, ``-1`` for ``g-``.
    """
    if branch not in (1, -1):
        raise ValueError(f"branch must be +1 or -1, got {branch!r}")
    d_plus, d_minus = detunings(params)
    delta = d_plus if branch > 0 else d_minus
    return 1.0 / complex(0.5 * params.gamma, delta)


def _amplitudes(params: AtomParams) -> tuple[complex, complex]:
    return scattering_amplitude(params, 1), scattering_amplitude(params, -1)


def damping_and_stark(params: AtomParams) -> tuple[float, float, float, float]:
    """Null-measurement damping rates and AC Stark shifts.

    Returns:
        ``(gamma_plus, gamma_minus, ac_plus, ac_minus)``.
    """
    a_plus, a_minus = _amplitudes(params)
    d_plus, d_minus = detunings(params)
    w2g = params.omega ** 2 * params.gamma
    gamma_plus = 0.5 * w2g * abs(a_plus) ** 2
    gamma_minus = 0.5 * w2g * abs(a_minus) ** 2
    ac_plus = -d_plus / (0.5 * params.gamma) * gamma_plus
    ac_minus = -d_minus / (0.5 * params.gamma) * gamma_minus
    return gamma_plus, gamma_minus, ac_plus, ac_minus


def _interference(params: AtomParams) -> complex:
    a_plus, a_minus = _amplitudes(params)
    return a_minus * a_plus.conjugate()


def decoherence_rate(params: AtomParams) -> float:
    """Ensemble decay rate ``Gamma`` of the ground-state coherence.

    Evaluates ``2 (gamma_plus + gamma_minus - omega^2 gamma Re[A- conj(A+)])``
    term by term.  The terms nearly cancel when the two detunings are close,
    so they are formed in exact rational arithmetic from the float inputs and
    rounded once; the result is algebraically ``omega^2 gamma |A+ - A-|^2``.
    """
    half_g = Fraction(params.gamma) / 2
    split = Fraction(params.delta_e) - Fraction(params.delta_g)
    d_plus = Fraction(params.delta0) + split
    d_minus = Fraction(params.delta0) - split
    w2g = Fraction(params.omega) ** 2 * Fraction(params.gamma)
    den_plus = half_g ** 2 + d_plus ** 2
    den_minus = half_g ** 2 + d_minus ** 2
    gamma_plus = w2g / 2 / den_plus
    gamma_minus = w2g / 2 / den_minus
    # Re[A- conj(A+)] with A = (gamma/2 - i delta) / (gamma^2/4 + delta^2)
    interference_re = (half_g ** 2 + d_plus * d_minus) / (den_plus * den_minus)
    return float(2 * (gamma_plus + gamma_minus - w2g * interference_re))


def decoherence_rate_direct(params: AtomParams) -> float:
    """``omega^2 gamma |A+ - A-|^2``, the difference-of-amplitudes form."""
    a_plus, a_minus = _amplitudes(params)
    # A+ - A- = -2i (delta_e - delta_g) A+ A-, free of cancellation
    diff = 2.0 * params.zeeman_difference * abs(a_plus) * abs(a_minus)
    return params.omega ** 2 * params.gamma * diff ** 2


def ac_stark_difference(params: AtomParams) -> float:
    """``ac_plus - ac_minus``, the virtual-transition part of the net shift."""
    _, _, ac_plus, ac_minus = damping_and_stark(params)
    return ac_plus - ac_minus


def jump_shift_term(params: AtomParams) -> float:
    """``omega^2 gamma Im[A- conj(A+)]``, the shift contributed by real scattering."""
    return params.omega ** 2 * params.gamma * _interference(params).imag


def net_shift(params: AtomParams) -> float:
    """Net shift ``2 Delta`` of the coherence precession rate."""
    return ac_stark_difference(params) + jump_shift_term(params)


def beat_angular_frequency(params: AtomParams) -> float:
    """Angular precession rate ``2 (delta_g + Delta)`` of ``rho_{g-,g+}``."""
    return 2.0 * params.delta_g + net_shift(params)


def jump_phase_per_scatter(params: AtomParams) -> float:
    """Phase gained by ``rho_{g-,g+}`` in one scattering event.

    ``arg(A- conj(A+))``; tends to ``4 (delta_e - delta_g)/gamma`` near resonance.
    """
    return cmath.phase(_interference(params))


def component_rates(params: AtomParams) -> tuple[float, float]:
    """Per-component scattering rates ``(R+, R-) = gamma omega^2 |A+-|^2``."""
    a_plus, a_minus = _amplitudes(params)
    w2g = params.omega ** 2 * params.gamma
    return w2g * abs(a_plus) ** 2, w2g * abs(a_minus) ** 2


def total_jump_rate(params: AtomParams, pop_minus: float = 0.5,
                    pop_plus: float | None = None) -> float:
    """Scattering rate of a state with the given ground populations.

    The default weights are the equal superposition; in the equal-rate regime
    the result does not depend on them.
    """
    if pop_plus is None:
        pop_plus = 1.0 - pop_minus
    r_plus, r_minus = component_rates(params)
    total = pop_minus + pop_plus
    return (r_minus * pop_minus + r_plus * pop_plus) / total


def max_jump_rate(params: AtomParams) -> float:
    return max(component_rates(params))


def incoherent_phase_per_cycle(params: AtomParams) -> float:
    """Phase advance per excitation cycle under broadband drive, ``2 (delta_e - delta_g)/gamma``."""
    return 2.0 * params.zeeman_difference / params.gamma


def coherent_phase_per_scatter(params: AtomParams) -> float:
    """Net coherent phase per scattered photon, ``2 Delta / R``.

    Includes the AC Stark contribution, so it is the quantity comparable to
    :func:`incoherent_phase_per_cycle`.  Zero when there is no drive.
    """
    rate = total_jump_rate(params)
    if rate == 0.0:
        return 0.0
    return net_shift(params) / rate


def saturation_factor(params: AtomParams) -> float:
    """Two-level saturation factor ``1 / (1 + 8 omega^2/gamma^2)``."""
    return 1.0 / (1.0 + 8.0 * params.omega ** 2 / params.gamma ** 2)


def saturated_rate(params: AtomParams) -> float:
    """Saturated jump rate ``(4 omega^2/gamma) / (1 + 8 omega^2/gamma^2)``.

    Monotone in ``omega`` with asymptote ``gamma/2``.
    """
    return 4.0 * params.omega ** 2 / params.gamma * saturation_factor(params)


def saturated_params(params: AtomParams) -> AtomParams:
    """Parameters whose effective drive reproduces the saturated jump rate.

    Every rate in the model scales as ``omega^2``, so replacing ``omega^2`` by
    ``omega^2 / (1 + 8 omega^2/gamma^2)`` saturates all of them together.
    """
    return params.with_omega(params.omega * math.sqrt(saturation_factor(params)))


def derive(params: AtomParams) -> DerivedRates:
    """Bundle every closed-form rate and shift for ``params``."""
    d_plus, d_minus = detunings(params)
    a_plus, a_minus = _amplitudes(params)
    gamma_plus, gamma_minus, ac_plus, ac_minus = damping_and_stark(params)
    return DerivedRates(
        delta_plus=d_plus,
        delta_minus=d_minus,
        a_plus=a_plus,
        a_minus=a_minus,
        gamma_plus=gamma_plus,
        gamma_minus=gamma_minus,
        ac_plus=ac_plus,
        ac_minus=ac_minus,
        big_gamma=decoherence_rate(params),
        net_shift=net_shift(params),
        jump_rate=total_jump_rate(params),
        jump_phase=jump_phase_per_scatter(params),
    )


def closed_form_coherence(params: AtomParams, t):
    """Ensemble coherence ``1/2 exp(-Gamma t/2) exp(i 2 (delta_g + Delta) t)``.

    Accepts a scalar or an array of times.
    """
    t = np.asarray(t, dtype=float)
    rate = -0.5 * decoherence_rate(params) + 1j * beat_angular_frequency(params)
    out = 0.5 * np.exp(rate * t)
    return out[()] if out.ndim == 0 else out
