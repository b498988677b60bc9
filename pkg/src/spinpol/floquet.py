"""Floquet-engineered realization of local counterdiabatic driving.

A high-frequency modulation of the qubit field alone reproduces the
order-1 counterdiabatic Hamiltonian stroboscopically, at the price of a
rescaled internal time s with ds/dt = G(t) = J0(beta) cos(beta) and

    beta(t) = arctan(-lam'(s) * alpha_1(lam(s))),
    Lambda(t) = G lam(s) + beta w sin(w t) + beta' (1 - cos(w t)).

Because beta depends on t only through s, the map between lab time and
rescaled time is a plain quadrature t(s) = int ds'/G(s'), which this module
inverts numerically.  The oscillating part of Lambda is a total derivative
of beta (1 - cos(w t)), so diagonal phase integrals stay closed-form.

The lab duration cannot be pushed below a finite minimum: as the rescaled
duration tends to zero, t(tau_S) tends to a positive limit set by the
typical resonant gap.  Ramps faster than that fall back to a bare resonant
oscillation Lambda = (pi/2) w sin(w t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import j0

from spinpol.model import ModelRealization
from spinpol.ramps import RampSpec

__all__ = [
    "FERampTrace",
    "SpeedLimitExceededError",
    "fe_ramp",
    "fe_ramp_or_fallback",
    "fe_min_lab_duration",
    "speed_limit",
    "speed_limit_quadrature",
]

_BETA_EDGE = np.pi / 2 - 1e-6
_J0_HALF_PI = float(j0(np.pi / 2))
# C = J0(pi/4) / (sqrt(2) J0(pi/2)), the edge-expansion constant of the
# closed-form speed limit.
SPEED_LIMIT_C = float(j0(np.pi / 4) / (np.sqrt(2.0) * j0(np.pi / 2)))

_N_SGRID = 20001


class SpeedLimitExceededError(RuntimeError):
    """Requested lab duration is below the minimum the rescaling admits."""

    def __init__(self, tau_r, minimum, fallback_trace):
        self.tau_r = tau_r
        self.minimum = minimum
        self.fallback_trace = fallback_trace
        super().__init__(
            f"lab ramp time {tau_r:.6g} below the engineered minimum "
            f"{minimum:.6g}; resonant-oscillation fallback trace attached"
        )


@dataclass(frozen=True)
class FERampTrace:
    """Engineered detuning trace on a lab-time grid resolving the drive."""

    omega: float
    tau_r: float
    tau_s: float
    delta_typ: float
    rescaled_ramp: RampSpec
    t: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    Lambda: np.ndarray = field(repr=False)
    speed_limited: bool = False
    # cumulative t(s) over a dense rescaled grid, also int ds'/G for
    # renormalized-disorder references evolved in rescaled time
    s_grid: np.ndarray | None = field(default=None, repr=False)
    t_of_s: np.ndarray | None = field(default=None, repr=False)

    def alpha1(self, lam):
        return -1.0 / (np.asarray(lam, dtype=float) ** 2 + self.delta_typ**2)

    def s_of_t(self, t):
        return np.interp(t, self.t, self.s)

    def _x_of_s(self, s):
        ramp = self.rescaled_ramp
        s = np.clip(s, 0.0, ramp.tau_r)
        return -ramp.velocity(s) * self.alpha1(ramp.value(s))

    def beta_of_t(self, t):
        if self.speed_limited:
            return np.full(np.shape(t), np.pi / 2)
        return np.arctan(self._x_of_s(self.s_of_t(t)))

    def _dbeta_ds(self, s):
        ramp = self.rescaled_ramp
        s = np.clip(s, 0.0, ramp.tau_r)
        lam = ramp.value(s)
        lamp = ramp.velocity(s)
        u = s / ramp.tau_r
        lampp = ramp.direction * ramp.lambda0 * 120.0 * u * (1 - u) * (1 - 2 * u) / ramp.tau_r**2
        a1 = self.alpha1(lam)
        # x = -lam' a1;  d(alpha1)/dlam = 2 lam a1^2
        dxds = -lampp * a1 - 2.0 * lam * lamp**2 * a1**2
        x = -lamp * a1
        return dxds / (1.0 + x**2)

    def lambda_of_t(self, t):
        """Instantaneous engineered detuning (exact formula, not interpolation)."""
        t = np.asarray(t, dtype=float)
        if self.speed_limited:
            return (np.pi / 2) * self.omega * np.sin(self.omega * t)
        s = self.s_of_t(t)
        beta = np.arctan(self._x_of_s(s))
        G = j0(beta) * np.cos(beta)
        betadot = self._dbeta_ds(s) * G
        lam_s = self.rescaled_ramp.value(np.clip(s, 0.0, self.tau_s))
        wt = self.omega * t
        return G * lam_s + beta * self.omega * np.sin(wt) + betadot * (1.0 - np.cos(wt))

    def phase_integral(self, a, b):
        """Exact integral of Lambda(t) over [a, b].

        The oscillating terms integrate to beta (1 - cos(w t)) in closed
        form, and the base profile obeys G lam(s) dt = lam(s) ds.
        """
        if self.speed_limited:
            return (np.pi / 2) * (np.cos(self.omega * a) - np.cos(self.omega * b))
        sa, sb = self.s_of_t(a), self.s_of_t(b)
        base = self.rescaled_ramp.integral(np.clip(sa, 0, self.tau_s), np.clip(sb, 0, self.tau_s))
        osc_b = self.beta_of_t(b) * (1.0 - np.cos(self.omega * b))
        osc_a = self.beta_of_t(a) * (1.0 - np.cos(self.omega * a))
        return base + osc_b - osc_a

    def inverse_g_integral(self, sa, sb):
        """int ds / G(s) between rescaled times, for renormalized z-fields."""
        if self.s_grid is None:
            raise ValueError("trace carries no rescaled grid")
        return np.interp(sb, self.s_grid, self.t_of_s) - np.interp(sa, self.s_grid, self.t_of_s)

    def g_of_s(self, s):
        beta = np.arctan(self._x_of_s(s))
        return j0(beta) * np.cos(beta)


def _lab_time_of_s(real: ModelRealization, lambda0: float, tau_s: float, direction: int = +1):
    """Cumulative lab time t(s) on a dense rescaled grid, by quadrature."""
    ramp = RampSpec(lambda0, tau_s, direction)
    s = np.linspace(0.0, tau_s, _N_SGRID)
    x = ramp.velocity(s) / (ramp.value(s) ** 2 + real.delta_typ**2)
    beta = np.arctan(np.abs(x))
    if np.any(beta >= _BETA_EDGE):
        return None, None
    G = j0(beta) * np.cos(beta)
    dt_ds = 1.0 / G
    t = np.concatenate(([0.0], np.cumsum((dt_ds[1:] + dt_ds[:-1]) / 2.0 * np.diff(s))))
    return s, t


def fe_min_lab_duration(real: ModelRealization, lambda0: float) -> float:
    """Infimum of achievable lab ramp durations (tau_S -> 0 limit).

    Shape-independent: 1/G -> tan(beta)/J0(pi/2) pointwise in that limit,
    and int tan(beta) ds = int (-alpha_1) dlam over the swept range.
    """
    dt = real.delta_typ
    return 2.0 * np.arctan(lambda0 / dt) / (_J0_HALF_PI * dt)


def speed_limit(real: ModelRealization, lambda0: float) -> float:
    """Closed-form speed-limit timescale C * arctan(2 lam0 / Delta_typ) / Delta_typ."""
    if lambda0 <= 0:
        raise ValueError("lambda0 must be positive")
    dt = real.delta_typ
    return SPEED_LIMIT_C * np.arctan(2.0 * lambda0 / dt) / dt


def speed_limit_quadrature(real: ModelRealization, lambda0: float) -> float:
    """Speed limit by adaptive quadrature of the edge-expansion integral.

    Evaluates C * int (-alpha_1(lam)) dlam over the resonance-to-endpoint
    range [0, 2 lam0] that the closed form corresponds to.
    """
    dt2 = real.delta_typ**2
    val, _ = quad(lambda lam: 1.0 / (lam**2 + dt2), 0.0, 2.0 * lambda0,
                  epsabs=1e-12, epsrel=1e-12)
    return SPEED_LIMIT_C * val


def _fallback_trace(real, lambda0, tau_r, omega, substeps, direction):
    n = max(int(np.ceil(tau_r * omega * substeps / (2 * np.pi))), substeps) + 1
    t = np.linspace(0.0, tau_r, n)
    return FERampTrace(
        omega=omega, tau_r=tau_r, tau_s=0.0, delta_typ=real.delta_typ,
        rescaled_ramp=RampSpec(lambda0, max(tau_r, 1e-12), direction),
        t=t, s=np.zeros_like(t), beta=np.full_like(t, np.pi / 2),
        G=np.zeros_like(t), Lambda=(np.pi / 2) * omega * np.sin(omega * t),
        speed_limited=True,
    )


def fe_ramp(real: ModelRealization, lambda0: float, tau_r: float, omega: float,
            substeps_per_period: int = 48, direction: int = +1) -> FERampTrace:
    """Construct the engineered detuning achieving lab duration tau_r.

    Solves t(tau_S) = tau_r for the rescaled duration by bracketing the
    monotone quadrature map, then evaluates the trace on a grid with
    substeps_per_period points per drive period.  Raises
    SpeedLimitExceededError (with the resonant fallback trace attached)
    when tau_r is at or below the engineered minimum.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if substeps_per_period < 40:
        raise ValueError("substeps_per_period must be >= 40")
    minimum = fe_min_lab_duration(real, lambda0)
    fallback = None
    if tau_r <= minimum * (1 + 1e-9):
        fallback = _fallback_trace(real, lambda0, tau_r, omega, substeps_per_period, direction)
        raise SpeedLimitExceededError(tau_r, minimum, fallback)

    def lab_duration(tau_s):
        _, t = _lab_time_of_s(real, lambda0, tau_s, direction)
        return np.nan if t is None else t[-1]

    # below tau_floor the arctan branch gets numerically pinned at its edge;
    # lab durations in that sliver above the strict minimum are unreachable
    tau_floor = 3.75 * lambda0 / (np.tan(_BETA_EDGE) * 0.5 * real.delta_typ**2)
    if lab_duration(tau_floor) >= tau_r:
        fallback = _fallback_trace(real, lambda0, tau_r, omega, substeps_per_period, direction)
        raise SpeedLimitExceededError(tau_r, minimum, fallback)
    tau_s = brentq(lambda x: lab_duration(x) - tau_r, tau_floor, tau_r,
                   xtol=1e-12 * tau_r, rtol=8.9e-16)
    s_grid, t_of_s = _lab_time_of_s(real, lambda0, tau_s, direction)
    # pin the produced lab duration to tau_r exactly
    t_of_s = t_of_s * (tau_r / t_of_s[-1])

    n = max(int(np.ceil(tau_r * omega * substeps_per_period / (2 * np.pi))), 2) + 1
    t = np.linspace(0.0, tau_r, n)
    s = np.interp(t, t_of_s, s_grid)

    trace = FERampTrace(
        omega=omega, tau_r=tau_r, tau_s=tau_s, delta_typ=real.delta_typ,
        rescaled_ramp=RampSpec(lambda0, tau_s, direction),
        t=t, s=s, beta=np.empty(0), G=np.empty(0), Lambda=np.empty(0),
        speed_limited=False, s_grid=s_grid, t_of_s=t_of_s,
    )
    beta = trace.beta_of_t(t)
    object.__setattr__(trace, "beta", beta)
    object.__setattr__(trace, "G", j0(beta) * np.cos(beta))
    object.__setattr__(trace, "Lambda", trace.lambda_of_t(t))
    return trace


def fe_ramp_or_fallback(real, lambda0, tau_r, omega, substeps_per_period=48,
                        direction=+1) -> tuple[FERampTrace, bool]:
    """fe_ramp, degrading to the resonant-oscillation fallback past the limit."""
    try:
        return fe_ramp(real, lambda0, tau_r, omega, substeps_per_period, direction), False
    except SpeedLimitExceededError as err:
        return err.fallback_trace, True
