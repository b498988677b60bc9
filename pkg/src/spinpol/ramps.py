"""Detuning ramps.

The sweep shape is the minimal smooth polynomial with vanishing first and
second derivatives at both ends,

    lam(t) = lam0 * dir * (12 u^5 - 30 u^4 + 20 u^3 - 1),   u = t / tau_r,

running from -lam0*dir at t=0 to +lam0*dir at t=tau_r.  The antiderivative
is kept analytic so propagators can accumulate exact diagonal phases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RampSpec", "quintic_shape", "quintic_slope"]


def quintic_shape(u):
    """Dimensionless ramp profile on u in [0, 1], from -1 to +1."""
    return 12.0 * u**5 - 30.0 * u**4 + 20.0 * u**3 - 1.0


def quintic_slope(u):
    """d(shape)/du = 60 u^2 (1-u)^2."""
    return 60.0 * u**2 * (1.0 - u) ** 2


def _quintic_antiderivative(u):
    # d/du (2u^6 - 6u^5 + 5u^4 - u) = shape(u)
    return 2.0 * u**6 - 6.0 * u**5 + 5.0 * u**4 - u


@dataclass(frozen=True)
class RampSpec:
    """Quintic detuning sweep over [0, tau_r].

    direction=+1 ramps lam from -lambda0 to +lambda0, direction=-1 the
    reverse.  Peak slew rate is 3.75 * lambda0 / tau_r at mid-ramp.
    """

    lambda0: float
    tau_r: float
    direction: int = +1

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ValueError(f"lambda0 must be > 0, got {self.lambda0}")
        if self.tau_r <= 0:
            raise ValueError(f"tau_r must be > 0, got {self.tau_r}")
        if self.direction not in (+1, -1):
            raise ValueError(f"direction must be +-1, got {self.direction}")

    def _check(self, t):
        tol = 1e-9 * self.tau_r
        if np.any(np.asarray(t) < -tol) or np.any(np.asarray(t) > self.tau_r + tol):
            raise ValueError(f"time {t} outside ramp interval [0, {self.tau_r}]")

    def value(self, t):
        """Detuning lam(t)."""
        self._check(t)
        return self.value_ext(t)

    def velocity(self, t):
        """Analytic d(lam)/dt."""
        self._check(t)
        return self.velocity_ext(t)

    def integral(self, a, b):
        """Exact integral of lam(t) over [a, b]."""
        self._check(a)
        self._check(b)
        return self.integral_ext(a, b)

    # _ext variants hold lam constant outside [0, tau_r]; composition
    # schemes evaluate phase integrals on sub-intervals that overshoot
    # the ramp ends.
    def value_ext(self, t):
        u = np.clip(np.asarray(t, dtype=float) / self.tau_r, 0.0, 1.0)
        return self.direction * self.lambda0 * quintic_shape(u)

    def velocity_ext(self, t):
        u = np.clip(np.asarray(t, dtype=float) / self.tau_r, 0.0, 1.0)
        return self.direction * self.lambda0 * quintic_slope(u) / self.tau_r

    def integral_ext(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ua = np.clip(a / self.tau_r, 0.0, 1.0)
        ub = np.clip(b / self.tau_r, 0.0, 1.0)
        scale = self.direction * self.lambda0 * self.tau_r
        inside = scale * (_quintic_antiderivative(ub) - _quintic_antiderivative(ua))
        # constant tails beyond the ramp ends
        lo = -self.direction * self.lambda0 * (np.minimum(b, 0.0) - np.minimum(a, 0.0))
        hi = self.direction * self.lambda0 * (np.maximum(b, self.tau_r)
                                              - np.maximum(a, self.tau_r))
        return inside + lo + hi

    @property
    def peak_velocity(self) -> float:
        return 3.75 * self.lambda0 / self.tau_r

    @property
    def lambda_initial(self) -> float:
        return -self.direction * self.lambda0

    @property
    def lambda_final(self) -> float:
        return self.direction * self.lambda0

    def reversed(self) -> "RampSpec":
        return RampSpec(self.lambda0, self.tau_r, -self.direction)


def ramp_value(ramp: RampSpec, t):
    """(lam, lam_dot) at time t; domain error outside [0, tau_r]."""
    return ramp.value(t), ramp.velocity(t)
