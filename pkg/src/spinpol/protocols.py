"""Protocol definitions and their instantaneous Hamiltonians.

Four sweep protocols share one ramp:

    UA   -- bare Hamiltonian H(lam(t)), no assistance
    CD   -- H + lam_dot * A_exact (spectral gauge potential)
    LCD  -- H + lam_dot * sum_j alpha_j * i C_{2j-1}; order 1 uses the
            closed-form alpha_1, higher orders the variational solve
    FE   -- H(Lambda(t)) with the Floquet-engineered detuning

``protocol_hamiltonian`` is the single-time-point contract all propagators
are tested against; the fast steppers in ``propagate`` never build it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from spinpol.floquet import FERampTrace, fe_ramp_or_fallback
from spinpol.gauge import (
    commutator_basis,
    exact_gauge_potential,
    lcd_alpha1,
    variational_coefficients,
)
from spinpol.model import (
    ModelRealization,
    SectorBasis,
    build_hamiltonian,
    qubit_z_diagonal,
)
from spinpol.ramps import RampSpec

__all__ = ["ProtocolSpec", "protocol_hamiltonian", "PROTOCOL_KINDS"]

PROTOCOL_KINDS = ("ua", "cd", "lcd", "fe")


@dataclass(frozen=True)
class ProtocolSpec:
    """Protocol kind plus ramp; order applies to LCD, omega/substeps to FE."""

    kind: str
    ramp: RampSpec
    order: int = 1
    omega: float = 100.0
    substeps_per_period: int = 48

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.order < 1:
            raise ValueError(f"LCD order must be >= 1, got {self.order}")
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.substeps_per_period < 40:
            raise ValueError(
                f"substeps_per_period must be >= 40, got {self.substeps_per_period}")

    @property
    def label(self) -> str:
        if self.kind == "lcd" and self.order > 1:
            return f"LCD{self.order}"
        return self.kind.upper()

    def with_ramp(self, ramp: RampSpec) -> "ProtocolSpec":
        return replace(self, ramp=ramp)

    def reversed(self) -> "ProtocolSpec":
        return self.with_ramp(self.ramp.reversed())


def protocol_hamiltonian(spec: ProtocolSpec, real: ModelRealization,
                         basis: SectorBasis, t: float,
                         fe_trace: FERampTrace | None = None) -> np.ndarray:
    """Instantaneous Hamiltonian of the protocol at lab time t."""
    ramp = spec.ramp
    if not 0 <= t <= ramp.tau_r * (1 + 1e-12):
        raise ValueError(f"t={t} outside protocol duration [0, {ramp.tau_r}]")
    if spec.kind == "fe":
        if fe_trace is None:
            fe_trace, _ = fe_ramp_or_fallback(
                real, ramp.lambda0, ramp.tau_r, spec.omega,
                spec.substeps_per_period, ramp.direction)
        return build_hamiltonian(real, float(fe_trace.lambda_of_t(t)), basis)

    lam = float(ramp.value(t))
    H = build_hamiltonian(real, lam, basis)
    if spec.kind == "ua":
        return H
    lamdot = float(ramp.velocity(t))
    if spec.kind == "cd":
        return H + lamdot * exact_gauge_potential(real, basis, lam)
    # lcd
    ops = commutator_basis(H, qubit_z_diagonal(basis), spec.order)
    if spec.order == 1:
        alpha = np.array([lcd_alpha1(real, lam)])
    else:
        alpha = variational_coefficients(real, spec.order, lam)
    counter = sum(a * C for a, C in zip(alpha, ops))
    return H + lamdot * 1j * counter
