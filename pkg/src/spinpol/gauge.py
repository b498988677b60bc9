"""Adiabatic gauge potentials: exact spectral construction and local
variational approximations.

The exact potential has eigenbasis matrix elements i <m|S_0^z|n> / (E_n - E_m)
and zero diagonal.  The local approximations expand it in odd nested
commutators of H with S_0^z; the order-1 coefficient has the closed form
alpha_1(lam) = -1 / (lam^2 + sum_j g_j^2) when the bath field is homogeneous.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh

from spinpol.model import (
    ModelRealization,
    SectorBasis,
    build_cd_commutator,
    build_hamiltonian,
    build_sector_basis,
    qubit_z_diagonal,
)

__all__ = [
    "DegenerateCouplingError",
    "GaugePotential",
    "exact_gauge_potential",
    "lcd_alpha1",
    "variational_coefficients",
    "commutator_basis",
]

# Couplings across exact degeneracies vanish identically in this model
# (dark-dark and dark-bright blocks); anything above tolerance is a real
# failure of the spectral construction, not noise.
DEGENERACY_COUPLING_TOL = 1e-8


class DegenerateCouplingError(RuntimeError):
    """A degenerate eigenvalue pair carries a nonzero drive matrix element."""

    def __init__(self, pair, coupling):
        self.pair = pair
        self.coupling = coupling
        super().__init__(
            f"degenerate eigenstates {pair} coupled by S_0^z "
            f"(|element| = {coupling:.3e}); gauge potential undefined"
        )


def gauge_in_eigenbasis(E: np.ndarray, Z_eig: np.ndarray, eps_deg: float) -> np.ndarray:
    """i Z_mn / (E_n - E_m) with zero diagonal; degeneracy-guarded."""
    dE = E[None, :] - E[:, None]
    degenerate = np.abs(dE) < eps_deg
    np.fill_diagonal(degenerate, True)
    bad = degenerate & (np.abs(Z_eig) > DEGENERACY_COUPLING_TOL)
    np.fill_diagonal(bad, False)
    if np.any(bad):
        m, n = np.argwhere(bad)[0]
        raise DegenerateCouplingError((int(m), int(n)), float(np.abs(Z_eig[m, n])))
    A = np.zeros(Z_eig.shape, dtype=complex)
    ok = ~degenerate
    A[ok] = 1j * Z_eig[ok] / dE[ok]
    return A


def exact_gauge_potential(real: ModelRealization, basis: SectorBasis, lam: float) -> np.ndarray:
    """Exact gauge potential of the sector Hamiltonian at detuning lam.

    Returned in the computational basis.  Matrix elements across exact
    degeneracies are set to zero when the corresponding S_0^z coupling
    vanishes; otherwise DegenerateCouplingError is raised.
    """
    H = build_hamiltonian(real, lam, basis)
    E, V = eigh(H, check_finite=False)
    z = qubit_z_diagonal(basis)
    Z_eig = V.T @ (z[:, None] * V)
    eps_deg = 1e-10 * max(E[-1] - E[0], 1.0)
    A_eig = gauge_in_eigenbasis(E, Z_eig, eps_deg)
    return V @ A_eig @ V.conj().T


def lcd_alpha1(real: ModelRealization, lam) -> float:
    """Closed-form leading-order coefficient -1 / (lam^2 + Delta_typ^2)."""
    return -1.0 / (np.asarray(lam, dtype=float) ** 2 + real.delta_typ**2)


def commutator_basis(H: np.ndarray, z: np.ndarray, q: int) -> list[np.ndarray]:
    """Odd nested commutators C_1 = [H, S0z], C_3 = [H,[H,C_1]], ... up to depth 2q-1.

    Returned without the factor i, so each entry is anti-Hermitian.
    """
    Zm = np.diag(z) if z.ndim == 1 else z
    ops = []
    C = H @ Zm - Zm @ H
    ops.append(C)
    for _ in range(q - 1):
        C2 = H @ C - C @ H
        C = H @ C2 - C2 @ H
        ops.append(C)
    return ops


def _variational_system(real: ModelRealization, q: int, lam: float,
                        bases: Sequence[SectorBasis] | None = None):
    """Accumulate the q x q normal equations over all magnetization sectors."""
    L = real.size
    if bases is None:
        bases = [build_sector_basis(L, N) for N in range(L + 1)]
    M = np.zeros((q, q))
    b = np.zeros(q)
    for basis in bases:
        if basis.dim == 1:
            continue
        H = build_hamiltonian(real, lam, basis)
        z = qubit_z_diagonal(basis)
        odd = commutator_basis(H, z, q)
        even = [H @ C - C @ H for C in odd]  # C_2, C_4, ...
        for k in range(q):
            b[k] -= np.sum(z * np.diagonal(even[k]).real)
            for j in range(k, q):
                M[k, j] += np.tensordot(even[j], even[k]).real
    M = M + np.triu(M, 1).T
    return M, b


def variational_coefficients(real: ModelRealization, q: int, lam: float,
                             bases: Sequence[SectorBasis] | None = None) -> np.ndarray:
    """Coefficients alpha_1..alpha_q minimizing Tr[(S_0^z + sum_j alpha_j C_2j)^2].

    The trace runs over the full Hilbert space, evaluated sector by sector.
    A singular system falls back to least squares with a warning.
    """
    if q < 1:
        raise ValueError(f"expansion order must be >= 1, got {q}")
    M, b = _variational_system(real, q, lam, bases)
    try:
        alpha = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        warnings.warn("singular variational system; using least-squares solution")
        alpha = np.linalg.lstsq(M, b, rcond=None)[0]
    return alpha


@dataclass(frozen=True)
class GaugePotential:
    """Evaluatable gauge potential, exact or variational(q)."""

    kind: str  # "exact" | "variational"
    evaluate: Callable[[float], np.ndarray]
    coefficients: Callable[[float], np.ndarray] | None = None


def make_gauge_potential(real: ModelRealization, basis: SectorBasis,
                         kind: str = "exact", q: int = 1) -> GaugePotential:
    if kind == "exact":
        return GaugePotential("exact", lambda lam: exact_gauge_potential(real, basis, lam))
    if kind != "variational":
        raise ValueError(f"unknown gauge potential kind {kind!r}")

    def coeffs(lam: float) -> np.ndarray:
        if q == 1:
            return np.array([lcd_alpha1(real, lam)])
        return variational_coefficients(real, q, lam)

    def evaluate(lam: float) -> np.ndarray:
        H = build_hamiltonian(real, lam, basis)
        ops = commutator_basis(H, qubit_z_diagonal(basis), q)
        return 1j * sum(a * C for a, C in zip(coeffs(lam), ops))

    return GaugePotential("variational", evaluate, coeffs)
