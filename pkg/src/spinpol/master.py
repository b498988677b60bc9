"""Probability-flow master equation for the transfer-reset cycle.

Tracks only qubit-down occupancies P_B[N], P_D[N] per spin-flip sector.
One cycle applies a column-stochastic transfer matrix built from
linearized per-sector efficiencies

    eta_K[i] = eta0 * i / L   (i <= L/2, zero above)
    eta_T[i] = eta0 * (L - i) / L   (the well-mixed kick relation inverted,
                                     capped at 1)

and well-mixed reset branching: weight leaving sector i lands in sector
i-1 bright states with probability r_B (all of it when sector i-1 has no
qubit-down dark states, i.e. M >= 0) and dark states otherwise in
proportion to state counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MasterState",
    "TransferMatrixModel",
    "build_transfer_matrix",
    "infinite_temperature_master_state",
    "step_master",
    "master_bath_polarization",
    "cycles_to_threshold",
    "run_master_cycles",
    "validate_against_exact",
]


@dataclass
class MasterState:
    """Bright/dark qubit-down probabilities per sector, N = 0..L."""

    p_bright: np.ndarray
    p_dark: np.ndarray

    def __post_init__(self):
        self.p_bright = np.asarray(self.p_bright, dtype=float)
        self.p_dark = np.asarray(self.p_dark, dtype=float)
        if self.p_bright.shape != self.p_dark.shape:
            raise ValueError("bright/dark arrays must have equal length")
        total = self.p_bright.sum() + self.p_dark.sum()
        if np.any(self.p_bright < -1e-12) or np.any(self.p_dark < -1e-12):
            raise ValueError("negative probabilities")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @property
    def L(self) -> int:
        return len(self.p_bright) - 1

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p_bright, self.p_dark])


@dataclass(frozen=True)
class TransferMatrixModel:
    """Column-stochastic cycle map over (band, sector) occupancies."""

    L: int
    eta0: float
    eta_T: np.ndarray
    eta_K: np.ndarray
    r_bright: np.ndarray
    r_dark: np.ndarray
    T: sp.csc_matrix = field(repr=False)


def _down_state_counts(L: int, N: int) -> tuple[int, int]:
    """(bright-down, dark-down) state counts of sector N."""
    if N > L - 1:
        return 0, 0
    bright_down = comb(L - 1, N - 1) if N >= 1 else 0
    dark_down = comb(L - 1, N) - bright_down
    if dark_down < 0:  # M > 0: the surplus dark states carry the qubit up
        return comb(L - 1, N), 0
    return bright_down, dark_down


def build_transfer_matrix(L: int, eta0: float,
                          eta_T: np.ndarray | None = None,
                          eta_K: np.ndarray | None = None) -> TransferMatrixModel:
    """Assemble the 2(L+1) transfer matrix for kick amplitude eta0.

    Custom per-sector efficiency arrays override the linearized model
    (used e.g. for ideal counterdiabatic cycles with eta_T = 1, eta_K = 0).
    """
    if L < 2:
        raise ValueError("need at least one bath spin")
    if not 0 <= eta0 <= 1:
        raise ValueError(f"eta0 must lie in [0, 1], got {eta0}")
    idx = np.arange(L + 1)
    if eta_K is None:
        eta_K = np.where(idx <= L / 2, eta0 * idx / L, 0.0)
    if eta_T is None:
        eta_T = np.minimum(eta0 * (L - idx) / L, 1.0)
        eta_T[0] = 0.0
    eta_T = np.asarray(eta_T, dtype=float).copy()
    eta_K = np.asarray(eta_K, dtype=float).copy()
    eta_T[0] = 0.0

    r_bright = np.ones(L + 1)
    r_dark = np.zeros(L + 1)
    for i in range(1, L + 1):
        target = i - 1
        if target - L / 2 < 0:
            nb, nd = _down_state_counts(L, target)
            r_bright[i] = nb / (nb + nd) if nb + nd else 1.0
            r_dark[i] = 1.0 - r_bright[i]

    n = L + 1
    T = sp.lil_matrix((2 * n, 2 * n))
    for i in range(n):
        T[i, i] += 1.0 - eta_T[i]
        if i >= 1:
            T[i - 1, i] += r_bright[i] * eta_T[i]
            T[n + i - 1, i] += r_dark[i] * eta_T[i]
        T[n + i, n + i] += 1.0 - eta_K[i]
        T[i, n + i] += eta_K[i]
    return TransferMatrixModel(L=L, eta0=eta0, eta_T=eta_T, eta_K=eta_K,
                               r_bright=r_bright, r_dark=r_dark, T=T.tocsc())


def infinite_temperature_master_state(L: int) -> MasterState:
    """Image of the infinite-temperature state after the first qubit reset.

    Sector N holds C(L-1, N)/2^(L-1) qubit-down weight, split between the
    bands by state counts, matching the exact initial band projections.
    """
    pb = np.zeros(L + 1)
    pd = np.zeros(L + 1)
    scale = 1.0 / 2 ** (L - 1)
    for N in range(L):
        nb, nd = _down_state_counts(L, N)
        pb[N] = nb * scale
        pd[N] = nd * scale
    return MasterState(p_bright=pb, p_dark=pd)


def step_master(model: TransferMatrixModel, state: MasterState) -> MasterState:
    vec = model.T @ state.as_vector()
    n = model.L + 1
    return MasterState(p_bright=vec[:n], p_dark=vec[n:])


def master_bath_polarization(state: MasterState) -> float:
    """Bath polarization per spin: the qubit is down, so the bath carries
    all N flips: <<S_B^z>> = sum_N P[N] (N - (L-1)/2) / (L-1)."""
    L = state.L
    N = np.arange(L + 1)
    occ = state.p_bright + state.p_dark
    return float(np.dot(occ, N - (L - 1) / 2.0) / (L - 1))


def run_master_cycles(model: TransferMatrixModel, n_cycles: int,
                      state: MasterState | None = None) -> np.ndarray:
    """Bath polarization per cycle (row 0 = initial state)."""
    state = state or infinite_temperature_master_state(model.L)
    out = [master_bath_polarization(state)]
    for _ in range(n_cycles):
        state = step_master(model, state)
        out.append(master_bath_polarization(state))
    return np.array(out)


def validate_against_exact(model: TransferMatrixModel, real, spec, n_cycles: int) -> float:
    """Max per-cycle |bath polarization| deviation between the master iteration
    and the exact full-space cycle dynamics for the same system size."""
    from spinpol.polarization import run_cycles  # deferred: avoids an import cycle

    if model.L != real.size:
        raise ValueError("master model and realization sizes differ")
    exact = run_cycles(spec, real, n_cycles, record_sectors=False).bath_polarization
    master = run_master_cycles(model, n_cycles)
    return float(np.abs(exact - master).max())


def cycles_to_threshold(model: TransferMatrixModel, threshold: float = 0.99,
                        max_cycles: int = 10**6) -> int:
    """Cycles until the polarization gap to the fully polarized state has
    closed by the given fraction: (P0 - P(c)) / (P0 + 1/2) >= threshold.

    Returns -1 when the dark floor saturates the dynamics first
    (no progress within max_cycles).
    """
    state = infinite_temperature_master_state(model.L)
    p0 = master_bath_polarization(state)
    gap = p0 - (-0.5)
    last = p0
    for c in range(1, max_cycles + 1):
        state = step_master(model, state)
        p = master_bath_polarization(state)
        if (p0 - p) / gap >= threshold:
            return c
        if abs(p - last) < 1e-15 * gap:
            return -1
        last = p
    return -1
