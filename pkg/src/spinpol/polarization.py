"""Transfer/kick efficiency measurement, analytic predictions, and
transfer-reset hyperpolarization cycles.

A sweep starts from the qubit-down infinite-temperature ensemble of one
magnetization sector.  Efficiencies compare band populations before and
after the ramp:

    eta_T = P_bright-up(tau_r) / P_bright-down(0)
    eta_K = 1 - P_dark-down(tau_r) / P_dark-down(0)

Cycles run in the full Hilbert space as a weighted ensemble per sector;
the qubit reset replaces the qubit marginal exactly,
rho -> |down><down| x Tr_qubit rho, implemented through the
eigendecomposition of the bath marginal in each bath sector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh

from spinpol.floquet import fe_ramp_or_fallback, speed_limit  # noqa: F401  (re-export)
from spinpol.model import (
    ModelRealization,
    SectorBasis,
    bath_z_diagonal,
    build_sector_basis,
    qubit_z_diagonal,
)
from spinpol.propagate import QuantumState, evolve_columns, propagate
from spinpol.protocols import ProtocolSpec
from spinpol.spectral import BandLabels, classify_states

__all__ = [
    "SweepResult",
    "CycleTrace",
    "initial_sector_state",
    "measure_sweep",
    "lz_transition_probability",
    "analytic_ua_transfer",
    "analytic_lcd_transfer",
    "kick_from_transfer",
    "run_cycles",
    "transfer_power",
    "dark_floor_margin",
    "speed_limit",
]

BANDS = ("bright-down", "bright-up", "dark-down", "dark-up")


@dataclass(frozen=True)
class SweepResult:
    """Efficiencies and band populations of a single sweep.

    Efficiencies are None when their reference population vanishes (the
    measure is undefined, not zero).
    """

    eta_T: float | None
    eta_K: float | None
    populations_initial: dict
    populations_final: dict
    final_state: QuantumState = field(repr=False)


def initial_sector_state(basis: SectorBasis, qubit: str = "down") -> QuantumState:
    """Uniform ensemble over the qubit-down computational states of a sector.

    Equivalent to |down><down| x (infinite-temperature bath) restricted to
    the sector.
    """
    if qubit != "down":
        raise ValueError("initial states are prepared with the qubit down")
    rows = np.nonzero((basis.states & 1) == 0)[0]
    if len(rows) == 0:
        raise ValueError(f"sector N={basis.n_flips} has no qubit-down configuration")
    cols = np.zeros((basis.dim, len(rows)), dtype=complex)
    cols[rows, np.arange(len(rows))] = 1.0
    weights = np.full(len(rows), 1.0 / len(rows))
    return QuantumState(basis_tag=basis.tag, columns=cols, weights=weights)


def band_populations(state: QuantumState, labels: BandLabels, end: str) -> dict:
    """Populations of the four (bright/dark x up/down) bands at one ramp end."""
    V = labels.vectors_i if end == "i" else labels.vectors_f
    amps = V.T @ state.columns
    per_state = (np.abs(amps) ** 2 * state.weights).sum(axis=1)
    pops = {}
    for which in BANDS:
        idx = labels.band_indices(which, end)
        pops[which] = float(per_state[idx].sum())
    total = sum(pops.values())
    if abs(total - 1.0) > 1e-8:
        raise RuntimeError(f"band populations sum to {total}, not 1")
    return pops


def measure_sweep(spec: ProtocolSpec, real: ModelRealization, basis: SectorBasis,
                  labels: BandLabels | None = None, n_steps=None) -> SweepResult:
    """Propagate the sector's qubit-down ensemble and measure both efficiencies."""
    ramp = spec.ramp
    if labels is None:
        labels = classify_states(real, basis, ramp.lambda0)
    start, stop = ("i", "f") if ramp.direction == +1 else ("f", "i")
    state0 = initial_sector_state(basis)
    pops0 = band_populations(state0, labels, start)
    state1 = propagate(state0, spec, real, basis, n_steps=n_steps)
    pops1 = band_populations(state1, labels, stop)
    eta_T = pops1["bright-up"] / pops0["bright-down"] if pops0["bright-down"] > 0 else None
    eta_K = 1.0 - pops1["dark-down"] / pops0["dark-down"] if pops0["dark-down"] > 0 else None
    return SweepResult(eta_T=eta_T, eta_K=eta_K, populations_initial=pops0,
                       populations_final=pops1, final_state=state1)


def lz_transition_probability(delta: float, lambda_dot: float) -> float:
    """Diabatic transition probability exp(-pi delta^2 / (2 lam_dot))."""
    if lambda_dot <= 0:
        raise ValueError("lambda_dot must be positive")
    if delta < 0:
        raise ValueError("gap must be nonnegative")
    return float(np.exp(-np.pi * delta**2 / (2.0 * lambda_dot)))


def analytic_ua_transfer(m: float, g_bar: float, L: int, lambda_dot: float) -> float:
    """Gap-distribution-averaged unassisted transfer efficiency.

    eta = 1 - (v tau_m / (1 + v tau_m)) exp(-m pi g^2 L / v) with
    tau_m = ln((1+2m)/(1-2m)) / (m pi g^2 L) and v the sweep rate at
    resonance.
    """
    if not 0 < m < 0.5:
        raise ValueError(f"magnetization density m must be in (0, 1/2), got {m}")
    tau_m = np.log((1 + 2 * m) / (1 - 2 * m)) / (m * np.pi * g_bar**2 * L)
    v = lambda_dot
    return float(1.0 - (v * tau_m / (1.0 + v * tau_m)) * np.exp(-m * np.pi * g_bar**2 * L / v))


def analytic_lcd_transfer(m: float) -> float:
    """Fast-ramp transfer efficiency of order-1 local counterdiabatic driving.

    Ratio of int_1^inf t sin^2(pi/2 sqrt(2m) t) q^{t^2} dt to
    int_1^inf t q^{t^2} dt with q = (1-2m)/(1+2m); rate-independent.
    """
    if not 0 < m < 0.5:
        raise ValueError(f"magnetization density m must be in (0, 1/2), got {m}")
    a = np.log((1 + 2 * m) / (1 - 2 * m))
    num, err_n = quad(lambda t: t * np.sin(np.pi / 2 * np.sqrt(2 * m) * t) ** 2
                      * np.exp(-a * t**2), 1.0, np.inf, epsabs=1e-12, epsrel=1e-10)
    den = np.exp(-a) / (2.0 * a)
    if err_n > 1e-8 * max(num, den):
        raise RuntimeError("quadrature for the fast-ramp transfer formula did not converge")
    return float(num / den)


def kick_from_transfer(eta_T: float, L: int, N: int) -> float:
    """Well-mixed kick efficiency N/(L-N) * eta_T."""
    if not 1 <= N < L:
        raise ValueError(f"need 1 <= N < L, got N={N}, L={L}")
    return N / (L - N) * eta_T


@dataclass(frozen=True)
class CycleTrace:
    """Per-cycle bath polarization and sector occupancy (row 0 = initial)."""

    bath_polarization: np.ndarray
    sector_probabilities: np.ndarray
    n_cycles: int


class _FullSpaceEnsemble:
    """Weighted pure-state ensemble resolved by magnetization sector."""

    def __init__(self, L: int):
        self.L = L
        self.bases = [build_sector_basis(L, N) for N in range(L + 1)]
        self.bath_bases = [build_sector_basis(L - 1, N) for N in range(L)]
        self.down_rows = []
        self.up_rows = []
        for N in range(L + 1):
            basis = self.bases[N]
            down = (basis.indices_of((self.bath_bases[N].states << 1))
                    if N <= L - 1 else np.empty(0, dtype=int))
            up = (basis.indices_of((self.bath_bases[N - 1].states << 1) | 1)
                  if N >= 1 else np.empty(0, dtype=int))
            self.down_rows.append(down)
            self.up_rows.append(up)
        self.bath_z = [bath_z_diagonal(b) for b in self.bases]
        # (weights, columns) per sector; empty sectors hold None
        self.parts: list = [None] * (L + 1)

    @classmethod
    def infinite_temperature(cls, L: int) -> "_FullSpaceEnsemble":
        ens = cls(L)
        scale = 1.0 / 2 ** (L - 1)
        for N in range(L):
            basis = ens.bases[N]
            rows = ens.down_rows[N]
            cols = np.zeros((basis.dim, len(rows)), dtype=complex)
            cols[rows, np.arange(len(rows))] = 1.0
            ens.parts[N] = (np.full(len(rows), scale), cols)
        return ens

    @classmethod
    def polarized(cls, L: int) -> "_FullSpaceEnsemble":
        ens = cls(L)
        cols = np.zeros((1, 1), dtype=complex)
        cols[0, 0] = 1.0
        ens.parts[0] = (np.array([1.0]), cols)
        return ens

    def bath_polarization(self) -> float:
        acc = 0.0
        for N, part in enumerate(self.parts):
            if part is None:
                continue
            w, cols = part
            per_col = (self.bath_z[N][:, None] * np.abs(cols) ** 2).sum(axis=0)
            acc += float(np.dot(w, per_col))
        return acc / (self.L - 1)

    def sector_probabilities(self) -> np.ndarray:
        return np.array([0.0 if p is None else float(p[0].sum()) for p in self.parts])

    def evolve(self, spec: ProtocolSpec, real: ModelRealization, fe_traces=None):
        for N, part in enumerate(self.parts):
            if part is None:
                continue
            w, cols = part
            trace = fe_traces.get(spec.ramp.direction) if fe_traces else None
            cols = evolve_columns(cols, spec, real, self.bases[N], fe_trace=trace)
            self.parts[N] = (w, cols)

    def reset_qubit(self):
        """rho -> |down><down| x Tr_qubit(rho), exactly, per bath sector."""
        L = self.L
        marginals = [None] * L  # bath sector Nb -> accumulated bath density
        for N, part in enumerate(self.parts):
            if part is None:
                continue
            w, cols = part
            for rows, Nb in ((self.down_rows[N], N), (self.up_rows[N], N - 1)):
                if 0 <= Nb <= L - 1 and len(rows):
                    block = cols[rows, :]
                    contrib = (block * w) @ block.conj().T
                    if marginals[Nb] is None:
                        marginals[Nb] = contrib
                    else:
                        marginals[Nb] += contrib
        new_parts: list = [None] * (L + 1)
        for Nb, rho_b in enumerate(marginals):
            if rho_b is None:
                continue
            evals, evecs = eigh(rho_b, check_finite=False)
            keep = evals > 1e-14
            if not np.any(keep):
                continue
            w = evals[keep]
            basis = self.bases[Nb]
            cols = np.zeros((basis.dim, int(keep.sum())), dtype=complex)
            cols[self.down_rows[Nb], :] = evecs[:, keep]
            new_parts[Nb] = (w, cols)
        self.parts = new_parts


def run_cycles(spec: ProtocolSpec, real: ModelRealization, n_cycles: int,
               record_sectors: bool = True, initial: str = "infinite-temperature") -> CycleTrace:
    """Alternating transfer-reset cycles over the full Hilbert space.

    Each cycle sweeps the detuning (direction flipping cycle to cycle) and
    then resets the qubit to down; the bath polarization per spin is
    recorded after every cycle.  The default initial state is the qubit-down
    infinite-temperature bath; "polarized" starts from all spins down.
    """
    L = real.size
    if initial == "infinite-temperature":
        ens = _FullSpaceEnsemble.infinite_temperature(L)
    elif initial == "polarized":
        ens = _FullSpaceEnsemble.polarized(L)
    else:
        raise ValueError(f"unknown initial state {initial!r}")
    fe_traces = None
    if spec.kind == "fe":
        fe_traces = {}
        for direction in (+1, -1):
            trace, _ = fe_ramp_or_fallback(
                real, spec.ramp.lambda0, spec.ramp.tau_r, spec.omega,
                spec.substeps_per_period, direction)
            fe_traces[direction] = trace
    pol = [ens.bath_polarization()]
    sectors = [ens.sector_probabilities()]
    current = spec.with_ramp(spec.ramp)
    for _ in range(n_cycles):
        ens.evolve(current, real, fe_traces)
        ens.reset_qubit()
        pol.append(ens.bath_polarization())
        if record_sectors:
            sectors.append(ens.sector_probabilities())
        current = current.reversed()
    return CycleTrace(
        bath_polarization=np.array(pol),
        sector_probabilities=np.array(sectors) if record_sectors else np.empty(0),
        n_cycles=n_cycles,
    )


def dark_floor_margin(L: int) -> float:
    """Lower bound on the saturation offset above full polarization when dark
    states cannot be depopulated: the initial dark weight in each sector
    keeps its N spin flips forever."""
    margin = 0.0
    for N in range(1, (L + 1) // 2 + (1 if L % 2 else 0)):
        lower = comb(L - 1, N - 1)
        n_d = comb(L - 1, N) - lower
        if n_d > 0:
            margin += n_d / 2 ** (L - 1) * N / (L - 1)
    return margin


def transfer_power(spec: ProtocolSpec, real: ModelRealization, basis: SectorBasis,
                   n_steps=None) -> float:
    """Qubit polarization extracted per unit ramp time over one sweep."""
    z = qubit_z_diagonal(basis)
    state0 = initial_sector_state(basis)
    s0 = state0.expectation_diagonal(z)
    state1 = propagate(state0, spec, real, basis, n_steps=n_steps)
    s1 = state1.expectation_diagonal(z)
    return (s1 - s0) / spec.ramp.tau_r
