"""Central spin model: disorder sampling, sector bases, and dense operators.

One distinguished spin-1/2 (the qubit, bit 0) couples to L-1 bath spins via
flip-flop (XX) exchange, all in longitudinal fields:

    H = (omega_b + lam) S_0^z + sum_j omega_bath[j] S_j^z
        + (1/2) sum_j g[j] (S_0^+ S_j^- + S_0^- S_j^+)

Total magnetization is conserved, so everything is built per spin-flip
sector.  Basis configurations are bitstrings with the qubit as the least
significant bit, listed in ascending integer order; matrices are dense
(sector dimensions stay modest at the system sizes this package targets).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

__all__ = [
    "ModelParams",
    "ModelRealization",
    "SectorBasis",
    "sample_realization",
    "build_sector_basis",
    "build_hamiltonian",
    "build_qubit_z",
    "qubit_z_diagonal",
    "bath_z_diagonal",
    "field_diagonal",
    "build_interaction",
    "build_cd_commutator",
]

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Model definition before drawing disorder.

    size is the total spin count L (qubit + L-1 bath spins).  gamma_xx and
    gamma_z are half-widths of the uniform coupling/field distributions.
    """

    size: int
    omega_b: float = 10.0
    g_bar: float = 0.1
    gamma_xx: float = 0.05
    gamma_z: float = 0.0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.size < 2:
            problems.append(f"size must be >= 2, got {self.size}")
        if not self.g_bar > 0:
            problems.append(f"g_bar must be > 0, got {self.g_bar}")
        if self.gamma_xx < 0:
            problems.append(f"gamma_xx must be >= 0, got {self.gamma_xx}")
        if self.gamma_z < 0:
            problems.append(f"gamma_z must be >= 0, got {self.gamma_z}")
        if problems:
            raise ValueError("invalid model parameters: " + "; ".join(problems))

    @property
    def n_bath(self) -> int:
        return self.size - 1


@dataclass(frozen=True)
class ModelRealization:
    """One disorder draw: per-spin bath fields and couplings."""

    params: ModelParams
    omega_bath: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.omega_bath.flags.writeable = False
        self.g.flags.writeable = False

    @property
    def size(self) -> int:
        return self.params.size

    @property
    def delta_typ(self) -> float:
        """Typical resonant gap sqrt(sum_j g_j^2)."""
        return float(np.sqrt(np.sum(self.g**2)))


def sample_realization(params: ModelParams, realization: int = 0) -> ModelRealization:
    """Draw bath fields and couplings from their uniform distributions.

    Stream splitting: realization r uses the Philox stream keyed by
    SeedSequence(params.seed, spawn_key=(r,)), so sweeps over many
    realizations are reproducible independent of evaluation order.
    """
    if realization < 0:
        raise ValueError("realization index must be >= 0")
    seq = np.random.SeedSequence(params.seed, spawn_key=(realization,))
    rng = np.random.Generator(np.random.Philox(seq))
    n = params.n_bath
    omega = params.omega_b + params.gamma_z * rng.uniform(-1.0, 1.0, size=n)
    g = params.g_bar + params.gamma_xx * rng.uniform(-1.0, 1.0, size=n)
    return ModelRealization(params=params, omega_bath=omega, g=g)


@dataclass(frozen=True)
class SectorBasis:
    """Configurations with exactly n_flips up spins, ascending by integer value.

    Bit 0 is the qubit.  ``states`` maps row index -> configuration; row
    lookup goes through searchsorted since the list is sorted.
    """

    size: int
    n_flips: int
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.states.flags.writeable = False

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def magnetization(self) -> float:
        return self.n_flips - self.size / 2

    def index_of(self, config: int) -> int:
        i = int(np.searchsorted(self.states, config))
        if i >= self.dim or self.states[i] != config:
            raise KeyError(f"configuration {config:#x} not in sector")
        return i

    def indices_of(self, configs: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.states, configs)
        if np.any(self.states[idx] != configs):
            raise KeyError("configuration not in sector")
        return idx

    @property
    def tag(self) -> str:
        return f"L{self.size}N{self.n_flips}"


def build_sector_basis(L: int, N: int) -> SectorBasis:
    """Enumerate the C(L, N) configurations of the N-spin-flip sector."""
    if not 0 <= N <= L:
        raise ValueError(f"spin-flip number N={N} outside 0..{L}")
    states = np.fromiter(
        (sum(1 << p for p in pos) for pos in combinations(range(L), N)),
        dtype=np.int64,
        count=comb(L, N),
    )
    states.sort()
    return SectorBasis(size=L, n_flips=N, states=states)


def qubit_z_diagonal(basis: SectorBasis) -> np.ndarray:
    """Diagonal of S_0^z in the sector basis (+-1/2 per qubit bit)."""
    return np.where(basis.states & 1, 0.5, -0.5)


def bath_z_diagonal(basis: SectorBasis) -> np.ndarray:
    """Diagonal of sum_{j>=1} S_j^z: (bath popcount) - (L-1)/2."""
    bath = (basis.states.astype(np.uint64) >> np.uint64(1)).astype(np.int64)
    counts = np.array([int(b).bit_count() for b in bath], dtype=np.float64)
    return counts - (basis.size - 1) / 2.0


def build_qubit_z(basis: SectorBasis) -> np.ndarray:
    """S_0^z as a dense diagonal matrix (the driving operator)."""
    return np.diag(qubit_z_diagonal(basis))


def field_diagonal(real: ModelRealization, lam: float, basis: SectorBasis) -> np.ndarray:
    """Diagonal (field) part of H: (omega_b + lam) S_0^z + sum_j omega_j S_j^z."""
    if real.size != basis.size:
        raise ValueError("realization and basis sizes differ")
    L = basis.size
    diag = (real.params.omega_b + lam) * qubit_z_diagonal(basis)
    for j in range(1, L):
        bit = (basis.states >> j) & 1
        diag = diag + real.omega_bath[j - 1] * (bit - 0.5)
    return diag


def _flip_flop_pairs(basis: SectorBasis, j: int):
    """Rows coupled by S_0^+ S_j^- + h.c. and their partner rows."""
    mask = 1 | (1 << j)
    bits = basis.states & mask
    movable = (bits != 0) & (bits != mask)
    rows = np.nonzero(movable)[0]
    partners = basis.indices_of(basis.states[rows] ^ mask)
    return rows, partners


def build_interaction(real: ModelRealization, basis: SectorBasis) -> np.ndarray:
    """Flip-flop part (1/2) sum_j g_j (S_0^+ S_j^- + S_0^- S_j^+), dense real."""
    if real.size != basis.size:
        raise ValueError("realization and basis sizes differ")
    H = np.zeros((basis.dim, basis.dim))
    for j in range(1, basis.size):
        rows, partners = _flip_flop_pairs(basis, j)
        H[rows, partners] += real.g[j - 1] / 2.0
    return H


def build_hamiltonian(real: ModelRealization, lam: float, basis: SectorBasis) -> np.ndarray:
    """Dense sector Hamiltonian at detuning lam (qubit field = omega_b + lam).

    Real symmetric; conserves total magnetization by construction since only
    in-sector flip-flop matrix elements are generated.
    """
    H = build_interaction(real, basis)
    H[np.diag_indices(basis.dim)] += field_diagonal(real, lam, basis)
    return H


def build_cd_commutator(real: ModelRealization, basis: SectorBasis) -> np.ndarray:
    """The Hermitian operator i[H, S_0^z] = -sum_j g_j (S_0^x S_j^y - S_0^y S_j^x).

    Independent of lam and of every z-field: only the couplings g_j enter.
    """
    if real.size != basis.size:
        raise ValueError("realization and basis sizes differ")
    z = qubit_z_diagonal(basis)
    K = np.zeros((basis.dim, basis.dim), dtype=complex)
    for j in range(1, basis.size):
        rows, partners = _flip_flop_pairs(basis, j)
        # i [H, S0z]_{ab} = i H_ab (z_b - z_a); the flip flips the qubit, so
        # z_b - z_a = -+1 depending on the qubit bit of the row state.
        K[rows, partners] += 1j * (real.g[j - 1] / 2.0) * (z[partners] - z[rows])
    return K
