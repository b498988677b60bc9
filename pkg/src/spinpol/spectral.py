"""Eigen-analysis of sector Hamiltonians.

Far from resonance every eigenstate carries a definite qubit polarization;
sweeping the detuning adiabatically either flips it (bright states, which
transfer one unit of polarization) or preserves it (dark states, which
block the transfer).  This module classifies eigenstates, extracts the
resonant bright-pair gap distribution and its analytic form, the sector
gap scales, the diabatic-onset timescales, and level-spacing statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh, eigvalsh

from spinpol.model import (
    ModelRealization,
    SectorBasis,
    build_hamiltonian,
    qubit_z_diagonal,
)

__all__ = [
    "BandLabels",
    "GapHistogram",
    "GapScales",
    "ClassificationAmbiguityError",
    "n_bright_pairs",
    "n_dark",
    "classify_states",
    "resonant_gaps",
    "analytic_gap_density",
    "gap_density_normalization",
    "catalan_multiplicity",
    "collective_gap_multiset",
    "gap_scales",
    "analytic_timescales",
    "level_spacing_ratio",
    "POISSON_R",
    "GOE_R",
]

POISSON_R = 0.3863
GOE_R = 0.5307

# |<S0z>| below this far from resonance means lambda0 was too small to
# polarize every eigenstate
POLARIZATION_AMBIGUITY = 0.45

_DARK_RESIDUAL_TOL = 1e-8


class ClassificationAmbiguityError(RuntimeError):
    pass


def n_bright_pairs(L: int, N: int) -> int:
    """Number of bright pairs in the (L, N) sector: C(L-1, N-1) for M<0."""
    M = N - L / 2
    if M <= 0:
        return comb(L - 1, N - 1) if N >= 1 else 0
    return comb(L - 1, N)


def n_dark(L: int, N: int) -> int:
    """Number of dark states |C(L-1, N) - C(L-1, N-1)|."""
    lower = comb(L - 1, N - 1) if N >= 1 else 0
    return abs(comb(L - 1, N) - lower)


@dataclass(frozen=True)
class BandLabels:
    """Endpoint eigenbases with bright/dark labels carried across the sweep.

    With an inhomogeneous bath field, index k refers to one adiabatic
    continuation path, so the two label arrays coincide.  At gamma_z = 0
    dark states are identified exactly at each end instead (they are S0z
    eigenstates) and pair_of holds the energy-mirror bright partners.
    """

    lambda0: float
    energies_i: np.ndarray = field(repr=False)
    energies_f: np.ndarray = field(repr=False)
    vectors_i: np.ndarray = field(repr=False)
    vectors_f: np.ndarray = field(repr=False)
    qubit_polarization_i: np.ndarray = field(repr=False)
    qubit_polarization_f: np.ndarray = field(repr=False)
    is_dark_i: np.ndarray = field(repr=False)
    is_dark_f: np.ndarray = field(repr=False)
    pair_of: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_dark(self) -> int:
        return int(self.is_dark_i.sum())

    @property
    def n_bright(self) -> int:
        return int((~self.is_dark_i).sum())

    def band_indices(self, which: str, end: str = "f") -> np.ndarray:
        """Eigenstate indices of one of the four bands, e.g. 'bright-down'."""
        kind, qubit = which.split("-")
        pol = self.qubit_polarization_i if end == "i" else self.qubit_polarization_f
        dark = self.is_dark_i if end == "i" else self.is_dark_f
        sel = dark if kind == "dark" else ~dark
        sign = pol > 0 if qubit == "up" else pol < 0
        return np.nonzero(sel & sign)[0]


def _dark_mask_exact(V: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Eigenvectors that are S0z eigenstates (homogeneous-field dark states)."""
    zV = z[:, None] * V
    expect = np.sum(V * zV, axis=0)
    residual = np.linalg.norm(zV - V * expect, axis=0)
    return residual < _DARK_RESIDUAL_TOL


def classify_states(real: ModelRealization, basis: SectorBasis, lambda0: float) -> BandLabels:
    """Label eigenstates bright or dark across the sweep [-lambda0, +lambda0].

    Adiabatic continuation of a disordered (crossing-free) spectrum
    preserves energy order, so path k connects the k-th eigenstate at
    -lambda0 to the k-th at +lambda0; a path is dark when its qubit
    polarization keeps its sign.  In the homogeneous bath field exact
    level crossings make ordering ambiguous, but there dark states are
    exact S0z eigenstates and are identified at each end directly.
    """
    z = qubit_z_diagonal(basis)
    E_i, V_i = eigh(build_hamiltonian(real, -lambda0, basis), check_finite=False)
    E_f, V_f = eigh(build_hamiltonian(real, +lambda0, basis), check_finite=False)
    pol_i = np.sum(V_i * (z[:, None] * V_i), axis=0)
    pol_f = np.sum(V_f * (z[:, None] * V_f), axis=0)
    _check_polarized(pol_i, lambda0)
    _check_polarized(pol_f, lambda0)

    if real.params.gamma_z == 0:
        dark_i = _dark_mask_exact(V_i, z)
        dark_f = _dark_mask_exact(V_f, z)
        pair = _mirror_pair_indices(dark_i)
        return BandLabels(lambda0, E_i, E_f, V_i, V_f, pol_i, pol_f,
                          dark_i, dark_f, pair)

    is_dark = np.sign(pol_i) == np.sign(pol_f)
    return BandLabels(lambda0, E_i, E_f, V_i, V_f, pol_i, pol_f,
                      is_dark, is_dark, None)


def _check_polarized(pol, lambda0):
    worst = np.abs(pol).min()
    if worst < POLARIZATION_AMBIGUITY:
        raise ClassificationAmbiguityError(
            f"|<S0z>| = {worst:.3f} < {POLARIZATION_AMBIGUITY} at lambda0 = "
            f"{lambda0}; detuning too small to classify")


def _mirror_pair_indices(is_dark: np.ndarray) -> np.ndarray:
    """Partner indices for energy-ordered bright states: k-th lowest with
    k-th highest (their energies mirror about Omega_B M for every lam when
    gamma_z = 0); -1 marks dark states."""
    pair = np.full(len(is_dark), -1, dtype=int)
    bright = np.nonzero(~is_dark)[0]
    pair[bright] = bright[::-1]
    return pair


@dataclass(frozen=True)
class GapHistogram:
    """Resonant bright-pair gaps of one sector plus their histogram."""

    gaps: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2.0


def resonant_gaps(real: ModelRealization, basis: SectorBasis, bins: int = 60,
                  bin_range=None) -> GapHistogram:
    """Bright-pair gaps at lam = 0 from the mirror symmetry of the spectrum.

    With a homogeneous bath field the resonant spectrum is symmetric about
    Omega_B M: dark states sit exactly at the center and bright partners
    mirror each other, so the k-th gap is E_(d-k) - E_(k-1) on the sorted
    spectrum.  Requires gamma_z = 0.
    """
    if real.params.gamma_z != 0:
        raise ValueError("resonant bright-pair structure requires gamma_z = 0")
    E = np.sort(eigvalsh(build_hamiltonian(real, 0.0, basis), check_finite=False))
    L, N = basis.size, basis.n_flips
    n_pairs = n_bright_pairs(L, N)
    gaps = E[::-1][:n_pairs] - E[:n_pairs]
    center = real.params.omega_b * basis.magnetization
    sym = np.abs((E + E[::-1]) / 2.0 - center).max()
    if sym > 1e-8:
        warnings.warn(f"resonant spectrum asymmetric about Omega_B M by {sym:.2e}")
    hist_range = bin_range or (0.0, float(gaps.max()) if len(gaps) else 1.0)
    counts, edges = np.histogram(gaps, bins=bins, range=hist_range)
    return GapHistogram(gaps=np.sort(gaps), bin_edges=edges, counts=counts)


def analytic_gap_density(delta, m: float, delta_min: float):
    """Unnormalized gap density  Delta * r^{-(Delta/Delta_min)^2},
    r = (1+2m)/(1-2m), supported on Delta >= Delta_min."""
    if not 0 < m < 0.5:
        raise ValueError(f"magnetization density m must be in (0, 1/2), got {m}")
    delta = np.asarray(delta, dtype=float)
    ratio = (1.0 + 2.0 * m) / (1.0 - 2.0 * m)
    out = delta * ratio ** (-((delta / delta_min) ** 2))
    return np.where(delta >= delta_min, out, 0.0)


def gap_density_normalization(m: float, delta_min: float) -> float:
    """Numerical normalizer int_{delta_min}^inf n(Delta) dDelta."""
    val, _ = quad(lambda d: float(analytic_gap_density(d, m, delta_min)),
                  delta_min, np.inf, epsabs=1e-13, epsrel=1e-11)
    return val


def analytic_gap_cdf(delta, m: float, delta_min: float):
    """Closed-form CDF of the normalized analytic gap density."""
    a = np.log((1.0 + 2.0 * m) / (1.0 - 2.0 * m)) / delta_min**2
    delta = np.asarray(delta, dtype=float)
    cdf = 1.0 - np.exp(-a * (np.maximum(delta, delta_min) ** 2 - delta_min**2))
    return np.where(delta < delta_min, 0.0, cdf)


def catalan_multiplicity(L: int, two_s: int) -> int:
    """Number of collective bath-spin-s multiplets of L-1 spins (s = two_s/2).

    Catalan-triangle count C(L-1, k) - C(L-1, k-1) with k = (L-1-two_s)/2.
    """
    if two_s < 0 or two_s > L - 1 or (L - 1 - two_s) % 2 != 0:
        raise ValueError(f"invalid spin 2s={two_s} for {L - 1} bath spins")
    k = (L - 1 - two_s) // 2
    return comb(L - 1, k) - (comb(L - 1, k - 1) if k >= 1 else 0)


def collective_gap_multiset(L: int, N: int, g_bar: float):
    """Exact resonant gaps and multiplicities of the homogeneous-coupling model.

    Bright pairs couple |up; s, m> with |down; s, m+1> at bath projection
    m = M - 1/2, giving gaps g_bar sqrt((s-m)(s+m+1)) with Catalan-triangle
    multiplicities.  Returns (gaps, multiplicities) sorted by gap.
    """
    M = N - L / 2
    m2 = int(round(2 * (M - 0.5)))  # twice the bath projection, qubit up
    gaps, mult = [], []
    for two_s in range(max(abs(m2), abs(m2 + 2)), L, 2):
        s = two_s / 2.0
        m = m2 / 2.0
        gaps.append(g_bar * np.sqrt((s - m) * (s + m + 1.0)))
        mult.append(catalan_multiplicity(L, two_s))
    order = np.argsort(gaps)
    return np.asarray(gaps)[order], np.asarray(mult, dtype=int)[order]


@dataclass(frozen=True)
class GapScales:
    """Sector gap scales and the diabatic-onset ramp time 2 lam0 / delta_min^2."""

    delta_typ: float
    delta_max: float
    delta_min: float
    tau0: float


DELTA_MIN_CONVENTIONS = ("main", "multiplet", "thermodynamic", "bare")


def minimal_gap(g_bar: float, M: int, convention: str = "main") -> float:
    """Smallest bright-pair gap under the selectable convention.

    main:          g_bar sqrt(2(|M|+1))
    multiplet:     g_bar sqrt(2|M|+1)   (exact for homogeneous couplings)
    thermodynamic: g_bar sqrt(2|M|)     (large-L form entering the
                                         analytic transfer efficiency)
    bare:          g_bar                (the convention behind the reference
                                         ramp time tau_0 = 2 lam0 / g_bar^2)
    """
    aM = abs(M)
    if convention == "main":
        return g_bar * np.sqrt(2.0 * (aM + 1.0))
    if convention == "multiplet":
        return g_bar * np.sqrt(2.0 * aM + 1.0)
    if convention == "thermodynamic":
        return g_bar * np.sqrt(2.0 * aM)
    if convention == "bare":
        return g_bar
    raise ValueError(f"unknown delta_min convention {convention!r}; "
                     f"choose from {DELTA_MIN_CONVENTIONS}")


def gap_scales(real: ModelRealization, M: int, lambda0: float,
               convention: str = "main") -> GapScales:
    """Typical / maximal / minimal gap scales and tau0 for a sector."""
    if M >= 0:
        raise ValueError("gap scales are defined for polarization-reducing sectors M < 0")
    d_min = minimal_gap(real.params.g_bar, M, convention)
    return GapScales(
        delta_typ=real.delta_typ,
        delta_max=real.size * real.params.g_bar,
        delta_min=d_min,
        tau0=2.0 * lambda0 / d_min**2,
    )


def reference_ramp_time(g_bar: float, lambda0: float) -> float:
    """tau_0 = 2 lam0 / g_bar^2, the ramp-time unit of the efficiency scans."""
    return 2.0 * lambda0 / g_bar**2


def analytic_timescales(scales: GapScales, lambda0: float) -> dict:
    """Dark-bright gap scale and onset estimates away from resonance."""
    if lambda0 <= scales.delta_min:
        raise ValueError("lambda0 must exceed delta_min")
    return {
        "min_dark_bright_gap": scales.delta_min**2 / (4.0 * lambda0),
        "critical_gamma_z": scales.delta_min**2 / lambda0,
        "dark_bright_onset_time": lambda0**3 / scales.delta_min**4,
    }


def level_spacing_ratio(real: ModelRealization, basis: SectorBasis, lam: float) -> float:
    """<r> over the middle two spectrum quartiles, r = min(s_n, s_n-1)/max(...)."""
    if basis.dim < 50:
        raise ValueError("sector too small for meaningful level statistics")
    E = np.sort(eigvalsh(build_hamiltonian(real, lam, basis), check_finite=False))
    s = np.diff(E)
    lo, hi = len(E) // 4, (3 * len(E)) // 4
    s0, s1 = s[lo:hi - 1], s[lo + 1:hi]
    keep = (s0 > 0) & (s1 > 0)
    if not np.all(keep):
        warnings.warn("degenerate spacings excluded from <r>")
    r = np.minimum(s0[keep], s1[keep]) / np.maximum(s0[keep], s1[keep])
    return float(r.mean())
