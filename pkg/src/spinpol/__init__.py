"""Dynamic polarization protocols for anisotropic central spin models."""

from spinpol.model import (
    ModelParams,
    ModelRealization,
    SectorBasis,
    build_cd_commutator,
    build_hamiltonian,
    build_qubit_z,
    build_sector_basis,
    sample_realization,
)

__version__ = "0.1.0"
