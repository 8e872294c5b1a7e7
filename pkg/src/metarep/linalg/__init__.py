from metarep.linalg.core import (
    BACKEND,
    EigenResult,
    available_backends,
    normalize_signs,
    orthonormalize_rows,
    sym_eig,
    thin_svd,
)
from metarep.linalg.rng import SeededRng, derive_seed, sample_gaussian_matrix

__all__ = [
    "BACKEND",
    "EigenResult",
    "SeededRng",
    "available_backends",
    "derive_seed",
    "normalize_signs",
    "orthonormalize_rows",
    "sample_gaussian_matrix",
    "sym_eig",
    "thin_svd",
]
