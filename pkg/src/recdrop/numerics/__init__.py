"""Dense linear algebra and deterministic random-number generation."""

from .linalg import (
    MAX_EIG_DIM,
    balance,
    check_matrix,
    eigenvalues,
    hessenberg,
    householder_qr,
    matmul,
    qr_shift_step,
)
from .rng import MAX_SEED, Rng, derive_seed, sample_categorical

__all__ = [
    "MAX_EIG_DIM",
    "MAX_SEED",
    "Rng",
    "balance",
    "check_matrix",
    "derive_seed",
    "eigenvalues",
    "hessenberg",
    "householder_qr",
    "matmul",
    "qr_shift_step",
    "sample_categorical",
]
