"""Transverse-field Ising model builders."""
from __future__ import annotations

import numpy as np

from .liouvillian import LindbladModel, ModelError
from .pauli import PauliString, PauliSum

# sigma^- = (X - iY)/2 = |1><0|
SIGMA_MINUS = PauliSum(1, [("X", 0.5), ("Y", -0.5j)])


def tfi_hamiltonian(n: int, J: float, h: float, boundary: str = "periodic") -> PauliSum:
    """H = sum_i J Z_i Z_{i+1} + h X_i; for n=2 periodic the wrap bond is the same bond."""
    if n < 1:
        raise ModelError("need at least one spin")
    bonds = [(i, i + 1) for i in range(n - 1)]
    if boundary == "periodic" and n > 2:
        bonds.append((n - 1, 0))
    terms = []
    for i, j in bonds:
        labs = ["I"] * n
        labs[i] = labs[j] = "Z"
        terms.append(("".join(labs), J))
    for i in range(n):
        terms.append((PauliString.single(n, i, "X"), h))
    return PauliSum(n, terms)


def build_tfi(n: int, J: float = 1.0, h: float = 1.0, boundary: str = "periodic") -> LindbladModel:
    return LindbladModel(n, tfi_hamiltonian(n, J, h, boundary), [], boundary)


def build_open_tfi(n: int, J: float = 1.0, h: float = 1.0, gamma: float = 0.5,
                   boundary: str = "periodic") -> LindbladModel:
    """TFI plus single-site lowering jumps sqrt(gamma) sigma^-_i."""
    if gamma < 0:
        raise ModelError("gamma must be non-negative")
    jumps = []
    if gamma > 0:
        jumps = [SIGMA_MINUS.embed(n, [i]) * np.sqrt(gamma) for i in range(n)]
    return LindbladModel(n, tfi_hamiltonian(n, J, h, boundary), jumps, boundary)
