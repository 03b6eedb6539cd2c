"""Independent dense reference implementations used only by the tests.

Nothing here imports the package: matrices are built from explicit Kronecker
products so that package results can be checked against them.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}
SIGMA = (I2, X, Y, Z)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|: spin up (|0>) to down


def kron_sites(ops_by_site):
    """Tensor product with site 0 as the least significant (rightmost) factor."""
    out = np.ones((1, 1), dtype=complex)
    for op in reversed(list(ops_by_site)):
        out = np.kron(out, op)
    return out


def string_matrix(labels: str) -> np.ndarray:
    """Dense matrix of a Pauli string; character q acts on qubit q."""
    return kron_sites(PAULI[c] for c in labels)


def site_op(n, site, op):
    return kron_sites(op if j == site else I2 for j in range(n))


def tfi_dense(n, J, h, boundary="periodic"):
    H = np.zeros((2 ** n, 2 ** n), dtype=complex)
    bonds = [(j, j + 1) for j in range(n - 1)]
    if boundary == "periodic" and n > 2:
        bonds.append((n - 1, 0))
    for a, b in bonds:
        H += J * site_op(n, a, Z) @ site_op(n, b, Z)
    for j in range(n):
        H += h * site_op(n, j, X)
    return H


def lindblad_superop(H, jumps):
    """Column-stacking generator: vec(L rho) = S vec(rho), vec stacks columns."""
    d = H.shape[0]
    eye = np.eye(d)
    S = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for L in jumps:
        LdL = L.conj().T @ L
        S += np.kron(L.conj(), L) - 0.5 * np.kron(eye, LdL) - 0.5 * np.kron(LdL.T, eye)
    return S


def superstate_index(labels) -> int:
    """Index of a per-site label tuple (0=I,1=X,2=Y,3=Z); site j owns bits 2j, 2j+1."""
    idx = 0
    for j, lab in enumerate(labels):
        hi, lo = lab // 2, lab % 2
        idx += hi * 2 ** (2 * j) + lo * 2 ** (2 * j + 1)
    return idx


def pauli_basis(n):
    """Columns: vec of normalized Pauli basis operators, in superstate index order."""
    dim = 2 ** n
    B = np.zeros((dim * dim, 4 ** n), dtype=complex)
    for labels in itertools.product(range(4), repeat=n):
        P = kron_sites(SIGMA[l] for l in labels) / np.sqrt(dim)
        B[:, superstate_index(labels)] = P.reshape(-1, order="F")
    return B


def to_pauli_basis(S, n):
    B = pauli_basis(n)
    return B.conj().T @ S @ B


def vec_pauli(op):
    n = int(np.log2(op.shape[0]))
    return pauli_basis(n).conj().T @ op.reshape(-1, order="F")


def unvec_pauli(v, n):
    dim = 2 ** n
    return (pauli_basis(n) @ v).reshape(dim, dim, order="F")


def expm(M):
    return scipy.linalg.expm(M)


def sqrtm_psd(m):
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def uhlmann(rho, sigma):
    r = sqrtm_psd(rho)
    s = np.linalg.svd(r @ sqrtm_psd(sigma), compute_uv=False)
    return float(np.sum(s) ** 2)
