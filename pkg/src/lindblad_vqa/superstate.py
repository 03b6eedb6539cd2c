"""Pauli-basis vectorization of operators on N spins into 2N-qubit superstates.

Physical site j owns simulated qubits (2j, 2j+1).  The Pauli label on site j
is encoded in the two bits as ``label = 2*b_{2j} + b_{2j+1}`` so that
0, x, y, z map to 00, 01, 10, 11.  Amplitude arrays use little-endian bit
indexing (qubit q is bit q of the array index).

Basis operators are normalized, P_alpha = sigma_alpha / 2^{N/2}, so that
Tr(P_alpha P_beta) = delta_{alpha beta} and the map is an isometry from the
Hilbert-Schmidt space onto C^{4^N}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .pauli import DimensionError, PauliString, _action


def label_index(labels) -> int:
    """Superstate basis index of a per-site Pauli label tuple (0..3 each)."""
    idx = 0
    for j, lab in enumerate(labels):
        idx |= ((lab >> 1) & 1) << (2 * j)
        idx |= (lab & 1) << (2 * j + 1)
    return idx


def index_labels(idx: int, n_spins: int) -> tuple[int, ...]:
    return tuple(2 * ((idx >> (2 * j)) & 1) + ((idx >> (2 * j + 1)) & 1) for j in range(n_spins))


@lru_cache(maxsize=16)
def _index_table(n_spins: int) -> np.ndarray:
    """table[c] = superstate index for the physical string whose packed code is c.

    The physical code packs label_j into bits (2j, 2j+1) as label_j itself.
    """
    codes = np.arange(4 ** n_spins, dtype=np.int64)
    out = np.zeros_like(codes)
    for j in range(n_spins):
        lab = (codes >> (2 * j)) & 3
        out |= ((lab >> 1) & 1) << (2 * j)
        out |= (lab & 1) << (2 * j + 1)
    out.setflags(write=False)
    return out


def _n_spins_of(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


@dataclass
class SuperState:
    """Vector of Pauli coefficients times a separate complex factor ``a``."""

    amplitudes: np.ndarray
    a: complex = 1.0 + 0j
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        self.a = complex(self.a)

    @property
    def n_qubits(self) -> int:
        return _n_spins_of(self.amplitudes.size)

    @property
    def n_spins(self) -> int:
        nq = self.n_qubits
        if nq % 2:
            raise DimensionError("superstate of an odd number of qubits has no spin count")
        return nq // 2

    def vector(self) -> np.ndarray:
        """Amplitudes with the factor folded in."""
        return self.a * self.amplitudes

    def norm(self) -> float:
        return float(abs(self.a) * np.linalg.norm(self.amplitudes))

    def normalized(self) -> "SuperState":
        """Unit-norm amplitudes, with the norm moved into ``a``."""
        nrm = np.linalg.norm(self.amplitudes)
        if nrm == 0:
            return SuperState(self.amplitudes.copy(), self.a)
        return SuperState(self.amplitudes / nrm, self.a * nrm)

    def scaled(self, c: complex) -> "SuperState":
        return SuperState(self.amplitudes, self.a * c)

    def to_text(self, tol: float = 0.0) -> str:
        v = self.vector()
        lines = [f"# n_qubits={self.n_qubits}"]
        for k in np.flatnonzero(np.abs(v) > tol):
            lines.append(f"{k} {float(v[k].real)!r} {float(v[k].imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SuperState":
        n_qubits = None
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("#"):
                if "n_qubits=" in line:
                    n_qubits = int(line.split("n_qubits=")[1].split()[0])
                continue
            if line:
                k, re_, im_ = line.split()
                entries.append((int(k), complex(float(re_), float(im_))))
        if n_qubits is None:
            raise ValueError("missing n_qubits header")
        amps = np.zeros(1 << n_qubits, dtype=complex)
        for k, v in entries:
            amps[k] = v
        return cls(amps)


def vectorize(op: np.ndarray) -> SuperState:
    """Superstate of a dense 2^N x 2^N operator: amplitude(alpha) = Tr(P_alpha^dag op)."""
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionError("operator must be a square matrix")
    n = _n_spins_of(op.shape[0])
    dim = 1 << n
    rows = np.arange(dim)
    table = _index_table(n)
    amps = np.zeros(4 ** n, dtype=complex)
    scale = 2.0 ** (-n / 2)
    for code in range(4 ** n):
        s = _physical_string(n, code)
        perm, phase = _action(n, s.x, s.z)
        amps[table[code]] = scale * np.sum(np.conj(phase) * op[rows, perm])
    return SuperState(amps)


def devectorize(s: SuperState) -> np.ndarray:
    """Dense operator represented by ``s`` (factor included)."""
    n = s.n_spins
    dim = 1 << n
    rows = np.arange(dim)
    v = s.vector()
    table = _index_table(n)
    out = np.zeros((dim, dim), dtype=complex)
    scale = 2.0 ** (-n / 2)
    for code in np.flatnonzero(v[table] != 0):
        c = v[table[code]]
        ps = _physical_string(n, int(code))
        perm, phase = _action(n, ps.x, ps.z)
        out[rows, perm] += scale * c * phase
    return out


@lru_cache(maxsize=1 << 14)
def _physical_string(n: int, code: int) -> PauliString:
    return PauliString.from_labels([(code >> (2 * j)) & 3 for j in range(n)])


def basis_state(n_spins: int, labels) -> SuperState:
    amps = np.zeros(4 ** n_spins, dtype=complex)
    amps[label_index(labels)] = 1.0
    return SuperState(amps)


def normalize_observable(op: np.ndarray) -> tuple[SuperState, float]:
    """Unit Hilbert-Schmidt-norm superstate of ``op`` and the removed scale."""
    s = vectorize(op)
    scale = float(np.linalg.norm(s.amplitudes))
    if scale == 0:
        raise ValueError("cannot normalize the zero operator")
    return SuperState(s.amplitudes / scale), scale


def overlap(x: SuperState, y: SuperState) -> complex:
    """Hilbert-Schmidt inner product Tr(X^dag Y) of the represented operators."""
    if x.amplitudes.shape != y.amplitudes.shape:
        raise DimensionError("superstates of different size")
    return complex(np.conj(x.a) * y.a * np.vdot(x.amplitudes, y.amplitudes))


def trace_of(s: SuperState) -> complex:
    n = s.n_spins
    return complex(s.a * 2.0 ** (n / 2) * s.amplitudes[0])


def purity(s: SuperState) -> float:
    return float(abs(s.a) ** 2 * np.vdot(s.amplitudes, s.amplitudes).real)


def pauli_expectation(s: SuperState, labels) -> complex:
    """Tr(sigma_labels * rho) for the represented operator rho."""
    n = s.n_spins
    # sigma = 2^{N/2} P and P is Hermitian, so Tr(sigma rho) = 2^{N/2} c_alpha
    return complex(s.a * 2.0 ** (n / 2) * s.amplitudes[label_index(labels)])


def product_state(pair_vectors) -> np.ndarray:
    """Amplitude vector of a product over qubit pairs, pair 0 first."""
    out = np.ones(1, dtype=complex)
    for pv in pair_vectors:
        pv = np.asarray(pv, dtype=complex)
        # pair vector is indexed by 2*b_{2j} + b_{2j+1}; reorder to little-endian
        le = pv[[0, 2, 1, 3]]
        out = np.kron(le, out)
    return out


def pair_vectors_of_density(rho_sites) -> list[np.ndarray]:
    """Per-site 4-vectors (label-ordered) for a product density matrix."""
    out = []
    for r in rho_sites:
        s = vectorize(np.asarray(r))
        out.append(np.array([s.amplitudes[label_index([lab])] for lab in range(4)]))
    return out
