"""Pauli strings and Pauli sums on n qubits.

A string is stored as a pair of bit masks (x, z) with qubit q on bit q, so a
label on up to a few dozen qubits fits in two machine words.  The single-qubit
operator on a qubit is X^x Z^z times i^(x*z); in particular Y = iXZ.

Dense matrices and statevectors use little-endian indexing: basis index
k = sum_q b_q 2^q.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

LABELS = "IXYZ"
_LABEL_INDEX = {"I": 0, "0": 0, "X": 1, "Y": 2, "Z": 3}
# label index -> (x bit, z bit)
_XZ = ((0, 0), (1, 0), (1, 1), (0, 1))

DROP_TOL = 1e-14


class DimensionError(ValueError):
    """Raised when operands live on different numbers of qubits."""


def _popcount(v: int) -> int:
    return v.bit_count()


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis.

    ``labels`` reads qubit 0 first, e.g. ``"XIZ"`` is X on qubit 0 and Z on
    qubit 2.
    """

    n: int
    x: int = 0
    z: int = 0

    @classmethod
    def from_labels(cls, labels: str | Iterable) -> "PauliString":
        if isinstance(labels, str):
            seq = [_LABEL_INDEX[c.upper()] if c not in "0123" else int(c) for c in labels]
        else:
            seq = []
            for c in labels:
                seq.append(c if isinstance(c, (int, np.integer)) else _LABEL_INDEX[str(c).upper()])
        x = z = 0
        for q, lab in enumerate(seq):
            if not 0 <= lab <= 3:
                raise ValueError(f"bad Pauli label {lab!r}")
            bx, bz = _XZ[lab]
            x |= bx << q
            z |= bz << q
        return cls(len(seq), x, z)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def single(cls, n: int, qubit: int, label: str | int) -> "PauliString":
        labs = [0] * n
        labs[qubit] = label if isinstance(label, int) else _LABEL_INDEX[label.upper()]
        return cls.from_labels(labs)

    def label(self, q: int) -> int:
        bx = (self.x >> q) & 1
        bz = (self.z >> q) & 1
        return _XZ.index((bx, bz))

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(self.label(q) for q in range(self.n))

    def __str__(self) -> str:
        return "".join(LABELS[lab] for lab in self.labels)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x | self.z
        return tuple(q for q in range(self.n) if (m >> q) & 1)

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def n_y(self) -> int:
        return _popcount(self.x & self.z)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def commutes(self, other: "PauliString") -> bool:
        _check_n(self.n, other.n)
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def sort_key(self) -> tuple[int, ...]:
        return self.labels

    def to_dense(self) -> np.ndarray:
        dim = 1 << self.n
        perm, phase = _action(self.n, self.x, self.z)
        mat = np.zeros((dim, dim), dtype=complex)
        # (sigma v)[j] = phase[j] v[perm[j]]  ->  M[j, perm[j]] = phase[j]
        mat[np.arange(dim), perm] = phase
        return mat

    def apply(self, v: np.ndarray) -> np.ndarray:
        perm, phase = _action(self.n, self.x, self.z)
        return phase * v[perm]


def _check_n(a: int, b: int) -> None:
    if a != b:
        raise DimensionError(f"qubit count mismatch: {a} vs {b}")


@lru_cache(maxsize=8192)
def _action(n: int, x: int, z: int) -> tuple[np.ndarray, np.ndarray]:
    """Index permutation and phases so that (sigma v)[j] = phase[j] * v[perm[j]]."""
    idx = np.arange(1 << n, dtype=np.int64)
    perm = idx ^ x
    # sigma |k> = i^{nY} (-1)^{|k & z|} |k ^ x>, evaluated at k = perm[j]
    signs = 1 - 2 * (np.bitwise_count(perm & z) & 1).astype(np.int64)
    phase = (1j ** (_popcount(x & z) % 4)) * signs
    perm.setflags(write=False)
    phase = np.asarray(phase, dtype=complex)
    phase.setflags(write=False)
    return perm, phase


def pauli_mul(p: PauliString, q: PauliString) -> tuple[complex, PauliString]:
    """Return (phase, r) with sigma_p sigma_q = phase * sigma_r."""
    _check_n(p.n, q.n)
    x3, z3 = p.x ^ q.x, p.z ^ q.z
    k = (_popcount(p.x & p.z) + _popcount(q.x & q.z) - _popcount(x3 & z3)
         + 2 * _popcount(p.z & q.x)) % 4
    return (1, 1j, -1, -1j)[k], PauliString(p.n, x3, z3)


class PauliSum:
    """Linear combination of Pauli strings with complex coefficients.

    Terms are merged on construction and coefficients with magnitude below
    ``tol`` are dropped.  Instances are treated as immutable.
    """

    __slots__ = ("n", "tol", "_terms")

    def __init__(self, n: int, terms: Mapping[PauliString, complex] | Iterable | None = None,
                 tol: float = DROP_TOL):
        self.n = n
        self.tol = tol
        acc: dict[PauliString, complex] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else terms
            for a, b in items:
                # accept (string, coeff) or (coeff, string)
                if isinstance(a, (PauliString, str)):
                    s, c = a, b
                else:
                    c, s = a, b
                if isinstance(s, str):
                    s = PauliString.from_labels(s)
                _check_n(n, s.n)
                acc[s] = acc.get(s, 0j) + complex(c)
        self._terms = {s: c for s, c in acc.items() if abs(c) > tol}

    # construction helpers
    @classmethod
    def from_string(cls, s: PauliString | str, coeff: complex = 1.0) -> "PauliSum":
        if isinstance(s, str):
            s = PauliString.from_labels(s)
        return cls(s.n, [(s, coeff)])

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n, [(PauliString.identity(n), coeff)])

    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls(n)

    @classmethod
    def from_dense(cls, mat: np.ndarray, tol: float = DROP_TOL) -> "PauliSum":
        """Pauli decomposition by brute-force traces (small n only)."""
        dim = mat.shape[0]
        n = dim.bit_length() - 1
        if mat.shape != (dim, dim) or 1 << n != dim:
            raise DimensionError("matrix must be square with power-of-two size")
        terms = []
        for code in range(4 ** n):
            labs = [(code >> (2 * q)) & 3 for q in range(n)]
            s = PauliString.from_labels(labs)
            perm, phase = _action(n, s.x, s.z)
            # Tr(sigma^dag M) = sum_j conj(sigma[j, perm j]) M[j, perm j]
            c = np.sum(np.conj(phase) * mat[np.arange(dim), perm]) / dim
            terms.append((s, c))
        return cls(n, terms, tol=tol)

    # container protocol
    def items(self):
        return sorted(self._terms.items(), key=lambda kv: kv[0].sort_key())

    @property
    def terms(self) -> list[tuple[complex, PauliString]]:
        return [(c, s) for s, c in self.items()]

    @property
    def strings(self) -> list[PauliString]:
        return [s for s, _ in self.items()]

    def coeff(self, s: PauliString | str) -> complex:
        if isinstance(s, str):
            s = PauliString.from_labels(s)
        return self._terms.get(s, 0j)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self.items())

    def __bool__(self) -> bool:
        return bool(self._terms)

    # algebra
    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        _check_n(self.n, other.n)
        return PauliSum(self.n, list(self._terms.items()) + list(other._terms.items()),
                        tol=min(self.tol, other.tol))

    def __neg__(self) -> "PauliSum":
        return self * -1

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, other) -> "PauliSum":
        if isinstance(other, PauliSum):
            return self.compose(other)
        c = complex(other)
        return PauliSum(self.n, [(s, c * v) for s, v in self._terms.items()], tol=self.tol)

    def __rmul__(self, other) -> "PauliSum":
        return self * complex(other)

    def __truediv__(self, other) -> "PauliSum":
        return self * (1.0 / complex(other))

    def compose(self, other: "PauliSum") -> "PauliSum":
        """Operator product self @ other."""
        _check_n(self.n, other.n)
        acc: dict[PauliString, complex] = {}
        for p, cp in self._terms.items():
            for q, cq in other._terms.items():
                ph, r = pauli_mul(p, q)
                acc[r] = acc.get(r, 0j) + ph * cp * cq
        return PauliSum(self.n, acc, tol=min(self.tol, other.tol))

    __matmul__ = compose

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n, [(s, np.conj(c)) for s, c in self._terms.items()], tol=self.tol)

    def hermitian_part(self) -> "PauliSum":
        return (self + self.dagger()) * 0.5

    def antihermitian_part(self) -> "PauliSum":
        return (self - self.dagger()) * 0.5

    def embed(self, n: int, qubits: Iterable[int]) -> "PauliSum":
        """Place this operator on ``qubits`` of a larger n-qubit register."""
        qubits = list(qubits)
        if len(qubits) != self.n:
            raise DimensionError("qubit map length mismatch")
        out = []
        for s, c in self._terms.items():
            labs = [0] * n
            for q_local, q in enumerate(qubits):
                labs[q] = s.label(q_local)
            out.append((PauliString.from_labels(labs), c))
        return PauliSum(n, out, tol=self.tol)

    def tensor(self, other: "PauliSum") -> "PauliSum":
        """self on the low qubits, other on the following ones."""
        n = self.n + other.n
        out = []
        for p, cp in self._terms.items():
            for q, cq in other._terms.items():
                out.append((PauliString(n, p.x | (q.x << self.n), p.z | (q.z << self.n)), cp * cq))
        return PauliSum(n, out, tol=min(self.tol, other.tol))

    def is_close(self, other: "PauliSum", atol: float = 1e-12) -> bool:
        if self.n != other.n:
            return False
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0j) - other._terms.get(k, 0j)) <= atol for k in keys)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.is_close(other, atol=0.0)

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def norm1(self) -> float:
        return float(sum(abs(c) for c in self._terms.values()))

    # dense / vector action
    def to_dense(self) -> np.ndarray:
        dim = 1 << self.n
        mat = np.zeros((dim, dim), dtype=complex)
        rows = np.arange(dim)
        for s, c in self._terms.items():
            perm, phase = _action(self.n, s.x, s.z)
            mat[rows, perm] += c * phase
        return mat

    def apply(self, v: np.ndarray) -> np.ndarray:
        return apply_pauli_sum(self, v)

    def __repr__(self) -> str:
        body = " + ".join(f"({c:.6g}){s}" for c, s in self.terms[:6])
        more = "" if len(self) <= 6 else f" + ... ({len(self)} terms)"
        return f"PauliSum(n={self.n}: {body or '0'}{more})"

    # text format
    def to_text(self) -> str:
        return "".join(f"{float(c.real)!r} {float(c.imag)!r} {s}\n" for c, s in self.terms)

    @classmethod
    def from_text(cls, text: str, tol: float = DROP_TOL) -> "PauliSum":
        rows = []
        n = None
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            re_, im_, lab = line.split()
            s = PauliString.from_labels(lab)
            n = s.n if n is None else n
            rows.append((s, complex(float(re_), float(im_))))
        if n is None:
            raise ValueError("empty Pauli sum text; qubit count unknown")
        return cls(n, rows, tol=tol)


def apply_pauli_sum(op: PauliSum, v: np.ndarray) -> np.ndarray:
    """Apply ``op`` to a statevector without forming a dense matrix."""
    v = np.asarray(v)
    if v.shape != (1 << op.n,):
        raise DimensionError(f"vector of length {v.shape} does not match {op.n} qubits")
    out = np.zeros(v.shape, dtype=complex)
    for s, c in op._terms.items():
        perm, phase = _action(op.n, s.x, s.z)
        out += (c * phase) * v[perm]
    return out


def dagger(op: PauliSum) -> PauliSum:
    return op.dagger()


def pauli_exp_apply(s: PauliString, phi: complex, v: np.ndarray) -> np.ndarray:
    """exp(phi * sigma_s) v, using sigma_s^2 = 1."""
    if s.is_identity():
        return np.exp(phi) * v
    return np.cosh(phi) * v + np.sinh(phi) * s.apply(v)
