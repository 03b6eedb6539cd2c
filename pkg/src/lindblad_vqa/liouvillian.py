"""Compile Lindblad generators into Pauli sums acting on 2N-qubit superstates."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .pauli import DimensionError, PauliString, PauliSum

Picture = Literal["schroedinger", "heisenberg"]

_SIGMA = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
# label-ordered pair basis (2*b_a + b_b) -> little-endian local index (b_a + 2*b_b)
_LE = [0, 2, 1, 3]


class ModelError(ValueError):
    pass


@dataclass
class LindbladModel:
    n_spins: int
    hamiltonian: PauliSum
    jumps: list[PauliSum] = field(default_factory=list)
    boundary: str = "periodic"
    k1: int = 1
    k2: int = 2

    def __post_init__(self):
        if self.hamiltonian.n != self.n_spins:
            raise DimensionError("Hamiltonian qubit count differs from n_spins")
        if not self.hamiltonian.is_close(self.hamiltonian.dagger(), atol=1e-12):
            raise ModelError("Hamiltonian is not Hermitian")
        for s in self.hamiltonian.strings:
            if s.weight > self.k2:
                raise ModelError(f"Hamiltonian term {s} exceeds locality {self.k2}")
        for L in self.jumps:
            if not isinstance(L, PauliSum):
                raise ModelError("jump operators must be Pauli sums")
            if L.n != self.n_spins:
                raise DimensionError("jump operator qubit count differs from n_spins")
            sup = set()
            for s in L.strings:
                sup.update(s.support)
            if len(sup) > self.k1:
                raise ModelError(f"jump operator support {sorted(sup)} exceeds locality {self.k1}")
        if self.boundary not in ("open", "periodic"):
            raise ModelError(f"unknown boundary {self.boundary!r}")


@dataclass
class CompiledLiouvillian:
    """L = l_h + d_antihermitian + d_hermitian on 2N qubits (or its adjoint)."""

    l_h: PauliSum
    d_antihermitian: PauliSum
    d_hermitian: PauliSum
    picture: str = "schroedinger"

    @property
    def n_qubits(self) -> int:
        return self.l_h.n

    @property
    def dissipator(self) -> PauliSum:
        return self.d_antihermitian + self.d_hermitian

    @property
    def total(self) -> PauliSum:
        return self.l_h + self.d_antihermitian + self.d_hermitian

    @property
    def h_sq(self) -> PauliSum:
        """Super-Hamiltonian i*L (i*L^dag in the Heisenberg picture)."""
        return self.total * 1j

    @property
    def has_dissipator(self) -> bool:
        return bool(self.d_antihermitian) or bool(self.d_hermitian)

    @property
    def identity_coefficient(self) -> complex:
        return self.d_hermitian.coeff(PauliString.identity(self.n_qubits))

    def to_text(self) -> str:
        return self.total.to_text()


@lru_cache(maxsize=None)
def _site_block(label: int, side: str) -> PauliSum:
    """Two-qubit Pauli sum of rho -> sigma rho (left) or rho sigma (right) on one site."""
    sp = _SIGMA[label]
    block = np.zeros((4, 4), dtype=complex)
    for b in range(4):
        for a in range(4):
            prod = sp @ _SIGMA[a] if side == "left" else _SIGMA[a] @ sp
            block[b, a] = np.trace(_SIGMA[b].conj().T @ prod) / 2
    le = block[np.ix_(_LE, _LE)]
    return PauliSum.from_dense(le)


def _mult_superop(p: PauliString, side: str) -> PauliSum:
    n = p.n
    out = PauliSum.identity(2 * n)
    for j in range(n):
        lab = p.label(j)
        if lab == 0:
            continue
        out = out.compose(_site_block(lab, side).embed(2 * n, (2 * j, 2 * j + 1)))
    return out


def left_mult_superop(p: PauliString) -> PauliSum:
    """Superoperator rho -> sigma_p rho in the normalized Pauli superstate basis."""
    return _mult_superop(p, "left")


def right_mult_superop(p: PauliString) -> PauliSum:
    """Superoperator rho -> rho sigma_p."""
    return _mult_superop(p, "right")


def left_superop(op: PauliSum) -> PauliSum:
    out = PauliSum.zero(2 * op.n)
    for c, s in op.terms:
        out = out + left_mult_superop(s) * c
    return out


def right_superop(op: PauliSum) -> PauliSum:
    out = PauliSum.zero(2 * op.n)
    for c, s in op.terms:
        out = out + right_mult_superop(s) * c
    return out


def compile_liouvillian(model: LindbladModel, picture: Picture = "schroedinger") -> CompiledLiouvillian:
    """Pauli-sum form of the Lindblad generator (or its adjoint) on 2N qubits."""
    if picture not in ("schroedinger", "heisenberg"):
        raise ValueError(f"unknown picture {picture!r}")
    H = model.hamiltonian
    comm = left_superop(H) - right_superop(H)
    l_h = comm * (-1j) if picture == "schroedinger" else comm * 1j
    diss = PauliSum.zero(2 * model.n_spins)
    for L in model.jumps:
        Ld = L.dagger()
        LdL = Ld.compose(L)
        if picture == "schroedinger":
            sandwich = left_superop(L).compose(right_superop(Ld))
        else:
            sandwich = left_superop(Ld).compose(right_superop(L))
        diss = diss + sandwich - left_superop(LdL) * 0.5 - right_superop(LdL) * 0.5
    return CompiledLiouvillian(
        l_h=l_h,
        d_antihermitian=diss.antihermitian_part(),
        d_hermitian=diss.hermitian_part(),
        picture=picture,
    )


def _greedy_colouring(adj, order) -> dict[int, int]:
    colour: dict[int, int] = {}
    for i in order:
        used = {colour[j] for j in adj[i] if j in colour}
        c = 0
        while c in used:
            c += 1
        colour[i] = c
    return colour


def _dsatur(adj) -> dict[int, int]:
    k = len(adj)
    colour: dict[int, int] = {}
    seen = [set() for _ in range(k)]
    while len(colour) < k:
        i = max((v for v in range(k) if v not in colour), key=lambda v: (len(seen[v]), len(adj[v]), -v))
        c = 0
        while c in seen[i]:
            c += 1
        colour[i] = c
        for j in adj[i]:
            seen[j].add(c)
    return colour


def _exact_colouring(adj, n_colours: int, budget: int) -> dict[int, int] | None:
    """Backtracking search for a colouring with ``n_colours``; None if none found in budget."""
    k = len(adj)
    order = sorted(range(k), key=lambda i: (-len(adj[i]), i))
    colour: dict[int, int] = {}
    nodes = 0

    def rec(pos: int, top: int) -> bool:
        nonlocal nodes
        if pos == k:
            return True
        nodes += 1
        if nodes > budget:
            raise TimeoutError
        i = order[pos]
        used = {colour[j] for j in adj[i] if j in colour}
        # symmetry breaking: at most one brand-new colour per step
        for c in range(min(top + 1, n_colours)):
            if c in used:
                continue
            colour[i] = c
            if rec(pos + 1, max(top, c + 1)):
                return True
            del colour[i]
        return False

    try:
        return dict(colour) if rec(0, 0) else None
    except TimeoutError:
        return None


def commuting_partition(terms: Sequence[PauliString], budget: int = 200_000) -> list[list[PauliString]]:
    """Partition strings into pairwise-commuting groups, using as few groups as we can find.

    Starts from greedy colourings of the anticommutation graph
    (largest-degree-first and DSatur), then tries to remove colours by a
    bounded backtracking search.  Members keep their input order and the
    result is deterministic.
    """
    terms = list(terms)
    k = len(terms)
    adj = [[j for j in range(k) if j != i and not terms[i].commutes(terms[j])] for i in range(k)]
    best = _greedy_colouring(adj, sorted(range(k), key=lambda i: (-len(adj[i]), i)))
    alt = _dsatur(adj)
    if k and max(alt.values()) < max(best.values()):
        best = alt
    n_col = max(best.values(), default=-1) + 1
    while n_col > 1:
        better = _exact_colouring(adj, n_col - 1, budget)
        if better is None:
            break
        best, n_col = better, n_col - 1
    # relabel colours by first appearance in input order
    relabel: dict[int, int] = {}
    for i in range(k):
        relabel.setdefault(best[i], len(relabel))
    return [[terms[i] for i in range(k) if relabel[best[i]] == c] for c in range(n_col)]
