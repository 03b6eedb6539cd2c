"""Trotter-structured variational ansatze on superstates.

Every parameterized gate is a product of exponentials exp(theta * c * P) of
Pauli strings, so a derivative with respect to a parameter is a sum of states
with the generator c*P inserted after each gate that carries the parameter.

Two program families are built from a compiled Liouvillian:

* closed: m layers of Hamiltonian-part rotations, one parameter per commuting
  group and layer (optionally the same parameters in every layer);
* open: layer r applies, in order, the dissipative block F_r, the
  anti-Hermitian dissipator rotations and the Hamiltonian rotations.  F_1 is
  the non-unitary exp(theta * sum c^n Delta^n) on each qubit pair acting on a
  product initial state, realized as (a_i, U_i) pairs.  For r > 1, F_r is a
  general two-qubit gate per pair with 15 shared parameters, and the per-pair
  complex factors are merged into one free complex factor (two real
  parameters appended after the circuit parameters).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .liouvillian import CompiledLiouvillian, commuting_partition
from .pauli import PauliString, PauliSum, _action
from .superstate import SuperState, product_state

# label-ordered pair index (2*b_a + b_b) -> little-endian local index
_LE = [0, 2, 1, 3]


class AnsatzError(ValueError):
    pass


class SingularGateError(ArithmeticError):
    pass


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class GateSpec:
    """One gate: kind, per-parameter generators (applied in order), parameter indices."""

    kind: str  # "rotation" | "nonunitary_sim" | "general_two_qubit"
    generators: tuple[PauliSum, ...]
    params: tuple[int, ...]
    support: tuple[int, ...]
    layer: int = 1
    label: str = ""

    def __post_init__(self):
        if len(self.generators) != len(self.params):
            raise AnsatzError("one generator per parameter slot")
        if self.kind == "general_two_qubit" and (len(self.params) != 15 or len(self.support) != 2):
            raise AnsatzError("general two-qubit gate needs 15 parameters on 2 qubits")


@dataclass
class AnsatzProgram:
    n_qubits: int
    gates: list[GateSpec]
    n_params: int
    initial: SuperState
    m: int = 1
    family: str = "custom"
    param_names: list[str] = field(default_factory=list)
    free_factor: bool = False
    pair_initial: list[np.ndarray] | None = None
    identity_rate: complex = 0.0
    param_groups: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        used = {k for g in self.gates for k in g.params}
        missing = set(range(self.n_params)) - used
        if missing:
            raise AnsatzError(f"parameters {sorted(missing)} are not referenced by any gate")
        if not self.param_names:
            self.param_names = [f"p{k}" for k in range(self.n_params)]
        self._rot_ops = None

    @property
    def n_total(self) -> int:
        """Length of the parameter vector (circuit parameters plus Re a, Im a)."""
        return self.n_params + (2 if self.free_factor else 0)

    def zero_params(self) -> np.ndarray:
        th = np.zeros(self.n_total)
        if self.free_factor:
            th[self.n_params] = 1.0
        return th

    @property
    def nonunitary_gates(self) -> list[GateSpec]:
        return [g for g in self.gates if g.kind == "nonunitary_sim"]

    def rotation_ops(self):
        """Flat list of (perm, phase, coeff, param, string) in application order."""
        if self._rot_ops is None:
            ops = []
            for g in self.gates:
                if g.kind == "nonunitary_sim":
                    continue
                for gen, k in zip(g.generators, g.params):
                    (c, s), = gen.terms
                    perm, phase = _action(s.n, s.x, s.z)
                    ops.append((perm, phase, c, k, s))
            self._rot_ops = ops
        return self._rot_ops

    def describe(self) -> str:
        gates = []
        for g in self.gates:
            gates.append({
                "kind": g.kind,
                "layer": g.layer,
                "label": g.label,
                "support": list(g.support),
                "params": list(g.params),
                "generators": [gen.to_text().strip().splitlines() for gen in g.generators],
            })
        doc = {
            "family": self.family,
            "m": self.m,
            "n_qubits": self.n_qubits,
            "n_params": self.n_params,
            "free_factor": self.free_factor,
            "param_names": self.param_names,
            "param_groups": self.param_groups,
            "identity_rate": [complex(self.identity_rate).real, complex(self.identity_rate).imag],
            "gates": gates,
        }
        return json.dumps(doc, indent=1)


# ---------------------------------------------------------------- helpers

def pair_matrix(op: PauliSum, pair: int) -> np.ndarray:
    """4x4 matrix (label order) of an operator supported on qubits (2j, 2j+1)."""
    qa, qb = 2 * pair, 2 * pair + 1
    local = []
    for c, s in op.terms:
        if set(s.support) - {qa, qb}:
            raise AnsatzError(f"term {s} is not supported on pair {pair}")
        local.append((PauliString.from_labels([s.label(qa), s.label(qb)]), c))
    le = PauliSum(2, local).to_dense()
    return le[np.ix_(_LE, _LE)]


def _expm_pauli_sum_commuting(op: PauliSum, theta: float, pair: int) -> np.ndarray:
    out = np.eye(4, dtype=complex)
    for c, s in op.terms:
        P = pair_matrix(PauliSum(op.n, [(s, 1.0)]), pair)
        out = (np.cosh(theta * c) * np.eye(4) + np.sinh(theta * c) * P) @ out
    return out


def _complete_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) whose first column is v/|v|.

    Modified Gram-Schmidt over computational basis vectors, taking the
    candidate with the largest residual first.
    """
    d = v.size
    basis = [v / np.linalg.norm(v)]
    remaining = list(range(d))
    while len(basis) < d:
        best, best_r, best_n = None, None, -1.0
        for c in remaining:
            r = np.zeros(d, dtype=complex)
            r[c] = 1.0
            for b in basis:
                r = r - b * np.vdot(b, r)
            nr = np.linalg.norm(r)
            if nr > best_n:
                best, best_r, best_n = c, r, nr
        remaining.remove(best)
        basis.append(best_r / best_n)
    return np.column_stack(basis)


def nonunitary_to_unitary(G: np.ndarray, psi: np.ndarray, floor: float = 1e-14) -> tuple[complex, np.ndarray]:
    """Return (a, U) with U unitary and G psi = a U psi."""
    G = np.asarray(G, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    gpsi = G @ psi
    ng, npsi = np.linalg.norm(gpsi), np.linalg.norm(psi)
    if npsi <= floor or ng <= floor * npsi:
        raise SingularGateError("gate annihilates the state; no unitary replacement exists")
    a = ng / npsi
    B_psi = _complete_basis(psi)
    B_phi = _complete_basis(gpsi)
    U = B_phi @ B_psi.conj().T
    return complex(a), U


# elementary sequence of the 15-parameter gate, in application order:
# (parameter offset, labels on (a, b), coefficient).  R_sigma(p) = exp(-i p sigma / 2).
_GENERAL_SEQUENCE = (
    (2, "ZI", -0.5j), (1, "YI", -0.5j), (0, "ZI", -0.5j),
    (5, "IZ", -0.5j), (4, "IY", -0.5j), (3, "IZ", -0.5j),
    (12, "XX", 1j), (13, "YY", 1j), (14, "ZZ", 1j),
    (8, "ZI", -0.5j), (7, "YI", -0.5j), (6, "ZI", -0.5j),
    (11, "IZ", -0.5j), (10, "IY", -0.5j), (9, "IZ", -0.5j),
)


def general_two_qubit(params) -> np.ndarray:
    """Dense 4x4 unitary (first qubit = high bit):

    (Rz Ry Rz (x) Rz Ry Rz) exp(i(p12 XX + p13 YY + p14 ZZ)) (Rz Ry Rz (x) Rz Ry Rz).
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (15,):
        raise ParameterError("general two-qubit gate takes 15 parameters")
    U = np.eye(4, dtype=complex)
    for k, lab, c in _GENERAL_SEQUENCE:
        P = PauliString.from_labels(lab).to_dense()[np.ix_(_LE, _LE)]
        U = (np.cosh(params[k] * c) * np.eye(4) + np.sinh(params[k] * c) * P) @ U
    return U


def _general_gate(n_qubits: int, pair: int, first_param: int, layer: int) -> GateSpec:
    qa, qb = 2 * pair, 2 * pair + 1
    gens, params = [], []
    for k, lab, c in _GENERAL_SEQUENCE:
        s = PauliString.from_labels(lab)
        gens.append(PauliSum(2, [(s, c)]).embed(n_qubits, (qa, qb)))
        params.append(first_param + k)
    return GateSpec("general_two_qubit", tuple(gens), tuple(params), (qa, qb), layer, f"G{pair}")


def _sites_touched(s: PauliString) -> int:
    return len({q // 2 for q in s.support})


def ordered_groups(op: PauliSum) -> list[list[tuple[complex, PauliString]]]:
    """Commuting groups of the terms of ``op``.

    Terms are first split by how many physical sites they touch (single-site
    field terms versus bond terms), each class is partitioned into as few
    commuting groups as the colouring search finds, and classes are emitted
    in order of increasing site count.
    """
    if not op:
        return []
    strings = sorted(op.strings, key=lambda s: (min(s.support, default=-1), s.sort_key()))
    out = []
    for n_sites in sorted({_sites_touched(s) for s in strings}):
        cls = [s for s in strings if _sites_touched(s) == n_sites]
        for g in commuting_partition(cls):
            out.append([(op.coeff(s), s) for s in g])
    return out


def _rotation(n_qubits: int, c: complex, s: PauliString, k: int, layer: int, label: str) -> GateSpec:
    return GateSpec("rotation", (PauliSum(n_qubits, [(s, c)]),), (k,), s.support, layer, label)


def factor_pairs(amplitudes: np.ndarray, tol: float = 1e-10) -> list[np.ndarray]:
    """Split a superstate vector into per-pair label-ordered 4-vectors, or raise."""
    v = np.asarray(amplitudes, dtype=complex)
    n = (v.size.bit_length() - 1) // 2
    t = v.reshape([4] * n)  # axis 0 is pair n-1
    pairs = []
    for j in range(n):
        ax = n - 1 - j
        mat = np.moveaxis(t, ax, 0).reshape(4, -1)
        u, sv, _ = np.linalg.svd(mat)
        if sv.size > 1 and sv[1] > tol * max(sv[0], 1e-300):
            raise AnsatzError("initial state is not a product over qubit pairs")
        pairs.append(u[:, 0][[0, 2, 1, 3]])  # little-endian local -> label order
    recon = product_state(pairs)
    c = np.vdot(recon, v)
    pairs[0] = pairs[0] * c
    if np.linalg.norm(product_state(pairs) - v) > 1e-8 * max(np.linalg.norm(v), 1.0):
        raise AnsatzError("initial state is not a product over qubit pairs")
    return pairs


def _unit_initial(initial: SuperState) -> SuperState:
    return initial.normalized()


# ---------------------------------------------------------------- builders

def build_closed(liouv: CompiledLiouvillian, m: int, shared_layers: bool = False,
                 initial: SuperState | None = None) -> AnsatzProgram:
    """Large-Trotter-step ansatz from the Hamiltonian part of a closed-system generator."""
    if liouv.has_dissipator:
        raise AnsatzError("closed ansatz requires a generator without dissipator")
    if m < 1:
        raise AnsatzError("m must be >= 1")
    nq = liouv.n_qubits
    if initial is None:
        amps = np.zeros(1 << nq, dtype=complex)
        amps[0] = 1.0
        initial = SuperState(amps)
    groups = ordered_groups(liouv.l_h)
    G = len(groups)
    gates, names, pg = [], [], {}
    for r in range(m):
        for g, grp in enumerate(groups):
            k = g if shared_layers else r * G + g
            if not shared_layers or r == 0:
                names.append(f"g{g}" if shared_layers else f"r{r + 1}:g{g}")
            pg[f"r{r + 1}:h{g}"] = k
            for c, s in grp:
                gates.append(_rotation(nq, c, s, k, r + 1, f"h{g}"))
    return AnsatzProgram(
        n_qubits=nq, gates=gates, n_params=G if shared_layers else m * G,
        initial=_unit_initial(initial), m=m,
        family="closed_2" if shared_layers else "closed_1",
        param_names=names, param_groups=pg,
    )


def build_open(liouv: CompiledLiouvillian, m: int, initial: SuperState,
               free_factor: bool | None = None) -> AnsatzProgram:
    """Open-system ansatz with non-unitary first layer and general gates afterwards."""
    if m < 1:
        raise AnsatzError("m must be >= 1")
    nq = liouv.n_qubits
    n_pairs = nq // 2
    init = _unit_initial(initial)
    pair_init = [p / np.linalg.norm(p) for p in factor_pairs(init.amplitudes)]
    ident = PauliString.identity(nq)
    d_n = PauliSum(nq, [(s, c) for c, s in liouv.d_hermitian.terms if s != ident])
    h_groups = ordered_groups(liouv.l_h)
    u_groups = ordered_groups(liouv.d_antihermitian)
    n_groups = ordered_groups(d_n)
    for grp in n_groups:
        for _, s in grp:
            sup = s.support
            if sup[0] // 2 != sup[-1] // 2:
                raise AnsatzError("non-unitary dissipator terms must act within one qubit pair")

    gates, names, pg = [], [], {}
    k = 0
    for r in range(1, m + 1):
        h_idx = list(range(k, k + len(h_groups)))
        k += len(h_groups)
        u_idx = list(range(k, k + len(u_groups)))
        k += len(u_groups)
        names += [f"r{r}:h{g}" for g in range(len(h_groups))]
        names += [f"r{r}:u{g}" for g in range(len(u_groups))]
        for g, kk in enumerate(h_idx):
            pg[f"r{r}:h{g}"] = kk
        for g, kk in enumerate(u_idx):
            pg[f"r{r}:u{g}"] = kk
        # dissipative block first, then U^u, then U^h
        if r == 1:
            d_idx = list(range(k, k + len(n_groups)))
            k += len(n_groups)
            names += [f"r1:n{g}" for g in range(len(n_groups))]
            for g, kk in enumerate(d_idx):
                pg[f"r1:n{g}"] = kk
            for pair in range(n_pairs):
                gens, params = [], []
                for g, grp in enumerate(n_groups):
                    on_pair = [(c, s) for c, s in grp if s.support[0] // 2 == pair]
                    if on_pair:
                        gens.append(PauliSum(nq, [(s, c) for c, s in on_pair]))
                        params.append(d_idx[g])
                if gens:
                    gates.append(GateSpec("nonunitary_sim", tuple(gens), tuple(params),
                                          (2 * pair, 2 * pair + 1), 1, f"F{pair}"))
        elif n_groups:
            first = k
            k += 15
            names += [f"r{r}:G{q}" for q in range(15)]
            pg[f"r{r}:G"] = first
            for pair in range(n_pairs):
                gates.append(_general_gate(nq, pair, first, r))
        for g, grp in enumerate(u_groups):
            for c, s in grp:
                gates.append(_rotation(nq, c, s, u_idx[g], r, f"u{g}"))
        for g, grp in enumerate(h_groups):
            for c, s in grp:
                gates.append(_rotation(nq, c, s, h_idx[g], r, f"h{g}"))
    free = bool(n_groups) if free_factor is None else free_factor
    return AnsatzProgram(
        n_qubits=nq, gates=gates, n_params=k, initial=init, m=m, family="open",
        param_names=names, free_factor=free, pair_initial=pair_init,
        identity_rate=liouv.identity_coefficient, param_groups=pg,
    )


def from_rotations(n_qubits: int, rotations, initial: SuperState | np.ndarray) -> AnsatzProgram:
    """Program from an explicit list of (generator PauliSum with one term, parameter index)."""
    if not isinstance(initial, SuperState):
        initial = SuperState(np.asarray(initial, dtype=complex))
    gates = []
    for gen, k in rotations:
        if len(gen) != 1:
            raise AnsatzError("rotation generators must be a single Pauli term")
        (c, s), = gen.terms
        gates.append(_rotation(n_qubits, c, s, k, 1, ""))
    n_params = max((k for _, k in rotations), default=-1) + 1
    return AnsatzProgram(n_qubits=n_qubits, gates=gates, n_params=n_params,
                         initial=_unit_initial(initial))


def grow_layers(prog: AnsatzProgram, theta: np.ndarray, liouv: CompiledLiouvillian,
                m_new: int) -> tuple[AnsatzProgram, np.ndarray]:
    """Closed ansatz with more layers and parameters reproducing the same state.

    New layers are appended after the existing ones with zero angles.
    """
    if prog.family != "closed_1":
        raise AnsatzError("layer growth is implemented for the closed_1 family")
    if m_new < prog.m:
        raise AnsatzError("cannot remove layers")
    big = build_closed(liouv, m_new, shared_layers=False, initial=prog.initial)
    th = np.zeros(big.n_total)
    th[: prog.n_params] = theta[: prog.n_params]
    return big, th


# ---------------------------------------------------------------- evaluation

@dataclass
class _Prepared:
    u0: np.ndarray             # unit-norm state after the non-unitary block
    scale: complex             # factor excluding the free factor
    f: complex                 # free factor (1 if absent)
    d_rows: dict               # param -> unit-scale derivative vector after the block
    d_pieces: dict             # param -> list of (weight, unit vector) after the block


def _check_theta(prog: AnsatzProgram, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (prog.n_total,):
        raise ParameterError(f"expected {prog.n_total} parameters, got {theta.shape}")
    return theta


def _prepare(prog: AnsatzProgram, theta: np.ndarray, t: float, want_pieces: bool = False) -> _Prepared:
    scale = prog.initial.a * np.exp(prog.identity_rate * t)
    f = complex(theta[prog.n_params], theta[prog.n_params + 1]) if prog.free_factor else 1.0
    nu = prog.nonunitary_gates
    if not nu:
        return _Prepared(prog.initial.amplitudes, scale, f, {}, {})
    pairs = [p.copy() for p in prog.pair_initial]
    n_pairs = len(pairs)
    units = list(pairs)
    a_fac = [1.0 + 0j] * n_pairs
    dphis: dict[int, list[tuple[int, np.ndarray]]] = {}
    for gate in nu:
        pair = gate.support[0] // 2
        mats = [_expm_pauli_sum_commuting(gen, theta[k], pair) for gen, k in zip(gate.generators, gate.params)]
        Gm = np.eye(4, dtype=complex)
        for E in mats:
            Gm = E @ Gm
        a_i, U_i = nonunitary_to_unitary(Gm, pairs[pair])
        a_fac[pair] = a_i
        units[pair] = U_i @ pairs[pair]
        # dG/dtheta_k: generator inserted after the k-th factor
        for q, k in enumerate(gate.params):
            before = np.eye(4, dtype=complex)
            for E in mats[: q + 1]:
                before = E @ before
            after = np.eye(4, dtype=complex)
            for E in mats[q + 1:]:
                after = E @ after
            dG = after @ pair_matrix(gate.generators[q], pair) @ before
            dphis.setdefault(k, []).append((pair, dG @ pairs[pair] / a_i))
    u0 = product_state(units)
    scale = scale * np.prod(a_fac)
    d_rows, d_pieces = {}, {}
    for k, lst in dphis.items():
        row = np.zeros_like(u0)
        pieces = []
        for pair, dphi in lst:
            vecs = list(units)
            vecs[pair] = dphi
            v = product_state(vecs)
            row += v
            if want_pieces:
                nv = np.linalg.norm(v)
                if nv > 0:
                    pieces.append((nv, v / nv))
        d_rows[k] = row
        d_pieces[k] = pieces
    return _Prepared(u0, scale, f, d_rows, d_pieces)


def _apply_op(perm, phase, c, th, v):
    phi = th * c
    if v.ndim == 1:
        return np.cosh(phi) * v + np.sinh(phi) * (phase * v[perm])
    return np.cosh(phi) * v + np.sinh(phi) * (phase * v[:, perm])


def apply(prog: AnsatzProgram, theta, t: float = 0.0) -> SuperState:
    """a * |rho^u(theta)>: unit-norm amplitudes and separate factor a."""
    theta = _check_theta(prog, theta)
    prep = _prepare(prog, theta, t)
    u = prep.u0
    for perm, phase, c, k, _ in prog.rotation_ops():
        u = _apply_op(perm, phase, c, theta[k], u)
    return SuperState(u, prep.scale * prep.f)


def jacobian(prog: AnsatzProgram, theta, t: float = 0.0) -> tuple[SuperState, np.ndarray]:
    """State and all derivative vectors d(a rho^u)/d theta_k as rows of a matrix."""
    theta = _check_theta(prog, theta)
    prep = _prepare(prog, theta, t)
    u = prep.u0.copy()
    dim = u.size
    J = np.zeros((prog.n_total, dim), dtype=complex)
    for k, row in prep.d_rows.items():
        J[k] = row
    for perm, phase, c, k, _ in prog.rotation_ops():
        u = _apply_op(perm, phase, c, theta[k], u)
        J = _apply_op(perm, phase, c, theta[k], J)
        J[k] += c * (phase * u[perm])
    F = prep.scale * prep.f
    J[: prog.n_params] *= F
    if prog.free_factor:
        J[prog.n_params] = prep.scale * u
        J[prog.n_params + 1] = 1j * prep.scale * u
    return SuperState(u, F), J


def derivative_state(prog: AnsatzProgram, theta, k: int, t: float = 0.0) -> SuperState:
    """Unnormalized derivative d(a rho^u)/d theta_k (factor folded into the amplitudes)."""
    if not 0 <= k < prog.n_total:
        raise ParameterError(f"parameter index {k} out of range")
    _, J = jacobian(prog, theta, t)
    return SuperState(J[k])


def derivative_pieces(prog: AnsatzProgram, theta, k: int, t: float = 0.0) -> list[tuple[complex, np.ndarray]]:
    """Derivative as a sum of weight * (unit vector) pieces, one per generator insertion.

    Each unit vector is the output of a unitary circuit, which is what a
    Hadamard test can measure overlaps of.
    """
    theta = _check_theta(prog, theta)
    prep = _prepare(prog, theta, t, want_pieces=True)
    ops = prog.rotation_ops()
    F = prep.scale * prep.f
    if prog.free_factor and k >= prog.n_params:
        u = apply(prog, theta, t).amplitudes
        w = prep.scale if k == prog.n_params else 1j * prep.scale
        return [(w, u)]
    pieces = []
    for w, v in prep.d_pieces.get(k, []):
        for perm, phase, c, kk, _ in ops:
            v = _apply_op(perm, phase, c, theta[kk], v)
        pieces.append((F * w, v))
    u = prep.u0
    for idx, (perm, phase, c, kk, _) in enumerate(ops):
        u = _apply_op(perm, phase, c, theta[kk], u)
        if kk != k:
            continue
        v = phase * u[perm]
        for perm2, phase2, c2, k2, _ in ops[idx + 1:]:
            v = _apply_op(perm2, phase2, c2, theta[k2], v)
        pieces.append((F * c, v))
    return pieces


def trotter_parameters(prog: AnsatzProgram, dt: float) -> np.ndarray:
    """Parameter vector that turns every gate into a plain Trotter step of size dt."""
    th = np.full(prog.n_total, float(dt))
    if prog.free_factor:
        th[prog.n_params:] = (1.0, 0.0)
    return th
