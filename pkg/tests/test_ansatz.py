import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindblad_vqa.ansatz import (AnsatzError, ParameterError, SingularGateError, apply, build_closed,
                                 build_open, derivative_pieces, derivative_state, from_rotations,
                                 general_two_qubit, grow_layers, jacobian, nonunitary_to_unitary,
                                 ordered_groups, trotter_parameters)
from lindblad_vqa.experiments import initial_density, initial_observable
from lindblad_vqa.liouvillian import compile_liouvillian
from lindblad_vqa.models import build_open_tfi, build_tfi
from lindblad_vqa.pauli import PauliString, PauliSum

from oracles import expm, string_matrix


def closed_setup(n, m, shared=False):
    L = compile_liouvillian(build_tfi(n, 1.0, 1.0), "heisenberg")
    return L, build_closed(L, m, shared, initial_observable(n, min(1, n - 1)))


def open_setup(n, m, gamma=0.5):
    L = compile_liouvillian(build_open_tfi(n, 1.0, 1.0, gamma))
    return L, build_open(L, m, initial_density(n))


def dense_group(grp, nq):
    return sum(c * string_matrix(str(s)) for c, s in grp)


def dense_trotter(L, m, dt, v0):
    """prod_r prod_g exp(dt * L_g) v0 with L_g the commuting groups of L."""
    nq = L.n_qubits
    v = v0.copy()
    for _ in range(m):
        for grp in ordered_groups(L.l_h):
            v = expm(dt * dense_group(grp, nq)) @ v
    return v


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("m", [1, 2, 4])
def test_trotter_limit_matches_dense_circuit(n, m):
    L, prog = closed_setup(n, m)
    dt = 0.13
    got = apply(prog, trotter_parameters(prog, dt)).vector()
    ref = dense_trotter(L, m, dt, prog.initial.amplitudes)
    assert np.max(np.abs(got - ref)) <= 1e-12


def test_string_rendering_matches_qubit_order():
    assert str(PauliString.from_labels("XIZY")) == "XIZY"


def test_open_first_layer_trotter_limit():
    L, prog = open_setup(2, 1)
    dt = 0.07
    nq = L.n_qubits
    v = prog.initial.amplitudes.copy()
    ident = PauliString.identity(nq)
    dn = [[(c, s) for c, s in grp if s != ident] for grp in ordered_groups(L.d_hermitian)]
    for grp in dn:
        if grp:
            v = expm(dt * dense_group(grp, nq)) @ v
    for grp in ordered_groups(L.d_antihermitian):
        v = expm(dt * dense_group(grp, nq)) @ v
    for grp in ordered_groups(L.l_h):
        v = expm(dt * dense_group(grp, nq)) @ v
    v = v * np.exp(L.identity_coefficient * dt)
    got = apply(prog, trotter_parameters(prog, dt), t=dt).vector()
    assert np.max(np.abs(got - v)) <= 1e-12


def test_trotter_converges_to_exact_propagator():
    L, _ = closed_setup(2, 1)
    v0 = initial_observable(2, 1).amplitudes
    exact = expm(L.total.to_dense()) @ v0
    errs = []
    for m in (8, 16):
        _, prog = closed_setup(2, m)
        errs.append(np.linalg.norm(apply(prog, trotter_parameters(prog, 1.0 / m)).vector() - exact))
    assert errs[1] < 0.6 * errs[0]


def fd_jacobian(prog, theta, t=0.0, h=1e-5):
    rows = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        rows.append((apply(prog, theta + e, t).vector() - apply(prog, theta - e, t).vector()) / (2 * h))
    return np.array(rows)


@pytest.mark.parametrize("kind,n,m", [("closed", 2, 2), ("closed", 3, 1), ("open", 2, 1), ("open", 2, 2),
                                      ("open", 3, 2)])
def test_derivatives_match_finite_differences(kind, n, m):
    _, prog = closed_setup(n, m) if kind == "closed" else open_setup(n, m)
    rng = np.random.default_rng(n * 10 + m)
    theta = prog.zero_params() + 0.3 * rng.normal(size=prog.n_total)
    _, J = jacobian(prog, theta, 0.2)
    ref = fd_jacobian(prog, theta, 0.2)
    scale = max(np.max(np.abs(ref)), 1.0)
    assert np.max(np.abs(J - ref)) <= 1e-7 * scale


def test_pieces_sum_to_derivative():
    _, prog = open_setup(2, 2)
    theta = prog.zero_params() + 0.2
    _, J = jacobian(prog, theta)
    for k in range(prog.n_total):
        total = sum(w * v for w, v in derivative_pieces(prog, theta, k))
        assert np.allclose(total, J[k], atol=1e-12)
        for _, v in derivative_pieces(prog, theta, k):
            assert abs(np.linalg.norm(v) - 1) < 1e-12
    assert np.allclose(derivative_state(prog, theta, 0).amplitudes, J[0])
    with pytest.raises(ParameterError):
        derivative_state(prog, theta, prog.n_total)


def test_zero_parameters_give_initial_state():
    for L, prog in (closed_setup(3, 2), open_setup(2, 2)):
        s = apply(prog, prog.zero_params())
        assert np.allclose(s.vector(), prog.initial.vector())


def test_parameter_counts():
    # field and bond classes each commute internally at N=2: two parameters per layer
    _, prog = closed_setup(2, 2)
    assert prog.n_params == 4
    _, shared = closed_setup(2, 3, shared=True)
    assert shared.n_params == 2
    _, op = open_setup(2, 2)
    assert op.free_factor and op.n_total == op.n_params + 2


@given(st.integers(0, 2 ** 31 - 1))
def test_nonunitary_replacement(seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    a, U = nonunitary_to_unitary(G, psi)
    assert np.allclose(U.conj().T @ U, np.eye(4), atol=1e-12)
    assert np.allclose(G @ psi, a * U @ psi, atol=1e-12)
    assert abs(a.imag) < 1e-15 and a.real > 0


def test_nonunitary_replacement_singular():
    G = np.zeros((4, 4))
    with pytest.raises(SingularGateError):
        nonunitary_to_unitary(G, np.ones(4))


@given(st.lists(st.floats(-3, 3), min_size=15, max_size=15))
def test_general_gate_is_unitary(params):
    U = general_two_qubit(params)
    assert np.allclose(U.conj().T @ U, np.eye(4), atol=1e-12)


def test_general_gate_entangler_value():
    # [DERIVED] exp(i pi/4 ZZ) in label order is diag(e^{i pi/4}, e^{-i pi/4}, e^{-i pi/4}, e^{i pi/4})
    p = np.zeros(15)
    p[14] = np.pi / 4
    w = np.exp(1j * np.pi / 4)
    assert np.allclose(general_two_qubit(p), np.diag([w, w.conjugate(), w.conjugate(), w]))
    with pytest.raises(ParameterError):
        general_two_qubit(np.zeros(3))


def test_grow_layers_keeps_state():
    L, prog = closed_setup(3, 2)
    theta = 0.1 * np.arange(prog.n_params)
    big, th = grow_layers(prog, theta, L, 4)
    assert big.m == 4
    assert np.allclose(apply(big, th).vector(), apply(prog, theta).vector())
    with pytest.raises(AnsatzError):
        grow_layers(prog, theta, L, 1)


def test_builder_errors():
    Lo = compile_liouvillian(build_open_tfi(2, 1.0, 1.0, 0.5))
    with pytest.raises(AnsatzError):
        build_closed(Lo, 1)
    entangled = initial_density(2).amplitudes.copy()
    entangled[5] += 0.3
    from lindblad_vqa.superstate import SuperState
    with pytest.raises(AnsatzError):
        build_open(Lo, 1, SuperState(entangled))
    with pytest.raises(AnsatzError):
        build_closed(compile_liouvillian(build_tfi(2), "heisenberg"), 0)


def test_from_rotations_single_qubit_pair():
    init = np.zeros(4, complex)
    init[0] = 1
    prog = from_rotations(2, [(PauliSum.from_string("XI", -1j), 0)], init)
    s = apply(prog, np.array([0.4]))
    assert np.allclose(s.vector(), [np.cos(0.4), -1j * np.sin(0.4), 0, 0])


def test_describe_is_json():
    _, prog = open_setup(2, 2)
    doc = json.loads(prog.describe())
    assert doc["family"] == "open" and doc["n_params"] == prog.n_params
    assert {g["kind"] for g in doc["gates"]} == {"nonunitary_sim", "general_two_qubit", "rotation"}
