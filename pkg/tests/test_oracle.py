import numpy as np
import pytest

from lindblad_vqa.experiments import initial_density, initial_observable
from lindblad_vqa.liouvillian import compile_liouvillian
from lindblad_vqa.models import build_open_tfi, build_tfi
from lindblad_vqa.oracle import (SizeCapError, Trajectory, autocorrelation, exact_propagate, exact_trajectory,
                                 magnetization, read_csv, state_fidelity_uhlmann, superstate_fidelity,
                                 uhlmann_superstates)
from lindblad_vqa.superstate import SuperState, devectorize, purity, trace_of, vectorize

from oracles import SIGMA_MINUS, Z, expm, lindblad_superop, site_op, tfi_dense, uhlmann


def density_rk4(n, gamma, t, steps=2000):
    """Direct Lindblad integration on the density matrix (no superstates)."""
    H = tfi_dense(n, 1.0, 1.0)
    Ls = [np.sqrt(gamma) * site_op(n, j, SIGMA_MINUS) for j in range(n)]

    def f(r):
        out = -1j * (H @ r - r @ H)
        for L in Ls:
            LdL = L.conj().T @ L
            out += L @ r @ L.conj().T - 0.5 * (LdL @ r + r @ LdL)
        return out

    rho = np.zeros((2 ** n, 2 ** n), complex)
    rho[0, 0] = 1
    h = t / steps
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + h / 2 * k1)
        k3 = f(rho + h / 2 * k2)
        k4 = f(rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


@pytest.mark.parametrize("method", ["expm", "rk4"])
def test_open_propagation_matches_density_integration(method):
    L = compile_liouvillian(build_open_tfi(2, 1.0, 1.0, 0.5))
    s = exact_propagate(L, initial_density(2), 0.7, method=method)
    assert np.allclose(devectorize(s), density_rk4(2, 0.5, 0.7), atol=1e-8)
    assert abs(trace_of(s) - 1) < 1e-10


def test_heisenberg_and_schroedinger_expectations_agree():
    n, t = 2, 0.6
    Lh = compile_liouvillian(build_open_tfi(n, 1.0, 1.0, 0.5), "heisenberg")
    Ls = compile_liouvillian(build_open_tfi(n, 1.0, 1.0, 0.5))
    O = vectorize(site_op(n, 0, Z))
    rho = initial_density(n)
    lhs = np.vdot(exact_propagate(Lh, O, t).vector(), rho.vector())
    rhs = np.vdot(O.vector(), exact_propagate(Ls, rho, t).vector())
    assert abs(lhs - rhs) < 1e-10


def test_trajectory_methods_agree():
    L = compile_liouvillian(build_tfi(3, 1.0, 1.0), "heisenberg")
    times = np.linspace(0, 1, 5)
    a = exact_trajectory(L, initial_observable(3, 1), times, method="expm")
    b = exact_trajectory(L, initial_observable(3, 1), times, method="rk4")
    for x, y in zip(a, b):
        assert np.allclose(x.vector(), y.vector(), atol=1e-9)


def test_size_cap():
    L = compile_liouvillian(build_tfi(2, 1.0, 1.0))
    big = compile_liouvillian(build_tfi(7, 1.0, 1.0))
    with pytest.raises(SizeCapError):
        exact_propagate(big, SuperState(np.eye(1, 4 ** 7, 0).ravel().astype(complex)), 0.1)
    with pytest.raises(ValueError):
        exact_propagate(L, initial_density(2), 0.1, method="euler")


def test_autocorrelation_closed_form_single_spin():
    # [DERIVED] H = h X on one spin: <sigma^y(t), sigma^y(0)>/2 = cos(2 h t)
    L = compile_liouvillian(build_tfi(1, 0.0, 0.8), "heisenberg")
    o0 = initial_observable(1, 0)
    for t in (0.0, 0.3, 1.1):
        c = autocorrelation(o0, exact_propagate(L, o0, t))
        assert abs(c - np.cos(2 * 0.8 * t)) < 1e-10


def test_fidelities():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    m2 = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    sig = m2 @ m2.conj().T
    sig /= np.trace(sig)
    assert abs(state_fidelity_uhlmann(rho, sig) - uhlmann(rho, sig)) < 1e-10
    assert abs(state_fidelity_uhlmann(rho, rho) - 1) < 1e-10
    assert abs(uhlmann_superstates(vectorize(rho), vectorize(sig)) - uhlmann(rho, sig)) < 1e-10
    u = vectorize(rho).vector()
    s = SuperState(u / np.linalg.norm(u))
    assert abs(superstate_fidelity(s, SuperState(s.amplitudes, np.exp(0.7j))) - 1) < 1e-12
    # the trial factor is part of the compared state, so a norm error shows up in F
    assert abs(superstate_fidelity(s, SuperState(s.amplitudes, 0.9)) - 0.81) < 1e-12
    # pure states: Uhlmann reduces to |<a|b>|^2
    a = np.array([1, 0], complex)
    b = np.array([np.cos(0.3), np.sin(0.3)], complex)
    assert abs(state_fidelity_uhlmann(np.outer(a, a), np.outer(b, b)) - np.cos(0.3) ** 2) < 1e-10


def test_magnetization_and_purity():
    s = initial_density(3)
    assert abs(magnetization(s, 0) - 1) < 1e-14
    assert abs(purity(s) - 1) < 1e-14
    rho = np.diag([0.25, 0.75]).astype(complex)
    assert abs(magnetization(vectorize(rho), 0) + 0.5) < 1e-14


def test_trajectory_persistence(tmp_path):
    tr = Trajectory(metadata={"x": 1})
    tr.append(0.0, [0.0, 1.0], 1.0, {"m": 0.5})
    tr.append(0.1, [0.1, 1.0], 0.9 + 0.1j, {"m": 0.4})
    tr.write_csv(tmp_path / "t.csv")
    data = read_csv(tmp_path / "t.csv")
    assert np.allclose(data["m"][0], [0, 0.1]) and np.allclose(data["m"][1], [0.5, 0.4])
    tr.write_json(tmp_path / "t.json")
    import json
    back = Trajectory.from_json(json.loads((tmp_path / "t.json").read_text()))
    assert back.records[1].a == 0.9 + 0.1j and np.allclose(back.records[1].theta, [0.1, 1.0])
    assert back.metadata == {"x": 1}
    with pytest.raises(ValueError):
        tr.append(0.05, [0.0, 0.0], 1.0, {"m": 0.0})


def test_superop_oracle_self_consistency():
    # the dense column-stacking generator reproduces the density integration
    H = tfi_dense(2, 1.0, 1.0)
    Ls = [np.sqrt(0.5) * site_op(2, j, SIGMA_MINUS) for j in range(2)]
    S = lindblad_superop(H, Ls)
    rho0 = np.zeros((4, 4), complex)
    rho0[0, 0] = 1
    rho = (expm(S * 0.7) @ rho0.reshape(-1, order="F")).reshape(4, 4, order="F")
    assert np.allclose(rho, density_rk4(2, 0.5, 0.7), atol=1e-8)
