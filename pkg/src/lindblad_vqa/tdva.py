"""McLachlan (TDVA) and TDVP parameter flows for variational superstates.

The variational state is psi(theta, t) = a(theta, t) |u(theta)>.  TDVA
solves A^R theta_dot = C^I with

    A^R_ij = Re <d_i psi | d_j psi>,    C^I_i = Im <d_i psi | H_SQ | psi>,

where H_SQ = i L.  Open programs carry the identity part of the dissipator
as an explicit factor exp(c_I t); its contribution is subtracted from H_SQ
because it is already integrated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzProgram, derivative_pieces, jacobian
from .linsolve import RegularizationConfig, SolveInfo, solve
from .pauli import PauliString, PauliSum, apply_pauli_sum


class SingularSystemError(ArithmeticError):
    pass


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    mode: str = "exact"  # exact | sampled
    shots: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if self.mode == "sampled" and self.shots < 1:
            raise ValueError("shots must be >= 1 in sampled mode")


@dataclass
class TdvaSystem:
    a_matrix: np.ndarray
    c_vector: np.ndarray
    lam: float | None = None
    method: str = "tikhonov"
    meta: dict = field(default_factory=dict)


def effective_h_sq(prog: AnsatzProgram, h_sq: PauliSum) -> PauliSum:
    """H_SQ with the part already carried by the program's exp(c_I t) factor removed."""
    if prog.identity_rate == 0:
        return h_sq
    ident = PauliString.identity(h_sq.n)
    return h_sq - PauliSum(h_sq.n, [(ident, 1j * prog.identity_rate)])


# ------------------------------------------------------------ sampling

_KIND_A, _KIND_C, _KIND_N = 1, 2, 3


def hadamard_estimate(z: complex, part: str, shots: int, rng: np.random.Generator) -> float:
    """Shot estimate of Re z (part='re') or Im z (part='im') for |z| <= 1.

    Ancilla outcome +x (or +y) has probability (1 + Re z)/2 (or (1 + Im z)/2);
    the estimate is 2 p_hat - 1.
    """
    val = z.real if part == "re" else z.imag
    p = min(max((1.0 + val) / 2.0, 0.0), 1.0)
    return 2.0 * rng.binomial(shots, p) / shots - 1.0


def _sampled_product(w: complex, z: complex, shots: int, rng) -> complex:
    """Estimate of w*z where z = <v|W|u> of unit vectors is measured by Hadamard tests."""
    re = hadamard_estimate(z, "re", shots, rng) if w != 0 else 0.0
    im = hadamard_estimate(z, "im", shots, rng) if w != 0 else 0.0
    return w * complex(re, im)


def _element_rng(seed: int, kind: int, i: int, j: int) -> np.random.Generator:
    return np.random.default_rng([seed, kind, i, j])


def assemble(prog: AnsatzProgram, theta, h_sq: PauliSum, t: float = 0.0,
             est: EstimatorConfig = EstimatorConfig()) -> TdvaSystem:
    """A^R and C^I at (theta, t); exact inner products or simulated Hadamard tests."""
    theta = np.asarray(theta, dtype=float)
    state, J = jacobian(prog, theta, t)
    if not np.all(np.isfinite(J)) or not np.isfinite(state.a):
        raise InvalidStateError("non-finite variational state or derivative")
    H = effective_h_sq(prog, h_sq)
    if est.mode == "exact":
        psi = state.vector()
        A = (J.conj() @ J.T).real
        C = (J.conj() @ H.apply(psi)).imag
        return TdvaSystem(0.5 * (A + A.T), C)

    P = prog.n_total
    pieces = [derivative_pieces(prog, theta, k, t) for k in range(P)]
    u = state.amplitudes
    terms = [(c, s.apply(u)) for c, s in H.terms]  # P_k u, unit vectors
    A = np.zeros((P, P))
    for i in range(P):
        for j in range(i, P):
            rng = _element_rng(est.seed, _KIND_A, i, j)
            acc = 0j
            for wi, vi in pieces[i]:
                for wj, vj in pieces[j]:
                    acc += _sampled_product(np.conj(wi) * wj, np.vdot(vi, vj), est.shots, rng)
            A[i, j] = A[j, i] = acc.real
    C = np.zeros(P)
    for i in range(P):
        rng = _element_rng(est.seed, _KIND_C, i, 0)
        acc = 0j
        for wi, vi in pieces[i]:
            for c, pu in terms:
                acc += _sampled_product(np.conj(wi) * state.a * c, np.vdot(vi, pu), est.shots, rng)
        C[i] = acc.imag
    return TdvaSystem(A, C, meta={"shots": est.shots, "seed": est.seed})


def theta_dot(prog, theta, h_sq, t=0.0, reg=RegularizationConfig(), est=EstimatorConfig()):
    sys = assemble(prog, theta, h_sq, t, est)
    x, info = solve(sys.a_matrix, sys.c_vector, reg)
    sys.lam, sys.method = info.lam, reg.method
    return x, info


@dataclass
class StepRecord:
    t: float
    lam: float
    rank: int
    residual: float
    theta_dot_norm: float
    cond: float

    @classmethod
    def from_info(cls, t: float, info: SolveInfo) -> "StepRecord":
        return cls(t, info.lam, info.rank, info.residual, info.norm, info.cond)


def tdva_step(prog: AnsatzProgram, theta, h_sq: PauliSum, dt: float, t: float = 0.0,
              reg: RegularizationConfig = RegularizationConfig(),
              est: EstimatorConfig = EstimatorConfig(), integrator: str = "euler"):
    """Advance theta by dt; returns (theta_next, StepRecord of the first stage)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    theta = np.asarray(theta, dtype=float)
    k1, info = theta_dot(prog, theta, h_sq, t, reg, est)
    if integrator == "euler":
        nxt = theta + dt * k1
    elif integrator == "rk4":
        k2, _ = theta_dot(prog, theta + 0.5 * dt * k1, h_sq, t + 0.5 * dt, reg, est)
        k3, _ = theta_dot(prog, theta + 0.5 * dt * k2, h_sq, t + 0.5 * dt, reg, est)
        k4, _ = theta_dot(prog, theta + dt * k3, h_sq, t + dt, reg, est)
        nxt = theta + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    if not np.all(np.isfinite(nxt)):
        raise InvalidStateError("parameter update is not finite")
    return nxt, StepRecord.from_info(t, info)


# ------------------------------------------------------------ TDVP

def tdvp_system(prog: AnsatzProgram, theta, h_sq: PauliSum, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """M theta_dot = r with M_ij = Im <d_i|d_j> and r_i = -Re <d_i|H_SQ|psi>."""
    state, J = jacobian(prog, np.asarray(theta, dtype=float), t)
    H = effective_h_sq(prog, h_sq)
    M = (J.conj() @ J.T).imag
    r = -(J.conj() @ H.apply(state.vector())).real
    return M, r


def tdvp_step(prog: AnsatzProgram, theta, h_sq: PauliSum, dt: float, t: float = 0.0,
              tol: float = 1e-12) -> np.ndarray:
    M, r = tdvp_system(prog, theta, h_sq, t)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s.min() <= tol * max(1.0, s.max()):
        raise SingularSystemError(
            f"TDVP matrix Im<d_i|d_j> is singular (smallest singular value {s.min() if s.size else 0:.3e})")
    return np.asarray(theta, dtype=float) + dt * np.linalg.solve(M, r)


def evolve(prog: AnsatzProgram, theta0, h_sq: PauliSum, dt: float, n_steps: int, t0: float = 0.0,
           reg: RegularizationConfig = RegularizationConfig(), est: EstimatorConfig = EstimatorConfig(),
           integrator: str = "euler", callback=None):
    """Run n_steps TDVA steps; returns the list of theta (length n_steps + 1) and step records."""
    thetas = [np.asarray(theta0, dtype=float)]
    records = []
    t = t0
    for _ in range(n_steps):
        th, rec = tdva_step(prog, thetas[-1], h_sq, dt, t, reg, est, integrator)
        t = t0 + (len(thetas)) * dt
        thetas.append(th)
        records.append(rec)
        if callback is not None:
            callback(t, th)
    return thetas, records
