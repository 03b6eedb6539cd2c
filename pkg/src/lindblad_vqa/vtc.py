"""Variational Trotter compression: per-step fidelity maximization.

The norm factor a is tracked outside the circuit.  Each step maximizes

    |f|^2 = | a(t - dt)/a(t) <u(theta)| V(dt) |u(theta_prev)> |^2,

with V(dt) the truncated Taylor series of exp(L dt) and the ratio recovered
from the purity flow or from the unit trace of a density matrix.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .ansatz import AnsatzProgram, apply
from .liouvillian import CompiledLiouvillian
from .pauli import PauliSum
from .superstate import SuperState


class ExpansionTooLargeError(ValueError):
    pass


class StepTooLargeError(ValueError):
    pass


class NearPureStateError(ValueError):
    pass


@dataclass(frozen=True)
class VtcProblem:
    dt: float = 0.05
    n_expansion: int = 2
    a_method: str = "purity"  # purity | trace | none
    maxiter: int = 200
    grad_step: float = 1e-6
    ftol: float = 1e-14
    max_terms: int = 200_000
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_expansion < 1:
            raise ValueError("n_expansion must be >= 1")
        if self.a_method not in ("purity", "trace", "none"):
            raise ValueError(f"unknown a_method {self.a_method!r}")


def v_expand(L: PauliSum, dt: float, n: int, max_terms: int = 200_000) -> PauliSum:
    """sum_{k=0}^{n} (L dt)^k / k!."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = PauliSum.identity(L.n)
    power = PauliSum.identity(L.n)
    for k in range(1, n + 1):
        power = power.compose(L) * (dt / k)
        if len(power) > max_terms:
            raise ExpansionTooLargeError(
                f"V expansion reached {len(power)} terms at order {k}; use a smaller n_expansion")
        out = out + power
    return out


def a_ratio_purity(u_prev: np.ndarray, D: PauliSum, dt: float) -> float:
    """|a(t-dt)/a(t)| = (1 + 2 dt <u|D|u>)^(-1/2)."""
    u = np.asarray(u_prev, dtype=complex)
    u = u / np.linalg.norm(u)
    if not D:
        return 1.0
    val = np.vdot(u, D.apply(u)).real
    rad = 1.0 + 2.0 * dt * val
    if rad <= 0:
        raise StepTooLargeError("purity update is non-positive; reduce dt")
    return float(rad ** -0.5)


def a_from_trace(u: np.ndarray | SuperState, floor: float = 1e-10) -> complex:
    """Factor a that gives the represented operator unit trace."""
    if isinstance(u, SuperState):
        u = u.amplitudes
    u = np.asarray(u, dtype=complex)
    n = (u.size.bit_length() - 1) / 2
    c0 = u[0]
    if abs(c0) < floor:
        raise NearPureStateError(
            "identity component is below the floor; the purity-based factor is the preferred method here")
    return complex(1.0 / (2.0 ** (n / 2) * c0))


def vtc_fidelity(theta_new, theta_old, prog: AnsatzProgram, V: PauliSum, a_ratio: complex) -> float:
    u_new = apply(prog, _full(prog, theta_new)).amplitudes
    u_old = apply(prog, _full(prog, theta_old)).amplitudes
    f = a_ratio * np.vdot(u_new, V.apply(u_old))
    return float(abs(f) ** 2)


def _full(prog: AnsatzProgram, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.size == prog.n_total:
        return theta
    if theta.size == prog.n_params:
        full = prog.zero_params()
        full[: prog.n_params] = theta
        return full
    raise ValueError(f"expected {prog.n_params} or {prog.n_total} parameters")


@dataclass
class VtcRecord:
    t: float
    iterations: int
    cost: float
    cost_start: float
    a: complex
    step_norm: float
    converged: bool
    ratio_purity: float | None = None
    ratio_trace: float | None = None


def vtc_step(prog: AnsatzProgram, theta_prev, a_prev: complex, liouv: CompiledLiouvillian,
             problem: VtcProblem, t: float = 0.0, V: PauliSum | None = None):
    """One compression step from t to t + dt.  Returns (theta_next, a_next, VtcRecord)."""
    theta_prev = _full(prog, theta_prev)
    P = prog.n_params
    if V is None:
        V = v_expand(liouv.total, problem.dt, problem.n_expansion, problem.max_terms)
    u_prev = apply(prog, theta_prev).amplitudes
    target = V.apply(u_prev)

    ratio_p = a_ratio_purity(u_prev, liouv.dissipator, problem.dt) if liouv.has_dissipator else 1.0

    def unit_state(x):
        th = theta_prev.copy()
        th[:P] = x
        return apply(prog, th).amplitudes

    # The ratio is held fixed during the search: a state-dependent ratio (as the
    # trace method would give) lets the optimizer inflate |f| instead of matching
    # the state.  A constant ratio does not move the maximizer.
    ratio = ratio_p if problem.a_method != "none" else 1.0

    def cost(x):
        u = unit_state(x)
        f = ratio * np.vdot(u, target)
        return 1.0 - abs(f) ** 2

    h = problem.grad_step

    def grad(x):
        g = np.empty_like(x)
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            g[k] = (cost(x + e) - cost(x - e)) / (2 * h)
        return g

    x0 = theta_prev[:P].copy()
    c0 = cost(x0)
    bounds = [problem.bounds] * P if problem.bounds is not None else None
    res = scipy.optimize.minimize(cost, x0, jac=grad, method="SLSQP", bounds=bounds,
                                  options={"maxiter": problem.maxiter, "ftol": problem.ftol})
    x = res.x if res.fun <= c0 else x0
    c = min(res.fun, c0)
    converged = bool(res.success) or res.status == 8  # 8: positive directional derivative at optimum
    if not converged:
        warnings.warn(f"VTC optimizer stopped without convergence: {res.message}", RuntimeWarning)
    theta_next = theta_prev.copy()
    theta_next[:P] = x
    u_next = unit_state(x)
    if problem.a_method == "trace":
        a_next = a_from_trace(u_next)
    elif problem.a_method == "purity":
        a_next = a_prev / ratio_p
    else:
        a_next = a_prev
    ratio_t = None
    try:
        ratio_t = float(abs(a_from_trace(u_prev) / a_from_trace(u_next)))
    except NearPureStateError:
        pass
    rec = VtcRecord(t=t + problem.dt, iterations=int(res.nit), cost=float(c), cost_start=float(c0),
                    a=complex(a_next), step_norm=float(np.linalg.norm(x - x0)), converged=converged,
                    ratio_purity=ratio_p, ratio_trace=ratio_t)
    return theta_next, complex(a_next), rec


def taylor_remainder_bound(norm_l: float, dt: float, n: int) -> float:
    """(|L| dt)^(n+1)/(n+1)! * exp(|L| dt)."""
    x = norm_l * dt
    return x ** (n + 1) / math.factorial(n + 1) * math.exp(x)
