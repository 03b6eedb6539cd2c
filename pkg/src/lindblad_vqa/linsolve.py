"""Regularized solvers for the small, often ill-conditioned TDVA linear systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegularizationConfig:
    method: str = "tikhonov"      # tikhonov | tsvd | plain_lstsq
    lam: float | None = None      # fixed lambda; None selects it from the L-curve
    lam_min: float = 1e-8
    lam_max: float = 1.0
    n_grid: int = 25
    bound_factor: float = 10.0    # eta bound M = bound_factor * |x(lam_max)|
    min_curvature: float = 1e-2   # corners flatter than this are ignored
    tsvd_rank: int | None = None
    rcond: float = 1e-12
    relative_grid: bool = False   # scale the grid by the largest singular value of A

    def __post_init__(self):
        if self.method not in ("tikhonov", "tsvd", "plain_lstsq"):
            raise ValueError(f"unknown regularization method {self.method!r}")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")

    def grid(self, scale: float = 1.0) -> np.ndarray:
        if self.relative_grid and scale > 0:
            return scale * np.logspace(np.log10(self.lam_min), np.log10(self.lam_max), self.n_grid)
        return np.logspace(np.log10(self.lam_min), np.log10(self.lam_max), self.n_grid)


def _svd(A):
    return np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)


def tikhonov_solve(A, b, lam: float) -> np.ndarray:
    """x = sum_i s_i / (s_i^2 + lam^2) (u_i . b) v_i."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    U, s, Vt = _svd(A)
    beta = U.T @ np.asarray(b, dtype=float)
    denom = s ** 2 + lam ** 2
    safe = denom > 0
    coef = np.zeros_like(s)
    coef[safe] = s[safe] / denom[safe] * beta[safe]
    if lam == 0:
        # pseudoinverse: drop numerically zero singular values
        cut = s <= s.max(initial=0.0) * max(A.shape) * np.finfo(float).eps
        coef[cut] = 0.0
    return Vt.T @ coef


def tsvd_solve(A, b, k: int) -> np.ndarray:
    """Keep the k largest singular values."""
    U, s, Vt = _svd(A)
    if not 1 <= k <= s.size:
        raise ValueError(f"rank {k} out of range 1..{s.size}")
    beta = U.T @ np.asarray(b, dtype=float)
    coef = np.zeros_like(s)
    coef[:k] = beta[:k] / s[:k]
    return Vt.T @ coef


def lcurve_points(A, b, grid) -> tuple[np.ndarray, np.ndarray]:
    """Residual norms rho(lam) and solution norms eta(lam) on the grid."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    U, s, Vt = _svd(A)
    beta = U.T @ b
    b_perp2 = float(np.sum((b - U @ beta) ** 2))  # direct, avoids cancellation in b.b - beta.beta
    rho, eta = [], []
    for lam in grid:
        f = s ** 2 / (s ** 2 + lam ** 2) if lam > 0 else (s > 0).astype(float)
        coef = np.divide(f * beta, s, out=np.zeros_like(s), where=s > 0)
        eta.append(np.linalg.norm(coef))
        rho.append(np.sqrt(np.sum(((1 - f) * beta) ** 2) + b_perp2))
    return np.array(rho), np.array(eta)


def lcurve_curvature(rho, eta, grid) -> np.ndarray:
    """Signed curvature of (log rho, log eta) parameterized by log lambda.

    Positive values are counterclockwise turns, which is the orientation of
    the corner of an L traversed with increasing lambda.
    """
    tiny = np.finfo(float).tiny
    x = np.log(np.maximum(rho, tiny))
    y = np.log(np.maximum(eta, tiny))
    t = np.log(grid)
    if len(t) < 3:
        return np.zeros(len(t))
    dx, dy = np.gradient(x, t), np.gradient(y, t)
    ddx, ddy = np.gradient(dx, t), np.gradient(dy, t)
    den = (dx ** 2 + dy ** 2) ** 1.5
    return np.divide(dx * ddy - ddx * dy, den, out=np.zeros_like(den), where=den > 1e-300)


def lcurve_corners(kappa: np.ndarray, min_curvature: float) -> np.ndarray:
    """Indices of local maxima of the signed curvature above ``min_curvature``."""
    k = np.asarray(kappa)
    left = np.r_[-np.inf, k[:-1]]
    right = np.r_[k[1:], -np.inf]
    return np.flatnonzero((k > min_curvature) & (k >= left) & (k >= right))


def lcurve_select(A, b, grid, bound_factor: float = 10.0, min_curvature: float = 1e-2) -> float:
    """Lambda at the leftmost L-curve corner whose solution norm is below the bound.

    The bound is ``bound_factor`` times the solution norm at the largest
    lambda.  Without any corner under the bound, the leftmost (least
    regularized) point under the bound is returned.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    if grid.size == 1:
        return float(grid[0])
    rho, eta = lcurve_points(A, b, grid)
    bound = bound_factor * eta[-1] if eta[-1] > 0 else np.inf
    ok = eta <= bound * (1 + 1e-12)
    if not ok.any():
        return float(grid[-1])
    kappa = lcurve_curvature(rho, eta, grid)
    corners = [i for i in lcurve_corners(kappa, min_curvature) if ok[i]]
    if corners:
        return float(grid[min(corners)])
    return float(grid[int(np.argmax(ok))])


@dataclass
class SolveInfo:
    lam: float
    rank: int
    residual: float
    norm: float
    cond: float


def solve(A, b, cfg: RegularizationConfig) -> tuple[np.ndarray, SolveInfo]:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    smax = s.max(initial=0.0)
    rank = int(np.sum(s > cfg.rcond * max(smax, 1e-300)))
    cond = float(smax / s.min()) if s.size and s.min() > 0 else np.inf
    lam = 0.0
    if cfg.method == "tikhonov":
        lam = cfg.lam if cfg.lam is not None else lcurve_select(
            A, b, cfg.grid(smax), cfg.bound_factor, cfg.min_curvature)
        x = tikhonov_solve(A, b, lam)
    elif cfg.method == "tsvd":
        k = cfg.tsvd_rank if cfg.tsvd_rank is not None else max(rank, 1)
        x = tsvd_solve(A, b, min(k, s.size))
    else:
        x = np.linalg.lstsq(A, b, rcond=None)[0]
    info = SolveInfo(lam=float(lam), rank=rank, residual=float(np.linalg.norm(A @ x - b)),
                     norm=float(np.linalg.norm(x)), cond=cond)
    return x, info
