import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindblad_vqa.linsolve import (RegularizationConfig, lcurve_curvature, lcurve_points, lcurve_select,
                                   solve, tikhonov_solve, tsvd_solve)


def random_system(seed, n=6, rank=None):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    if rank is not None:
        U, s, Vt = np.linalg.svd(A)
        s[rank:] = 0
        A = (U * s) @ Vt
    return A, rng.normal(size=n)


def test_filter_factor_example():
    # [DERIVED] sigma/(sigma^2 + lam^2) with sigma=1, lam=0.1 -> 1/1.01
    x = tikhonov_solve(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([1.0, 0.0]), 0.1)
    assert np.allclose(x, [1 / 1.01, 0.0], atol=1e-15)


@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-6, 10))
def test_tikhonov_matches_normal_equations(seed, lam):
    A, b = random_system(seed)
    ref = np.linalg.solve(A.T @ A + lam ** 2 * np.eye(A.shape[1]), A.T @ b)
    x = tikhonov_solve(A, b, lam)
    assert np.linalg.norm(x - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))


def test_lambda_zero_is_pseudoinverse():
    A, b = random_system(1)
    assert np.allclose(tikhonov_solve(A, b, 0.0), np.linalg.solve(A, b), atol=1e-12)
    As, bs = random_system(2, rank=3)
    assert np.allclose(tikhonov_solve(As, bs, 0.0), np.linalg.pinv(As) @ bs, atol=1e-10)


def test_large_lambda_shrinks_to_zero():
    A, b = random_system(3)
    assert np.linalg.norm(tikhonov_solve(A, b, 1e8)) < 1e-6


@given(st.integers(0, 2 ** 31 - 1))
def test_lcurve_monotone(seed):
    A, b = random_system(seed, rank=4)
    grid = np.logspace(-8, 1, 30)
    rho, eta = lcurve_points(A, b, grid)
    assert np.all(np.diff(eta) <= 1e-12 * (1 + eta[:-1]))
    assert np.all(np.diff(rho) >= -1e-12 * (1 + rho[:-1]))


def test_lcurve_points_match_direct_solves():
    A, b = random_system(4, rank=5)
    grid = np.logspace(-4, 0, 5)
    rho, eta = lcurve_points(A, b, grid)
    for lam, r, e in zip(grid, rho, eta):
        x = tikhonov_solve(A, b, lam)
        assert abs(np.linalg.norm(A @ x - b) - r) < 1e-12
        assert abs(np.linalg.norm(x) - e) < 1e-12


def test_tsvd_full_rank_is_least_squares():
    A, b = random_system(5)
    assert np.allclose(tsvd_solve(A, b, 6), np.linalg.lstsq(A, b, rcond=None)[0], atol=1e-12)
    with pytest.raises(ValueError):
        tsvd_solve(A, b, 0)


def test_well_conditioned_selects_small_lambda():
    # [DERIVED] condition number 10: negligible regularization is chosen
    rng = np.random.default_rng(6)
    Q1, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    Q2, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    A = Q1 @ np.diag(np.linspace(10, 1, 5)) @ Q2.T
    b = rng.normal(size=5)
    lam = lcurve_select(A, b, RegularizationConfig().grid())
    assert lam <= 1e-6


def test_relative_grid_is_scale_free():
    A, b = random_system(8)
    cfg = RegularizationConfig(relative_grid=True)
    x1, i1 = solve(A, b, cfg)
    x2, i2 = solve(A * 1e-3, b * 1e-3, cfg)
    assert np.allclose(x1, x2, rtol=1e-8) and abs(i2.lam / i1.lam - 1e-3) < 1e-9


def test_noisy_ill_posed_selects_between_singular_values():
    # [DERIVED] singular values {1, 1e-8} with noise in b: the corner lies between them
    A = np.diag([1.0, 1e-8])
    b = np.array([1.0, 1e-3])
    lam = lcurve_select(A, b, np.logspace(-10, 0, 41), bound_factor=1e6)
    assert 1e-8 < lam < 1.0


def test_curvature_of_straight_line_is_zero():
    grid = np.logspace(-3, 0, 10)
    k = lcurve_curvature(grid, grid ** 2, grid)
    assert np.allclose(k, 0, atol=1e-10)


def test_solve_methods_and_info():
    A, b = random_system(7, rank=4)
    x, info = solve(A, b, RegularizationConfig(method="tsvd"))
    assert info.rank == 4 and np.allclose(x, np.linalg.pinv(A) @ b, atol=1e-10)
    x, info = solve(A, b, RegularizationConfig(lam=0.5))
    assert info.lam == 0.5 and np.allclose(x, tikhonov_solve(A, b, 0.5))
    x, info = solve(A, b, RegularizationConfig(method="plain_lstsq"))
    assert np.allclose(x, np.linalg.lstsq(A, b, rcond=None)[0])
    assert info.cond > 1e10


def test_config_validation():
    with pytest.raises(ValueError):
        RegularizationConfig(method="ridge")
    with pytest.raises(ValueError):
        RegularizationConfig(lam=-1.0)
