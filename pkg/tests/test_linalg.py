import numpy as np
import pytest

from hamwave import linalg
from hamwave.errors import FactorizationFailure, InvalidArgument, SingularShift

SHAPES = [(8, 8, 4), (30, 20, 10), (200, 150, 60)]


def _check_factors(A, B, F, tol=1e-10):
    n = A.shape[1]
    rec_a = F.U @ np.diag(F.c) @ F.H.T
    rec_b = F.V @ np.diag(F.s) @ F.H.T
    assert np.linalg.norm(rec_a - A) <= tol * np.linalg.norm(A)
    assert np.linalg.norm(rec_b - B) <= tol * max(np.linalg.norm(B), 1.0)
    assert np.allclose(F.c**2 + F.s**2, 1.0, atol=1e-14)
    assert np.all(F.c >= 0) and np.all(F.s >= 0)
    assert np.linalg.norm(F.U.T @ F.U - np.eye(n)) <= 1e-12 * n
    if np.linalg.norm(B):
        assert np.linalg.norm(F.V.T @ F.V - np.eye(n)) <= 1e-12 * n
    assert np.allclose(F.H_inv_T @ F.H.T, np.eye(n), atol=1e-9)


@pytest.mark.parametrize("trial", range(100))
def test_gsvd_reconstruction_on_random_pairs(trial):
    rng = np.random.default_rng(1000 + trial)
    m, p, n = SHAPES[trial % 3]
    A = rng.standard_normal((m, n))
    B = rng.standard_normal((p, n)) * 10.0 ** rng.uniform(-3, 3)
    _check_factors(A, B, linalg.gsvd(A, B))


def test_gsvd_graded_columns(rng):
    # strongly graded scaling gives both tiny and large generalized values
    A = rng.standard_normal((40, 12)) @ np.diag(np.logspace(-6, 0, 12))
    B = rng.standard_normal((50, 12)) @ np.diag(np.logspace(0, -6, 12))
    _check_factors(A, B, linalg.gsvd(A, B))


def test_gsvd_one_by_one():
    F = linalg.gsvd(np.eye(1), np.eye(1))
    assert F.c[0] == pytest.approx(1 / np.sqrt(2))
    assert F.s[0] == pytest.approx(1 / np.sqrt(2))
    assert abs(F.H[0, 0]) == pytest.approx(np.sqrt(2))
    assert abs(F.U[0, 0]) == pytest.approx(1.0)


def test_gsvd_zero_b(rng):
    A = rng.standard_normal((12, 6))
    F = linalg.gsvd(A, np.zeros((14, 6)))
    assert np.allclose(F.s, 0.0)
    assert np.allclose(F.c, 1.0)
    assert np.allclose(F.U @ F.H.T, A, atol=1e-12)


def test_gsvd_b_only_as_wide_as_a(rng):
    # square pieces skip the preliminary QR
    A, B = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
    _check_factors(A, B, linalg.gsvd(A, B))


def test_gsvd_rank_failure_reports_rank(rng):
    A = rng.standard_normal((10, 5))
    B = rng.standard_normal((10, 5))
    A[:, 4] = A[:, 0]
    B[:, 4] = B[:, 0]
    with pytest.raises(FactorizationFailure) as info:
        linalg.gsvd(A, B)
    assert info.value.rank == 4


def test_gsvd_shape_errors(rng):
    with pytest.raises(InvalidArgument):
        linalg.gsvd(rng.standard_normal((3, 5)), rng.standard_normal((8, 5)))
    with pytest.raises(InvalidArgument):
        linalg.gsvd(rng.standard_normal((8, 5)), rng.standard_normal((8, 4)))


def test_solve_ht_matches_inverse(rng):
    F = linalg.gsvd(rng.standard_normal((30, 10)), rng.standard_normal((20, 10)))
    z = rng.standard_normal(10)
    x = F.solve_Ht(z)
    assert np.allclose(F.H.T @ x, z, atol=1e-12)
    assert np.allclose(x, F.H_inv_T @ z, atol=1e-10)


@pytest.fixture
def instance(rng):
    A = rng.standard_normal((15, 6))
    B = rng.standard_normal((18, 6))
    b = rng.standard_normal(15)
    d = rng.standard_normal(18)
    F = linalg.gsvd(A, B)
    return A, B, b, d, F, linalg.make_cache(F, b, d)


def test_diag_solve_zero_multiplier_is_least_squares(instance):
    A, B, b, d, F, cache = instance
    _, eta = linalg.diag_solve(F, cache, 0.0)
    ref = np.linalg.solve(A.T @ A, A.T @ b)
    assert np.linalg.norm(eta - ref) <= 1e-9 * np.linalg.norm(ref)
    ref_qr = np.linalg.lstsq(A, b, rcond=None)[0]
    assert np.linalg.norm(eta - ref_qr) <= 1e-9 * np.linalg.norm(ref_qr)


@pytest.mark.parametrize("lam", [0.3, 2.0, 50.0])
def test_diag_solve_positive_multiplier_solves_normal_equations(instance, lam):
    A, B, b, d, F, cache = instance
    _, eta = linalg.diag_solve(F, cache, lam)
    ref = np.linalg.solve(A.T @ A + lam * B.T @ B, A.T @ b + lam * B.T @ d)
    assert np.linalg.norm(eta - ref) <= 1e-9 * np.linalg.norm(ref)


def test_diag_solve_large_multiplier_fits_d(instance):
    A, B, b, d, F, cache = instance
    zeta, _ = linalg.diag_solve(F, cache, 1e12)
    assert np.allclose(F.s * zeta, cache.Vtd, atol=1e-8)


def test_diag_solve_zero_data(instance):
    A, B, b, d, F, _ = instance
    cache = linalg.make_cache(F, np.zeros(15), np.zeros(18))
    zeta, eta = linalg.diag_solve(F, cache, 1.7)
    assert np.all(eta == 0) and np.all(zeta == 0)


def test_diag_solve_singular_shift_names_index(instance):
    A, B, b, d, F, cache = instance
    i = 2
    lam = -F.c[i] ** 2 / F.s[i] ** 2
    with pytest.raises(SingularShift) as info:
        linalg.diag_solve(F, cache, lam)
    assert info.value.index == i


@pytest.mark.parametrize("lam", [0.0, 0.5, 4.0])
def test_constraint_residual_matches_dense_evaluation(instance, lam):
    A, B, b, d, F, cache = instance
    zeta, eta = linalg.diag_solve(F, cache, lam)
    nf = 0.37
    direct = float(np.sum((B @ eta - d) ** 2)) + nf
    assert linalg.constraint_residual(F, cache, zeta, nf) == pytest.approx(direct, rel=1e-10)


def test_constraint_residual_trivial_cases(instance, rng):
    A, B, b, d, F, _ = instance
    cache = linalg.make_cache(F, b, np.zeros(18))
    assert linalg.constraint_residual(F, cache, np.zeros(6), 0.0) == 0.0
    Fz = linalg.gsvd(A, np.zeros((18, 6)))
    cz = linalg.make_cache(Fz, b, d)
    for lam in (0.0, 3.0):
        zeta, _ = linalg.diag_solve(Fz, cz, lam)
        assert linalg.constraint_residual(Fz, cz, zeta, 0.5) == pytest.approx(d @ d + 0.5, rel=1e-12)
        assert linalg.constraint_derivative(Fz, cz, lam, zeta) == 0.0


@pytest.mark.parametrize("lam", [0.0, 0.2, 1.0, 7.5])
def test_constraint_derivative_matches_finite_differences(instance, lam):
    A, B, b, d, F, cache = instance

    def value(x):
        z, _ = linalg.diag_solve(F, cache, x)
        return linalg.constraint_residual(F, cache, z, 0.0)

    zeta, _ = linalg.diag_solve(F, cache, lam)
    h = 1e-6 * max(1.0, abs(lam))
    fd = (value(lam + h) - value(lam - h)) / (2 * h)
    assert linalg.constraint_derivative(F, cache, lam, zeta) == pytest.approx(fd, rel=1e-6)


def test_qr_prefactor(rng):
    A = rng.standard_normal((50, 20))
    Q, R = linalg.qr_prefactor(A)
    assert np.linalg.norm(A - Q @ R) <= 1e-10 * np.linalg.norm(A)
    assert np.allclose(Q.T @ Q, np.eye(20), atol=1e-12)
    Qo, _ = np.linalg.qr(rng.standard_normal((9, 4)))
    _, Ro = linalg.qr_prefactor(Qo)
    assert np.allclose(np.abs(Ro), np.eye(4), atol=1e-12)
    A[:, 3] = A[:, 1]
    with pytest.raises(FactorizationFailure):
        linalg.qr_prefactor(A)
    with pytest.raises(InvalidArgument):
        linalg.qr_prefactor(rng.standard_normal((3, 5)))
