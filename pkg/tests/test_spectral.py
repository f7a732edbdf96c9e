import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funcindex.errors import InvalidArgument
from funcindex.functions import (
    COSINE,
    HAAR,
    SINE_HALF_INTEGER,
    BasisFamily,
    basis_values,
    make_grid,
)
from funcindex.kernels import Bernoulli4Kernel, SpectralKernel, power_law_kernel
from funcindex.simulate import (
    CovarianceModel,
    beta_star_coefficients,
    brownian_covariance,
    power_law_covariance,
)
from funcindex.spectral import (
    OperatorPair,
    bias_lambda,
    build_operator_pair,
    commutative_range_exponent,
    cross_coefficients,
    decay_slope,
    diagnostics,
    effective_dimension,
    effective_dimension_tail,
    lambda_eigenvalues,
    lambda_matrix,
    lambda_schedule,
    rate_exponent,
    sum_bound_lemma,
    sup_bound_lemma,
    sym_power,
    theta_diagnostics,
    theta_matrix,
    theta_mi_fourier,
    xi_norm,
)

SHIFTED = BasisFamily("fourier-shifted", 1.0, -0.5)


@pytest.fixture(scope="module")
def commutative():
    k = power_law_kernel(4.0, 200)
    cov = power_law_covariance(2.0, 200)
    return k, cov, build_operator_pair(k, cov)


def scalar_pair(a, b, theta=1.0):
    T = np.diag(np.atleast_1d(a).astype(float))
    C = np.atleast_2d(b * theta**2).astype(float)
    return OperatorPair(T, C, COSINE)


class TestOperatorPair:
    def test_commutative_diagonal(self, commutative):
        _, cov, pair = commutative
        assert pair.commutative
        np.testing.assert_array_equal(pair.C_mat, np.diag(cov.eigenvalues))
        assert pair.commutator_norm() == 0.0

    def test_scalar_lambda(self):
        k = SpectralKernel(COSINE, [1.0])
        pair = scalar_pair(1.0, 1.0, 0.8)
        np.testing.assert_allclose(lambda_matrix(pair), [[0.64]])
        assert k.M == 1

    def test_too_large(self):
        with pytest.raises(InvalidArgument):
            build_operator_pair(power_law_kernel(4, 20), power_law_covariance(2, 10), 15)

    def test_cross_basis_symmetric_psd(self):
        pair = build_operator_pair(power_law_kernel(4, 40), brownian_covariance(200))
        assert not pair.commutative
        assert np.abs(pair.C_mat - pair.C_mat.T).max() <= 1e-12
        assert np.linalg.eigvalsh(pair.C_mat).min() >= -1e-10
        assert pair.commutator_norm() > 0

    def test_fourier_shifted_matches_quadrature(self):
        cov = power_law_covariance(2.0, 40, SHIFTED)
        k = power_law_kernel(3.0, 30)
        closed = build_operator_pair(k, cov, method="closed").C_mat
        # independent oracle: trapezoid inner products on a fine grid
        g = make_grid(2**15 + 1)
        psi = basis_values(SHIFTED, np.arange(1, 41), g.points)
        phi = basis_values(COSINE, np.arange(1, 31), g.points)
        theta = (psi * g.weights) @ phi.T
        oracle = theta.T @ (cov.eigenvalues[:, None] * theta)
        np.testing.assert_allclose(closed, oracle, atol=1e-6)


class TestCrossCoefficients:
    @pytest.mark.parametrize("psi,phi", [
        (SINE_HALF_INTEGER, COSINE), (COSINE, SINE_HALF_INTEGER),
        (SHIFTED, COSINE), (SINE_HALF_INTEGER, SHIFTED),
        (HAAR, COSINE), (HAAR, SINE_HALF_INTEGER), (COSINE, HAAR),
        (BasisFamily("fourier-shifted", 2.0, 0.0), SINE_HALF_INTEGER),
    ])
    def test_closed_vs_quadrature(self, psi, phi):
        closed = cross_coefficients(psi, phi, 8, 8)
        quad = cross_coefficients(psi, phi, 8, 8, method="quadrature", grid=make_grid(2**16 + 1))
        np.testing.assert_allclose(closed, quad, atol=1e-4)

    def test_same_family(self):
        np.testing.assert_array_equal(cross_coefficients(HAAR, HAAR, 4, 4), np.eye(4))

    def test_unknown_method(self):
        with pytest.raises(InvalidArgument):
            cross_coefficients(COSINE, HAAR, 2, 2, method="spline")


class TestThetaFourier:
    def test_half(self):
        assert theta_mi_fourier(0.5, 1) == pytest.approx(2 / (3 * np.pi), abs=1e-12)
        assert theta_mi_fourier(0.5, 1) == pytest.approx(0.21221, abs=1e-5)

    def test_integer_rejected(self):
        with pytest.raises(InvalidArgument):
            theta_mi_fourier(3.0, 2)

    def test_random_against_quadrature(self):
        rng = np.random.default_rng(4)
        g = make_grid(2**15 + 1)
        for _ in range(100):
            omega = rng.uniform(0.05, 20.0)
            if abs(omega - round(omega)) < 1e-3:
                continue
            i = int(rng.integers(1, 25))
            quad = np.dot(g.weights, np.cos(omega * np.pi * g.points) * np.cos(i * np.pi * g.points))
            assert theta_mi_fourier(omega, i) == pytest.approx(quad, abs=1e-8)
            assert abs(theta_mi_fourier(omega, i)) > 0


class TestLambda:
    def test_commutative_product(self, commutative):
        _, _, pair = commutative
        L = lambda_matrix(pair)
        np.testing.assert_allclose(np.diag(L), np.arange(1, 201) ** -6.0, rtol=1e-12)

    def test_zero_covariance(self):
        pair = OperatorPair(np.eye(3), np.zeros((3, 3)), COSINE)
        assert not np.any(lambda_matrix(pair))

    def test_brownian_bernoulli_decay(self):
        pair = build_operator_pair(Bernoulli4Kernel(), brownian_covariance(400), 100)
        slope = decay_slope(lambda_eigenvalues(pair), 2, 15)
        assert -6.5 <= slope <= -5.5

    def test_permutation_invariance(self):
        k = power_law_kernel(3.0, 30)
        cov = brownian_covariance(60)
        perm = np.random.default_rng(1).permutation(60)
        # same eigenpairs listed in a different order: build C directly
        theta = cross_coefficients(cov.basis, k.basis, 60, 30)
        C1 = theta.T @ (cov.eigenvalues[:, None] * theta)
        C2 = theta[perm].T @ (cov.eigenvalues[perm, None] * theta[perm])
        T = np.diag(k.eigenvalues)
        e1 = lambda_eigenvalues(OperatorPair(T, 0.5 * (C1 + C1.T), COSINE))
        e2 = lambda_eigenvalues(OperatorPair(T, 0.5 * (C2 + C2.T), COSINE))
        np.testing.assert_allclose(e1, e2, rtol=1e-9, atol=1e-18)

    def test_sym_power(self):
        A = np.array([[2.0, 1.0], [1.0, 2.0]])
        root = sym_power(A, 0.5)
        np.testing.assert_allclose(root @ root, A, atol=1e-12)
        np.testing.assert_array_equal(sym_power(np.diag([4.0, 0.0]), 0.5), np.diag([2.0, 0.0]))
        np.testing.assert_array_equal(sym_power(np.diag([4.0, -1e-12]), 0.5),
                                      np.diag([2.0, 0.0]))


class TestEffectiveDimension:
    def test_examples(self):
        assert effective_dimension([1.0], 1.0) == pytest.approx(0.5)
        assert effective_dimension([1.0, 0.5], 0.5) == pytest.approx(7 / 6)
        assert effective_dimension(np.diag([1.0, 0.5]), 0.5) == pytest.approx(7 / 6)

    def test_limits(self):
        z = np.array([1.0, 0.1, 0.01, 0.0])
        assert effective_dimension(z, 1e12) < 1e-9
        assert effective_dimension(z, 1e-14) == pytest.approx(3.0, abs=1e-9)

    def test_positive_lambda(self):
        with pytest.raises(InvalidArgument):
            effective_dimension([1.0], 0.0)

    def test_tail_estimate(self):
        b, M, lam = 6.0, 100, 1e-8
        i = np.arange(M + 1, 10**6)
        exact = np.sum(i**-b / (i**-b + lam))
        assert exact <= effective_dimension_tail(b, M, lam)


class TestTheta:
    def test_scalar(self):
        d = theta_diagnostics(scalar_pair(1.0, 1.0), 0.5, 1.0)
        assert d.norm == pytest.approx(0.25)
        assert d.d_lambda == pytest.approx(1.0)

    def test_trace_termwise(self, commutative):
        _, _, pair = commutative
        lam = 0.01
        d = theta_diagnostics(pair, 0.5, lam)
        i = np.arange(1, 201, dtype=float)
        mu, xi = i**-4, i**-2
        oracle = np.sum(mu * xi / (mu * xi + lam) ** 2)
        assert d.trace == pytest.approx(oracle, rel=0.05)
        assert d.d_lambda >= 1

    def test_alpha_range(self, commutative):
        with pytest.raises(InvalidArgument):
            theta_diagnostics(commutative[2], 0.7, 0.1)

    def test_cross_basis_d_at_least_one(self):
        pair = build_operator_pair(power_law_kernel(4, 40), brownian_covariance(100))
        for lam in (1e-2, 1e-4, 1e-6):
            d = theta_diagnostics(pair, 0.25, lam)
            assert d.d_lambda >= 1 - 1e-12
            Th = theta_matrix(pair, 0.25, lam)
            assert np.linalg.eigvalsh(Th).min() > -1e-10 * d.norm


class TestBias:
    def test_single_mode(self):
        assert bias_lambda(scalar_pair(1.0, 1.0), [1.0], 1.0) == pytest.approx(0.5)

    def test_vanishes(self):
        k = power_law_kernel(2.0, 10)
        pair = build_operator_pair(k, power_law_covariance(1.5, 10))
        beta = beta_star_coefficients(k, power_law_covariance(1.5, 10), alpha=0.5)
        assert bias_lambda(pair, beta, 1e-10) < 1e-6

    def test_power_law_slope(self, commutative):
        k, cov, pair = commutative
        beta = beta_star_coefficients(k, cov, alpha=0.5)
        lams = np.logspace(-5, -2, 13)
        slope = np.polyfit(np.log(lams), np.log([bias_lambda(pair, beta, l) for l in lams]), 1)[0]
        assert slope == pytest.approx(1 / 3, abs=0.05)

    def test_too_many_coefficients(self):
        with pytest.raises(InvalidArgument):
            bias_lambda(scalar_pair(1.0, 1.0), [1.0, 2.0], 1.0)


class TestXi:
    def test_scalar(self):
        assert xi_norm(scalar_pair(1.0, 1.0), 1.0) == pytest.approx(0.25)

    def test_resolvent_bound(self):
        pair = build_operator_pair(power_law_kernel(4, 30), brownian_covariance(100))
        for lam in (1e-1, 1e-3):
            assert xi_norm(pair, lam) <= np.linalg.norm(pair.T_mat, 2) ** 2 / lam**2

    def test_termwise(self, commutative):
        _, _, pair = commutative
        lam = 1e-3
        i = np.arange(1, 201, dtype=float)
        oracle = np.max(i**-8 / (i**-6 + lam) ** 2)
        assert xi_norm(pair, lam) == pytest.approx(oracle, rel=0.05)


def test_monotone_in_lambda_commutative(commutative):
    k, cov, pair = commutative
    beta = beta_star_coefficients(k, cov, alpha=0.5)
    lams = np.logspace(-6, 0, 13)
    reports = diagnostics(pair, 0.5, beta, lams)
    for field in ("N_lambda", "theta_trace", "theta_norm", "xi_norm"):
        vals = [getattr(r, field) for r in reports]
        assert np.all(np.diff(vals) <= 1e-12 * max(vals)), field
    bias = [r.bias for r in reports]
    assert np.all(np.diff(bias) >= 0)
    for r in reports:
        assert r.N_lambda <= np.trace(lambda_matrix(pair)) / r.lam
        row = r.as_row()
        assert all(np.isfinite(v) and v >= 0 for v in row.values())
    assert reports[0].zeta_slope == pytest.approx(-6.0)


class TestSchedules:
    def test_t2(self):
        lam = lambda_schedule("T2", 1024, t=4, c=2, alpha=0.5)
        assert lam == pytest.approx(1024 ** (-6 / 7))
        assert lam == pytest.approx(2.63e-3, rel=1e-2)
        assert rate_exponent("T2", t=4, c=2, alpha=0.5) == pytest.approx(4 / 14)

    def test_t7(self):
        assert lambda_schedule("T7", 64, b=6) == pytest.approx(0.0283, rel=1e-2)
        assert rate_exponent("T7", b=6) == pytest.approx(6 / 7)

    def test_t4_boundary(self):
        assert rate_exponent("T4", b=6, t=4, nu=1 / 6) == pytest.approx(2.5 / 12)
        with pytest.raises(InvalidArgument, match="nu"):
            rate_exponent("T4", b=6, t=4, nu=0.2)

    def test_t3_and_t6(self):
        assert rate_exponent("T3", b=6, nu=1.0) == pytest.approx(6 / 19)
        assert rate_exponent("T6", t=4, c=2, alpha=0.5) == pytest.approx(6 / 7)
        assert lambda_schedule("T3", 100, 2.0, b=6, nu=0.5) == pytest.approx(2 * 100 ** (-6 / 13))

    @pytest.mark.parametrize("theorem,params,name", [
        ("T3", {"b": 6, "nu": 0}, "nu"),
        ("T2", {"t": 1, "c": 2, "alpha": 0.5}, "t > 1"),
        ("T2", {"t": 4, "c": 0.5, "alpha": 0.5}, "c > 1"),
        ("T6", {"t": 4, "c": 2, "alpha": 0.6}, "alpha"),
        ("T7", {"b": 1}, "b > 1"),
        ("T2", {"t": 4, "c": 2}, "missing"),
        ("T9", {}, "unknown"),
    ])
    def test_validation(self, theorem, params, name):
        with pytest.raises(InvalidArgument, match=name):
            rate_exponent(theorem, **params)

    def test_bad_n(self):
        with pytest.raises(InvalidArgument):
            lambda_schedule("T7", 0, b=6)

    @settings(max_examples=200)
    @given(st.floats(1.01, 10), st.floats(1.01, 10), st.floats(0.01, 1.0))
    def test_range_condition_beats_plain_commutative(self, t, c, nu):
        # With beta* in R(T^1/2 Lambda^nu) in the commutative setting, the
        # estimation exponent exceeds the general-operator rate for b = t + c.
        general = rate_exponent("T3", b=t + c, nu=nu)
        improved = commutative_range_exponent(t, c, nu)
        assert general < improved
        assert rate_exponent("T2", t=t, c=c, alpha=0.5) <= improved + 1e-12


class TestLemmas:
    @pytest.mark.parametrize("alpha,beta", [(2, 4), (1.5, 3), (4, 6)])
    @pytest.mark.parametrize("lam", [1e-1, 1e-3, 1e-5])
    def test_sup_bound(self, alpha, beta, lam):
        lhs, rhs = sup_bound_lemma(alpha, beta, lam, imax=10**5)
        assert lhs <= rhs

    def test_sum_bound_domain(self):
        with pytest.raises(InvalidArgument):
            sum_bound_lemma(2, 4, 0.3, 0.1)
