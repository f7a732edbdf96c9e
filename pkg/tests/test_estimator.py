import numpy as np
import pytest

from funcindex.errors import DegenerateInput, IncompatibleGrids, InvalidArgument
from funcindex.estimator import (
    direction_error,
    estimation_error,
    fit,
    gram_matrix,
    predict,
    prediction_error,
    reconstruct,
    select_lambda,
    stein_check,
)
from funcindex.functions import (
    COSINE,
    SINE_HALF_INTEGER,
    GridFunction,
    basis_eval,
    basis_matrix,
    l2_norm,
    make_grid,
)
from funcindex.kernels import Bernoulli4Kernel, apply_T, kernel_matrix, power_law_kernel
from funcindex.simulate import (
    CurveSet,
    Dataset,
    LinkSpec,
    brownian_covariance,
    make_beta_star,
    power_law_covariance,
    simulate_dataset,
)


def ridge_oracle(dataset, kernel, lam):
    """Direct M-dimensional ridge in the kernel basis."""
    grid = dataset.grid
    phi = basis_matrix(kernel.basis, kernel.M, grid)
    Z = (dataset.curves.values * grid.weights) @ phi.T
    n = dataset.n
    A = Z.T @ Z / n + lam * np.diag(1.0 / kernel.eigenvalues)
    c = np.linalg.solve(A, Z.T @ dataset.responses / n)
    return GridFunction(grid, c @ phi)


@pytest.fixture
def small_data(grid512):
    cov = power_law_covariance(2.0, 30)
    k = power_law_kernel(3.0, 40)
    beta = make_beta_star(k, cov, grid512, alpha=0.5)
    ds = simulate_dataset(cov, beta, LinkSpec("identity"), 0.3, 60, grid512, 8)
    return ds, k, beta


class TestGram:
    def test_repeated_mode(self, grid512):
        k = power_law_kernel(2.0, 10)
        phi = basis_eval(COSINE, 1, grid512)
        K = gram_matrix(CurveSet.from_functions([phi, phi]), k)
        np.testing.assert_allclose(K, np.full((2, 2), k.eigenvalues[0]), atol=1e-6)

    def test_zero_curve(self, grid512):
        K = gram_matrix(CurveSet.from_functions([GridFunction.zeros(grid512)]),
                        power_law_kernel(2.0, 10))
        assert K.tolist() == [[0.0]]

    def test_spectral_oracle(self, small_data):
        ds, k, _ = small_data
        K = gram_matrix(ds.curves, k)
        phi = basis_matrix(k.basis, k.M, ds.grid)
        Z = (ds.curves.values * ds.grid.weights) @ phi.T
        np.testing.assert_allclose(K, (Z * k.eigenvalues) @ Z.T, atol=1e-6)
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() > -1e-8 * np.abs(K).max()

    def test_grid_mismatch(self, small_data):
        ds, k, _ = small_data
        with pytest.raises(IncompatibleGrids):
            gram_matrix(ds.curves, k, grid=make_grid(100))


class TestFit:
    def test_scalar_system(self, grid512):
        k = power_law_kernel(2.0, 10)
        x = basis_eval(COSINE, 2, grid512) * 1.5
        ds = Dataset(CurveSet.from_functions([x]), np.array([0.8]))
        lam = 0.1
        res = fit(ds, k, lam)
        K11 = gram_matrix(ds.curves, k)[0, 0]
        assert res.alpha[0] == pytest.approx(0.8 / (K11 + lam), rel=1e-12)

    def test_zero_response(self, small_data):
        ds, k, _ = small_data
        zero = Dataset(ds.curves, np.zeros(ds.n))
        res = fit(zero, k, 0.01)
        assert not np.any(res.alpha) and not np.any(res.beta_hat.values)

    @pytest.mark.parametrize("lam", [0.0, -1.0])
    def test_bad_lambda(self, small_data, lam):
        ds, k, _ = small_data
        with pytest.raises(InvalidArgument):
            fit(ds, k, lam)

    def test_shrinks_with_lambda(self, small_data):
        ds, k, _ = small_data
        kmat = kernel_matrix(k, ds.grid)
        K = gram_matrix(ds.curves, k, kmat=kmat)
        tx_max = max(l2_norm(apply_T(k, x, kmat)) for x in ds.curves)
        norms, rkhs = [], []
        for lam in (1.0, 10.0, 100.0):
            res = fit(ds, k, lam, kmat=kmat)
            norms.append(l2_norm(res.beta_hat))
            rkhs.append(res.alpha @ K @ res.alpha)
            # ||alpha|| <= ||y|| / (n lam) and ||beta_hat|| <= ||alpha||_1 max ||T X_i||
            bound = np.sqrt(ds.n) * np.linalg.norm(ds.responses) * tx_max / (ds.n * lam)
            assert norms[-1] <= bound
        assert norms[0] > norms[1] > norms[2]
        assert rkhs[0] >= rkhs[1] >= rkhs[2]

    def test_matches_oracle(self, small_data):
        ds, k, _ = small_data
        for lam in (1e-5, 1e-3, 1e-1):
            res = fit(ds, k, lam)
            ref = ridge_oracle(ds, k, lam)
            assert estimation_error(res.beta_hat, ref) / l2_norm(ref) < 1e-6

    def test_reconstruction_identity(self, small_data):
        ds, k, _ = small_data
        res = fit(ds, k, 1e-3)
        again = reconstruct(ds.curves, k, res.alpha)
        np.testing.assert_allclose(again.values, res.beta_hat.values, atol=1e-12)

    def test_residual_and_summary(self, small_data):
        ds, k, _ = small_data
        res = fit(ds, k, 1e-4)
        assert res.residual <= 1e-8 * np.linalg.norm(ds.responses)
        s = res.summary()
        assert s["solver"] == "cholesky" and s["n"] == ds.n and s["gram_cond"] >= 1

    def test_kernel_trick(self, small_data):
        ds, k, _ = small_data
        res = fit(ds, k, 1e-3)
        K = gram_matrix(ds.curves, k)
        preds = np.array([predict(res, x) for x in ds.curves])
        np.testing.assert_allclose(preds, K @ res.alpha, atol=1e-8)

    def test_permutation_equivariance(self, small_data):
        ds, k, _ = small_data
        perm = np.random.default_rng(0).permutation(ds.n)
        shuffled = Dataset(CurveSet(ds.grid, ds.curves.values[perm]), ds.responses[perm])
        a = fit(ds, k, 1e-3).beta_hat
        b = fit(shuffled, k, 1e-3).beta_hat
        np.testing.assert_allclose(a.values, b.values, atol=1e-10)

    def test_bernoulli_kernel(self, grid512):
        cov = brownian_covariance(50)
        beta = basis_eval(COSINE, 2, grid512)
        ds = simulate_dataset(cov, beta, LinkSpec("identity"), 0.1, 80, grid512, 1)
        kmat = kernel_matrix(Bernoulli4Kernel(), grid512)
        res = fit(ds, Bernoulli4Kernel(), 1e-6, kmat=kmat)
        assert np.isfinite(res.beta_hat.values).all()


class TestPredict:
    def test_examples(self, grid512):
        phi = basis_eval(COSINE, 1, grid512)
        ds = Dataset(CurveSet.from_functions([phi]), np.array([1.0]))
        res = fit(ds, power_law_kernel(2.0, 5), 1.0)
        assert predict(res, GridFunction.zeros(grid512)) == 0.0
        fake = type(res)(res.alpha, res.lam, phi * 3, res.gram_cond, res.residual)
        assert predict(fake, phi) == pytest.approx(3.0, abs=1e-6)


class TestMetrics:
    def test_estimation(self, grid512):
        b = basis_eval(COSINE, 1, grid512)
        assert estimation_error(b, b) == 0
        assert estimation_error(GridFunction.zeros(grid512), b) == pytest.approx(1, abs=1e-6)
        pert = b + basis_eval(COSINE, 2, grid512) * 0.1
        assert estimation_error(pert, b) == pytest.approx(0.1, abs=1e-6)

    def test_direction(self, grid512):
        b = basis_eval(COSINE, 1, grid512)
        assert direction_error(b * 2, b) == pytest.approx(0, abs=1e-12)
        assert direction_error(-b, b) == pytest.approx(0, abs=1e-12)
        assert direction_error(basis_eval(COSINE, 3, grid512), b) == pytest.approx(np.sqrt(2),
                                                                                   abs=1e-6)
        with pytest.raises(DegenerateInput):
            direction_error(GridFunction.zeros(grid512), b)

    def test_prediction(self, grid512):
        cov = brownian_covariance(20)
        b = basis_eval(SINE_HALF_INTEGER, 3, grid512)
        assert prediction_error(b, b, cov) == 0
        psi1 = basis_eval(SINE_HALF_INTEGER, 1, grid512)
        err = prediction_error(b + psi1, b, cov)
        assert err == pytest.approx(2 / np.pi, rel=1e-5)
        blind = basis_eval(SINE_HALF_INTEGER, 40, grid512)
        assert prediction_error(b + blind, b, cov) == pytest.approx(0, abs=1e-6)


class TestStein:
    def test_identity_noiseless(self):
        g = make_grid(128)
        cov = power_law_covariance(2.0, 50)
        beta = make_beta_star(power_law_kernel(4, 50), cov, g, alpha=0.5)
        ds = simulate_dataset(cov, beta, LinkSpec("identity"), 0.0, 100_000, g, 3)
        res = stein_check(ds, beta, cov)
        assert res.cosine_similarity > 0.99
        assert res.ratio_estimate == pytest.approx(1.0, rel=0.05)

    def test_zero_beta(self, grid512):
        cov = power_law_covariance(2.0, 10)
        zero = GridFunction.zeros(grid512)
        ds = simulate_dataset(cov, zero, LinkSpec("identity"), 0.1, 20, grid512, 0)
        with pytest.raises(DegenerateInput):
            stein_check(ds, zero, cov)


def test_select_lambda(small_data):
    ds, k, _ = small_data
    grid = [1e-6, 1e-4, 1e-2, 1.0, 100.0]
    best, scores = select_lambda(ds, k, grid, seed=1)
    assert best in grid and set(scores) == set(grid)
    assert scores[best] <= scores[100.0]
    with pytest.raises(InvalidArgument):
        select_lambda(ds, k, grid, holdout=0.0)
