import numpy as np
import pytest

from read_dro import (
    Dataset,
    NondifferentiableError,
    Representation,
    TuneConfig,
    fit_erm,
    grad_v_n,
    kappa_init,
    lambda_from_ab,
    lambda_objective,
    phi,
    psi_matrix,
    tune_lambda,
    v_n,
)

from oracles import central_difference_gradient


def linear_data(rng, n, d, beta=None, sigma=1.0):
    X = rng.standard_normal((n, d))
    beta = rng.standard_normal(d) if beta is None else beta
    y = X @ beta + sigma * rng.standard_normal(n)
    return Dataset(X, y), beta


class TestKappaInit:
    def test_orthonormal_theta_projects(self):
        rng = np.random.default_rng(0)
        Theta, _ = np.linalg.qr(rng.standard_normal((6, 3)))
        beta = rng.standard_normal(6)
        np.testing.assert_allclose(
            kappa_init(beta, Theta, mu=0.5, nu=0.0), Theta.T @ beta, atol=1e-10
        )

    def test_large_l1_kills_all_coordinates(self):
        rng = np.random.default_rng(1)
        Theta = rng.standard_normal((5, 3))
        beta = rng.standard_normal(5)
        nu = 4.0 * np.max(np.abs(Theta.T @ beta))
        k = kappa_init(beta, Theta, mu=0.0, nu=nu)
        np.testing.assert_array_equal(k, np.zeros(3))

    def test_ridge_closed_form(self):
        rng = np.random.default_rng(2)
        Theta = rng.standard_normal((7, 4))
        beta = rng.standard_normal(7)
        nu = 0.3
        expected = np.linalg.solve(Theta.T @ Theta + nu * np.eye(4), Theta.T @ beta)
        np.testing.assert_allclose(
            kappa_init(beta, Theta, mu=1.0, nu=nu), expected, atol=1e-8
        )

    def test_minimum_norm_for_rank_deficient_theta(self):
        rng = np.random.default_rng(3)
        col = rng.standard_normal((5, 1))
        Theta = np.hstack([col, col])  # rank 1
        beta = rng.standard_normal(5)
        k = kappa_init(beta, Theta, mu=1.0, nu=0.0)
        # minimum-norm solution splits the coefficient evenly
        assert k[0] == pytest.approx(k[1], rel=1e-10)

    def test_elastic_net_stationarity_conditions(self):
        rng = np.random.default_rng(4)
        Theta = rng.standard_normal((8, 4))
        beta = rng.standard_normal(8)
        nu, mu = 0.8, 0.25
        k = kappa_init(beta, Theta, mu=mu, nu=nu)
        # KKT: |2 Theta_m'(beta - Theta k) - 2 nu mu k_m| <= nu (1 - mu) at zeros,
        # equality with sign at nonzeros
        grad_smooth = -2.0 * Theta.T @ (beta - Theta @ k) + 2.0 * nu * mu * k
        thr = nu * (1.0 - mu)
        for m in range(4):
            if k[m] == 0.0:
                assert abs(grad_smooth[m]) <= thr + 1e-8
            else:
                assert grad_smooth[m] + np.sign(k[m]) * thr == pytest.approx(0.0, abs=1e-8)


class TestSensitivity:
    def test_zero_phi_and_zero_residual_give_zero(self):
        rng = np.random.default_rng(5)
        Theta = rng.standard_normal((4, 2))
        rep = Representation(Theta, np.full(2, np.inf))
        beta_in_span = Theta @ rng.standard_normal(2)
        data, _ = linear_data(rng, 30, 4)
        assert v_n(data, rep, beta_in_span) == pytest.approx(0.0, abs=1e-7)
        X = rng.standard_normal((20, 4))
        beta = rng.standard_normal(4)
        noiseless = Dataset(X, X @ beta)
        assert v_n(noiseless, Representation.empty(4), beta) == 0.0

    def test_matches_definitional_sample_average(self):
        rng = np.random.default_rng(6)
        data, _ = linear_data(rng, 25, 3)
        Theta = rng.standard_normal((3, 2))
        rep = Representation(Theta, np.array([2.0, 0.5]))
        beta = rng.standard_normal(3)
        resid = data.y - data.X @ beta
        vals = [phi(-2.0 * r * beta, rep, 2).value ** 2 for r in resid]
        assert v_n(data, rep, beta) == pytest.approx(np.sqrt(np.mean(vals)), rel=1e-10)

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            d = int(rng.integers(2, 6))
            data, _ = linear_data(rng, 30, d)
            M = int(rng.integers(1, 3))
            rep = Representation(rng.standard_normal((d, M)), rng.uniform(0.1, 5, M))
            beta = rng.standard_normal(d)
            g = grad_v_n(data, rep, beta)
            fd = central_difference_gradient(lambda b: v_n(data, rep, b), beta)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)

    def test_identity_geometry_reduction(self):
        rng = np.random.default_rng(8)
        data, _ = linear_data(rng, 30, 4)
        rep = Representation(rng.standard_normal((4, 2)), np.zeros(2))
        beta = rng.standard_normal(4)
        mse = np.mean((data.y - data.X @ beta) ** 2)
        expected = 2.0 * (
            beta / np.linalg.norm(beta) * np.sqrt(mse)
            - np.linalg.norm(beta)
            * (data.X.T @ (data.y - data.X @ beta))
            / (data.n * np.sqrt(mse))
        )
        np.testing.assert_allclose(grad_v_n(data, rep, beta), expected, atol=1e-10)

    def test_scaling_flips_penalty_part_with_sign(self):
        rng = np.random.default_rng(9)
        data, _ = linear_data(rng, 30, 3)
        rep = Representation(rng.standard_normal((3, 1)), np.array([4.0]))
        beta = rng.standard_normal(3)
        psi = psi_matrix(rep).Psi

        def penalty_part(b):
            g = grad_v_n(data, rep, b)
            mse = np.mean((data.y - data.X @ b) ** 2)
            return g + 2.0 * phi(b, rep, 2).value * (
                data.X.T @ (data.y - data.X @ b)
            ) / (data.n * np.sqrt(mse))

        base = penalty_part(beta)
        mse0 = np.mean((data.y - data.X @ beta) ** 2)
        flipped = penalty_part(-beta)
        mse1 = np.mean((data.y + data.X @ beta) ** 2)
        np.testing.assert_allclose(
            flipped / np.sqrt(mse1), -base / np.sqrt(mse0), atol=1e-10
        )

    def test_nondifferentiable_points_raise(self):
        rng = np.random.default_rng(10)
        data, _ = linear_data(rng, 20, 3)
        Theta = rng.standard_normal((3, 1))
        rep = Representation(Theta, np.array([np.inf]))
        with pytest.raises(NondifferentiableError):
            grad_v_n(data, rep, Theta[:, 0])
        X = rng.standard_normal((15, 3))
        beta = rng.standard_normal(3)
        with pytest.raises(NondifferentiableError):
            grad_v_n(Dataset(X, X @ beta), Representation.empty(3), beta)


class TestLambdaFromAB:
    def test_zero_power_convention(self):
        lam = lambda_from_ab(2.0, 0.0, np.array([0.0, 3.0]))
        np.testing.assert_array_equal(lam, [2.0, 2.0])

    def test_infinite_scale_convention(self):
        lam = lambda_from_ab(np.inf, 1.0, np.array([0.0, 3.0]))
        np.testing.assert_array_equal(lam, [0.0, np.inf])


class TestLambdaObjective:
    def test_finite_at_zero_lambda(self):
        rng = np.random.default_rng(11)
        data, _ = linear_data(rng, 40, 4)
        Theta = rng.standard_normal((4, 2))
        beta = fit_erm(data)
        J = lambda_objective(data, beta, Theta, np.zeros(2), 0.1, 500, 3)
        assert np.isfinite(J) and J > 0

    def test_infinite_when_estimate_sits_in_aligned_span(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((30, 3))
        beta_star = np.array([1.0, -2.0, 0.5])
        data = Dataset(X, X @ beta_star + 0.1 * rng.standard_normal(30))
        beta_erm = fit_erm(data)
        Theta = beta_erm[:, None]  # span contains the estimate exactly
        J = lambda_objective(data, beta_erm, Theta, np.array([np.inf]), 0.1, 500, 3)
        assert J == np.inf

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(13)
        data, _ = linear_data(rng, 40, 4)
        Theta = rng.standard_normal((4, 2))
        beta = fit_erm(data)
        lam = np.array([1.0, 4.0])
        a = lambda_objective(data, beta, Theta, lam, 0.1, 500, 7)
        b = lambda_objective(data, beta, Theta, lam, 0.1, 500, 7)
        assert a == b

    def test_matches_bias_form_algebraically(self):
        # at the least-squares estimate the residual term of the gradient is zero,
        # so J = 4 * mse * eta * ||Psi b||^2_{Sigma^-1} / ||b||_Psi^2
        rng = np.random.default_rng(14)
        data, _ = linear_data(rng, 50, 4)
        Theta = rng.standard_normal((4, 2))
        beta = fit_erm(data)
        lam = np.array([2.0, 0.7])
        rep = Representation(Theta, lam)
        from read_dro import select_delta

        J = lambda_objective(data, beta, Theta, lam, 0.1, 800, 11)
        eta = select_delta(data, beta, rep, 0.1, 800, 11).eta
        psi = psi_matrix(rep).Psi
        sig = data.X.T @ data.X / data.n
        mse = np.mean((data.y - data.X @ beta) ** 2)
        pb = psi @ beta
        expected = eta * 4.0 * mse * (pb @ np.linalg.solve(sig, pb)) / (
            beta @ psi @ beta
        )
        assert J == pytest.approx(expected, rel=1e-8)


class TestTuneLambda:
    def test_reproducible_bitwise(self):
        rng = np.random.default_rng(15)
        train, _ = linear_data(rng, 50, 5)
        val, _ = linear_data(rng, 50, 5)
        Theta = rng.standard_normal((5, 3))
        cfg = TuneConfig(L=300)
        r1 = tune_lambda(train, val, Theta, cfg, rng_seed=3)
        r2 = tune_lambda(train, val, Theta, cfg, rng_seed=3)
        np.testing.assert_array_equal(r1.lambda_, r2.lambda_)
        assert r1.delta == r2.delta
        assert r1.objective_table == r2.objective_table
        assert (r1.a_star, r1.b_star, r1.a_dagger) == (r2.a_star, r2.b_star, r2.a_dagger)

    def test_thread_count_does_not_change_result(self):
        rng = np.random.default_rng(16)
        train, _ = linear_data(rng, 50, 5)
        val, _ = linear_data(rng, 50, 5)
        Theta = rng.standard_normal((5, 2))
        cfg = TuneConfig(L=300)
        r1 = tune_lambda(train, val, Theta, cfg, rng_seed=5, threads=1)
        r8 = tune_lambda(train, val, Theta, cfg, rng_seed=5, threads=8)
        np.testing.assert_array_equal(r1.lambda_, r8.lambda_)
        assert r1.objective_table == r8.objective_table

    def test_dominant_source_concentrates_lambda(self):
        rng = np.random.default_rng(17)
        d, M, n = 12, 3, 200
        Theta = rng.standard_normal((d, M))
        beta_star = 3.0 * Theta[:, 0] + 0.05 * rng.standard_normal(d)
        X = rng.standard_normal((n, d))
        train = Dataset(X, X @ beta_star + 0.5 * rng.standard_normal(n))
        Xv = rng.standard_normal((n, d))
        val = Dataset(Xv, Xv @ beta_star + 0.5 * rng.standard_normal(n))
        res = tune_lambda(train, val, Theta, TuneConfig(L=500), rng_seed=7)
        k = np.abs(res.kappa_init)
        assert np.argmax(k) == 0
        if res.b_star >= 1.0 and np.isfinite(res.lambda_).all() and res.lambda_.min() > 0:
            ratio = res.lambda_.max() / res.lambda_.min()
            assert ratio >= (k.max() / k.min()) ** res.b_star * 0.999
            assert np.argmax(res.lambda_) == 0

    def test_uninformative_sources_keep_validation_close_to_erm(self):
        rng = np.random.default_rng(18)
        d, n = 8, 120
        beta_star = rng.standard_normal(d)
        Theta = rng.standard_normal((d, 2))  # unrelated directions
        X = rng.standard_normal((n, d))
        train = Dataset(X, X @ beta_star + rng.standard_normal(n))
        Xv = rng.standard_normal((n, d))
        val = Dataset(Xv, Xv @ beta_star + rng.standard_normal(n))
        res = tune_lambda(train, val, Theta, TuneConfig(L=500), rng_seed=9)
        from read_dro import fit_read

        est = fit_read(train, Representation(Theta, res.lambda_), res.delta)
        mse_read = np.mean((val.y - val.X @ est.beta) ** 2)
        mse_erm = np.mean((val.y - val.X @ fit_erm(train)) ** 2)
        assert mse_read <= mse_erm * 1.02

    def test_objective_table_covers_grid(self):
        rng = np.random.default_rng(19)
        train, _ = linear_data(rng, 40, 4)
        val, _ = linear_data(rng, 40, 4)
        Theta = rng.standard_normal((4, 2))
        cfg = TuneConfig(a_grid=(0.5, 2.0), b_grid=(0.0, 1.0), L=300)
        res = tune_lambda(train, val, Theta, cfg, rng_seed=11)
        assert set(res.objective_table) == {(a, b) for a in (0.5, 2.0) for b in (0.0, 1.0)}
        assert res.a_star in (0.5, 2.0) and res.b_star in (0.0, 1.0)
        assert res.a_dagger in (0.5, 2.0)
        np.testing.assert_array_equal(
            res.lambda_, lambda_from_ab(res.a_dagger, res.b_star, res.kappa_init)
        )


class TestTuneConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TuneConfig(mu=1.5)
        with pytest.raises(ValueError):
            TuneConfig(nu=-0.1)
        with pytest.raises(ValueError):
            TuneConfig(a_grid=())
        with pytest.raises(ValueError):
            TuneConfig(a_grid=(0.0, 1.0))
        with pytest.raises(ValueError):
            TuneConfig(b_grid=(np.inf,))
