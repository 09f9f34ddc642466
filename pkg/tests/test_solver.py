import numpy as np
import pytest

from read_dro import (
    Dataset,
    Representation,
    SingularDesignError,
    SolverConfig,
    fit_erm,
    fit_read,
    fit_read_reference,
    fit_restricted,
    objective_value,
    phi,
    psi_matrix,
)


def make_data(rng, n, d, noise=1.0):
    X = rng.standard_normal((n, d))
    beta = rng.standard_normal(d)
    y = X @ beta + noise * rng.standard_normal(n)
    return Dataset(X, y), beta


def random_instance(rng, kind):
    d = int(rng.integers(2, 11))
    n = int(rng.integers(d + 5, 61))
    data, _ = make_data(rng, n, d)
    M = int(rng.integers(0, 4))
    Theta = rng.standard_normal((d, M))
    if kind == 0:
        lam = np.zeros(M)
    elif kind == 1:
        lam = rng.uniform(0, 20, M)
    elif kind == 2:
        lam = np.where(rng.random(M) < 0.5, np.inf, rng.uniform(0, 5, M))
    else:
        lam = np.full(M, np.inf)
    delta = 10.0 ** rng.uniform(-3, 0.8)
    return data, Representation(Theta, lam), delta


class TestFitErm:
    def test_identity_design_returns_y(self):
        y = np.array([2.0, -1.0, 0.5])
        np.testing.assert_allclose(fit_erm(Dataset(np.eye(3), y)), y, atol=1e-14)

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 6))
        beta = rng.standard_normal(6)
        est = fit_erm(Dataset(X, X @ beta))
        np.testing.assert_allclose(est, beta, atol=1e-10)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(1)
        data, _ = make_data(rng, 50, 5)
        expected = np.linalg.solve(data.X.T @ data.X, data.X.T @ data.y)
        np.testing.assert_allclose(fit_erm(data), expected, atol=1e-9)

    def test_singular_design_reports_rank(self):
        X = np.ones((10, 3))  # rank 1
        with pytest.raises(SingularDesignError, match="rank 1 < 3"):
            fit_erm(Dataset(X, np.ones(10)))


class TestFitRestricted:
    def test_full_basis_equals_erm(self):
        rng = np.random.default_rng(2)
        data, _ = make_data(rng, 30, 4)
        np.testing.assert_allclose(
            fit_restricted(data, np.eye(4)), fit_erm(data), atol=1e-10
        )

    def test_single_axis_direction(self):
        rng = np.random.default_rng(3)
        data, _ = make_data(rng, 25, 3)
        beta = fit_restricted(data, np.array([[1.0], [0.0], [0.0]]))
        x1 = data.X[:, 0]
        np.testing.assert_allclose(beta[0], x1 @ data.y / (x1 @ x1), atol=1e-12)
        np.testing.assert_allclose(beta[1:], 0.0, atol=1e-14)

    def test_matches_explicit_reparametrization(self):
        rng = np.random.default_rng(4)
        data, _ = make_data(rng, 40, 6)
        Theta = rng.standard_normal((6, 2))
        # oracle: eliminate through the raw (non-orthonormal) parametrization
        XT = data.X @ Theta
        coef = np.linalg.solve(XT.T @ XT, XT.T @ data.y)
        np.testing.assert_allclose(fit_restricted(data, Theta), Theta @ coef, atol=1e-9)

    def test_rank_deficient_restricted_design(self):
        X = np.zeros((10, 3))
        X[:, 0] = 1.0
        data = Dataset(X + 1e-16, np.ones(10))
        with pytest.raises(SingularDesignError):
            fit_restricted(data, np.array([[0.0], [1.0], [0.0]]))


class TestObjectiveValue:
    def test_zero_beta_and_zero_delta(self):
        rng = np.random.default_rng(5)
        data, _ = make_data(rng, 20, 3)
        rep = Representation.empty(3)
        assert objective_value(data, rep, 1.0, np.zeros(3)) == pytest.approx(
            np.linalg.norm(data.y) / np.sqrt(20)
        )
        beta = rng.standard_normal(3)
        assert objective_value(data, rep, 0.0, beta) == pytest.approx(
            np.linalg.norm(data.y - data.X @ beta) / np.sqrt(20)
        )

    def test_cross_checked_against_direct_formula(self):
        rng = np.random.default_rng(6)
        data, _ = make_data(rng, 30, 4)
        Theta = rng.standard_normal((4, 2))
        rep = Representation(Theta, np.array([2.0, 5.0]))
        beta = rng.standard_normal(4)
        delta = 0.3
        direct = np.linalg.norm(data.y - data.X @ beta) / np.sqrt(30) + np.sqrt(
            delta
        ) * np.sqrt(beta @ psi_matrix(rep).Psi @ beta)
        assert objective_value(data, rep, delta, beta) == pytest.approx(direct, rel=1e-12)

    def test_convexity_probe(self):
        rng = np.random.default_rng(7)
        data, _ = make_data(rng, 25, 5)
        Theta = rng.standard_normal((5, 2))
        rep = Representation(Theta, np.array([np.inf, 3.0]))
        for _ in range(25):
            a, b = rng.standard_normal((2, 5))
            fa = objective_value(data, rep, 0.4, a)
            fb = objective_value(data, rep, 0.4, b)
            fm = objective_value(data, rep, 0.4, 0.5 * (a + b))
            assert fm <= 0.5 * (fa + fb) + 1e-10


class TestFitRead:
    def test_delta_zero_is_exactly_erm(self):
        rng = np.random.default_rng(8)
        data, _ = make_data(rng, 30, 4)
        rep = Representation(rng.standard_normal((4, 2)), np.array([1.0, np.inf]))
        est = fit_read(data, rep, 0.0)
        np.testing.assert_array_equal(est.beta, fit_erm(data))
        assert est.mu == 0.0 and est.converged

    def test_origin_above_ridge_threshold(self):
        rng = np.random.default_rng(9)
        data, _ = make_data(rng, 30, 4)
        rep = Representation(rng.standard_normal((4, 2)), np.zeros(2))
        thresh = (
            np.linalg.norm(data.X.T @ data.y)
            / (np.sqrt(30) * np.linalg.norm(data.y))
        ) ** 2
        est = fit_read(data, rep, thresh * 1.01)
        np.testing.assert_array_equal(est.beta, np.zeros(4))
        below = fit_read(data, rep, thresh * 0.99)
        assert np.linalg.norm(below.beta) > 0

    def test_objective_field_matches_objective_value(self):
        rng = np.random.default_rng(10)
        for kind in range(4):
            data, rep, delta = random_instance(rng, kind)
            est = fit_read(data, rep, delta)
            assert est.objective == pytest.approx(
                objective_value(data, rep, delta, est.beta), abs=1e-9
            )

    def test_matches_reference_on_random_instances(self):
        rng = np.random.default_rng(11)
        for trial in range(12):
            data, rep, delta = random_instance(rng, trial % 4)
            est = fit_read(data, rep, delta)
            ref = fit_read_reference(data, rep, delta)
            f_ref = objective_value(data, rep, delta, ref)
            assert est.objective == pytest.approx(f_ref, rel=1e-6)

    def test_optimality_certificate(self):
        rng = np.random.default_rng(12)
        checked = 0
        for trial in range(20):
            data, rep, delta = random_instance(rng, trial % 3)
            est = fit_read(data, rep, delta)
            if not np.isfinite(est.mu) or est.mu == 0.0:
                continue  # degenerate branch has its own subgradient test
            psi = psi_matrix(rep).Psi
            r = data.y - data.X @ est.beta
            pen = np.sqrt(est.beta @ psi @ est.beta)
            grad = -data.X.T @ r / (np.sqrt(data.n) * np.linalg.norm(r)) + np.sqrt(
                delta
            ) * psi @ est.beta / pen
            assert np.linalg.norm(grad) <= 1e-6 * (
                1 + np.linalg.norm(data.X.T @ data.y)
            )
            checked += 1
        assert checked >= 10

    def test_monotone_shrinkage_in_delta(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            data, rep, _ = random_instance(rng, 1)
            deltas = [0.01, 0.05, 0.2, 1.0]
            pens = [
                phi(fit_read(data, rep, dl).beta, rep, 2).value for dl in deltas
            ]
            assert all(p2 <= p1 + 1e-9 for p1, p2 in zip(pens, pens[1:]))

    def test_perfect_alignment_limit(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            d, M = 6, 2
            Theta = rng.standard_normal((d, M))
            beta_star = Theta @ rng.standard_normal(M)
            X = rng.standard_normal((40, d))
            data = Dataset(X, X @ beta_star + 0.5 * rng.standard_normal(40))
            rep = Representation(Theta, np.full(M, np.inf))
            restricted = fit_restricted(data, Theta)
            dists = [
                np.linalg.norm(fit_read(data, rep, dl).beta - restricted)
                for dl in (1e2, 1e4, 1e6)
            ]
            assert dists[0] >= dists[1] - 1e-12 and dists[1] >= dists[2] - 1e-12
            assert dists[-1] <= 1e-4

    def test_negative_delta_rejected(self):
        rng = np.random.default_rng(15)
        data, _ = make_data(rng, 20, 3)
        with pytest.raises(ValueError, match="delta"):
            fit_read(data, Representation.empty(3), -0.5)

    def test_infinite_delta_returns_null_space_fit(self):
        rng = np.random.default_rng(16)
        data, _ = make_data(rng, 30, 5)
        Theta = rng.standard_normal((5, 2))
        rep = Representation(Theta, np.full(2, np.inf))
        est = fit_read(data, rep, np.inf)
        np.testing.assert_allclose(est.beta, fit_restricted(data, Theta), atol=1e-10)
        assert np.isfinite(est.objective)

    def test_interpolating_design_small_delta_keeps_erm(self):
        rng = np.random.default_rng(17)
        X = rng.standard_normal((30, 3))
        beta = rng.standard_normal(3)
        data = Dataset(X, X @ beta)  # exactly interpolable
        rep = Representation.empty(3)
        est = fit_read(data, rep, 1e-10)
        np.testing.assert_allclose(est.beta, beta, atol=1e-6)


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0.0)
        with pytest.raises(ValueError):
            SolverConfig(max_iter=0)
        with pytest.raises(ValueError):
            SolverConfig(bracket_growth=1.0)
