"""Estimators: frozen scalar cases, cross-route equivalences, consistency."""

import numpy as np
import pytest
from conftest import gaussian_mc_observations, random_problem

from blind_lmmse.estimators import (
    IllConditionedError,
    SampleSet,
    empirical_lmmse,
    expected_gap_sq,
    joint_estimate,
    lmmse_blind_signal,
    lmmse_general,
    lmmse_nonblind,
    lmmse_operator,
    tikhonov_operator,
    tikhonov_signal,
)
from blind_lmmse.moments import OperatorEnsemble, ProblemMoments, cov_obs_blind


def instance_s(theta_x=0.0):
    op = OperatorEnsemble.from_row_cov_grid([[1.0]], [[[[0.25]]]])
    return ProblemMoments([theta_x], [[1.0]], op, 0.5)


class TestGeneralForm:
    def test_identity_case(self):
        est = lmmse_general(np.eye(3), np.eye(3), np.zeros(3), np.zeros(3), 0.0)
        np.testing.assert_allclose(est.gain, np.eye(3))
        np.testing.assert_allclose(est.offset, np.zeros(3))

    def test_scalar_instance(self):
        est = lmmse_general([[1.0]], [[1.75]], [0.0], [0.0], 0.0)
        np.testing.assert_allclose(est.gain, [[4.0 / 7.0]])

    def test_huge_regularization_returns_prior_mean(self):
        gen = np.random.default_rng(0)
        theta_z = gen.normal(size=3)
        est = lmmse_general(
            gen.normal(size=(3, 4)), np.eye(4), theta_z, gen.normal(size=4), 1e12
        )
        assert np.abs(est.gain).max() < 1e-10
        np.testing.assert_allclose(est.apply(np.zeros(4)), theta_z, atol=1e-9)

    def test_exact_singularity_uses_pseudo_inverse(self):
        c_ww = np.diag([1.0, 0.0])
        est = lmmse_general(np.eye(2), c_ww, np.zeros(2), np.zeros(2), 0.0)
        np.testing.assert_allclose(est.gain, np.diag([1.0, 0.0]), atol=1e-14)

    def test_near_singularity_raises(self):
        c_ww = np.diag([1.0, 1e-15])
        with pytest.raises(IllConditionedError, match="lambda > 0"):
            lmmse_general(np.eye(2), c_ww, np.zeros(2), np.zeros(2), 0.0)

    def test_condition_number_recorded(self):
        est = lmmse_general(np.eye(2), np.diag([4.0, 1.0]), np.zeros(2),
                            np.zeros(2), 1.0)
        np.testing.assert_allclose(est.cond, 2.5)

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError, match="nonnegative"):
            lmmse_general(np.eye(2), np.eye(2), np.zeros(2), np.zeros(2), -0.1)


class TestNonBlind:
    def test_perfect_recovery(self):
        gen = np.random.default_rng(1)
        w = gen.normal(size=(3, 3))
        c_xx = w @ w.T + 0.5 * np.eye(3)
        est = lmmse_nonblind(np.eye(3), c_xx, 0.0, np.zeros(3), 0.0)
        np.testing.assert_allclose(est.gain, np.eye(3), atol=1e-12)

    def test_wiener_shrinkage(self):
        est = lmmse_nonblind(np.eye(4), np.eye(4), 1.0, np.zeros(4), 0.0)
        np.testing.assert_allclose(est.gain, 0.5 * np.eye(4), atol=1e-14)

    @pytest.mark.parametrize("trial", range(4))
    def test_blind_reduces_to_nonblind_without_operator_noise(self, trial):
        gen = np.random.default_rng(200 + trial)
        n = 4
        mean = gen.normal(size=(n, n))
        w = gen.normal(size=(n, n))
        c_xx = w @ w.T + 0.5 * np.eye(n)
        theta_x = gen.normal(size=n)
        beta = float(gen.uniform(0.1, 1.0))
        lam = float(gen.uniform(0.0, 0.3))
        pm = ProblemMoments(theta_x, c_xx, OperatorEnsemble.deterministic(mean), beta)
        blind = lmmse_blind_signal(pm, lam)
        plain = lmmse_nonblind(mean, c_xx, beta, theta_x, lam)
        np.testing.assert_allclose(blind.gain, plain.gain, atol=1e-12)
        np.testing.assert_allclose(blind.offset, plain.offset, atol=1e-12)


class TestBlindSignal:
    def test_scalar_gain(self):
        est = lmmse_blind_signal(instance_s())
        np.testing.assert_allclose(est.apply([7.0]), [4.0])

    def test_shifted_mean_estimate(self):
        est = lmmse_blind_signal(instance_s(2.0))
        np.testing.assert_allclose(est.apply([13.0]), [2.0 + 4.0 / 11.0 * 11.0])

    def test_identity_noiseless_is_exact(self):
        pm = ProblemMoments(
            np.zeros(3), np.eye(3), OperatorEnsemble.deterministic(np.eye(3)), 0.0
        )
        y = np.array([0.3, -1.0, 2.0])
        np.testing.assert_allclose(lmmse_blind_signal(pm).apply(y), y, atol=1e-12)


class TestTikhonovRoutes:
    def test_scalar_normal_equations(self):
        np.testing.assert_allclose(tikhonov_signal(instance_s(), [7.0]), [4.0])

    def test_mean_observation_returns_prior_mean(self):
        gen = np.random.default_rng(2)
        pm = random_problem(gen, 4, 4)
        theta_y = pm.op.mean_op @ pm.theta_x
        np.testing.assert_allclose(
            tikhonov_signal(pm, theta_y, 0.1), pm.theta_x, atol=1e-10
        )

    @pytest.mark.parametrize("trial", range(6))
    def test_signal_route_equivalence(self, trial):
        gen = np.random.default_rng(300 + trial)
        pm = random_problem(gen, 5, 5)
        lam = float(gen.uniform(0.0, 0.5))
        y = pm.op.mean_op @ pm.theta_x + gen.normal(size=5)
        affine = lmmse_blind_signal(pm, lam).apply(y)
        direct = tikhonov_signal(pm, y, lam)
        assert np.linalg.norm(affine - direct) <= 1e-8 * np.linalg.norm(direct)

    @pytest.mark.parametrize("trial", range(4))
    def test_operator_route_equivalence(self, trial):
        gen = np.random.default_rng(400 + trial)
        pm = random_problem(gen, 3, 3)
        lam = float(gen.uniform(0.0, 0.5))
        y = pm.op.mean_op @ pm.theta_x + gen.normal(size=3)
        affine = lmmse_operator(pm, lam).apply(y)
        direct = tikhonov_operator(pm, y, lam)
        assert np.linalg.norm(affine - direct) <= 1e-8 * (
            1 + np.linalg.norm(affine)
        )

    def test_singular_cxx_rejected(self):
        op = OperatorEnsemble.deterministic(np.eye(2))
        pm = ProblemMoments(np.zeros(2), np.diag([1.0, 0.0]), op, 0.5)
        with pytest.raises(ValueError, match="singular"):
            tikhonov_signal(pm, [1.0, 1.0], 0.0)

    def test_singular_caa_rejected(self):
        pm = instance_s()  # Caa = 0.25 is fine; use a zero-cov ensemble instead
        zero = ProblemMoments(
            [0.0], [[1.0]], OperatorEnsemble.deterministic([[1.0]]), 0.5
        )
        assert tikhonov_operator(pm, [1.0]) is not None
        with pytest.raises(ValueError, match="singular"):
            tikhonov_operator(zero, [1.0])


class TestOperatorEstimator:
    def test_centered_signal_mean_is_uninformative(self):
        est = lmmse_operator(instance_s())
        np.testing.assert_array_equal(est.gain, [[0.0]])
        np.testing.assert_allclose(est.apply([123.0]), [1.0])

    def test_shifted_mean_scalar(self):
        est = lmmse_operator(instance_s(2.0))
        np.testing.assert_allclose(est.gain, [[2.0 / 11.0]])
        np.testing.assert_allclose(est.apply([13.0]), [3.0])

    def test_tikhonov_route_scalars(self):
        np.testing.assert_allclose(tikhonov_operator(instance_s(2.0), [2.0]), [1.0])
        np.testing.assert_allclose(tikhonov_operator(instance_s(2.0), [13.0]), [3.0])

    def test_deterministic_operator_estimate_is_its_mean(self):
        gen = np.random.default_rng(3)
        mean = gen.normal(size=(3, 2))
        pm = ProblemMoments(
            gen.normal(size=2), np.eye(2), OperatorEnsemble.deterministic(mean), 0.4
        )
        est = lmmse_operator(pm)
        np.testing.assert_allclose(
            est.apply(gen.normal(size=3)), mean.reshape(-1), atol=1e-14
        )


class TestJoint:
    def test_mean_observation(self):
        x_hat, a_hat = joint_estimate(instance_s(2.0), [2.0])
        np.testing.assert_allclose(x_hat, [2.0])
        np.testing.assert_allclose(a_hat, [1.0])

    def test_scalar_values(self):
        x_hat, a_hat = joint_estimate(instance_s(2.0), [13.0])
        np.testing.assert_allclose(x_hat, [6.0])
        np.testing.assert_allclose(a_hat, [3.0])

    def test_decouples_into_standalone_estimates(self):
        gen = np.random.default_rng(4)
        pm = random_problem(gen, 3, 4)
        y = gen.normal(size=4)
        x_hat, a_hat = joint_estimate(pm, y, 0.05)
        assert np.array_equal(x_hat, lmmse_blind_signal(pm, 0.05).apply(y))
        assert np.array_equal(a_hat, lmmse_operator(pm, 0.05).apply(y))


class TestEmpirical:
    def test_single_centered_sample(self):
        samples = SampleSet([[1.0, 2.0]], [[0.5]], [1.0, 2.0], [0.5])
        est = empirical_lmmse(samples, 1.0)
        np.testing.assert_array_equal(est.gain, np.zeros((2, 1)))
        np.testing.assert_allclose(est.offset, [1.0, 2.0])

    def test_huge_regularization_kills_gain(self):
        gen = np.random.default_rng(5)
        samples = SampleSet(
            gen.normal(size=(50, 3)), gen.normal(size=(50, 2)),
            np.zeros(3), np.zeros(2),
        )
        est = empirical_lmmse(samples, 1e12)
        assert np.abs(est.gain).max() < 1e-10

    def test_consistency_on_scalar_instance(self):
        gen = np.random.default_rng(6)
        n_samples = 1_000_000
        a = 1.0 + 0.5 * gen.normal(size=n_samples)  # Var = 0.25
        x = gen.normal(size=n_samples)
        y = a * x + np.sqrt(0.5) * gen.normal(size=n_samples)
        samples = SampleSet(x[:, None], y[:, None], [0.0], [0.0])
        est = empirical_lmmse(samples, 1e-6)
        assert abs(est.gain[0, 0] - 4.0 / 7.0) <= 0.01

    def test_rank_deficiency_rejected_without_regularization(self):
        gen = np.random.default_rng(7)
        samples = SampleSet(
            gen.normal(size=(3, 4)), gen.normal(size=(3, 4)),
            np.zeros(4), np.zeros(4),
        )
        with pytest.raises(IllConditionedError, match="rank-deficient"):
            empirical_lmmse(samples, 0.0)
        assert empirical_lmmse(samples, 0.1) is not None

    def test_empirical_mean_centering_mode(self):
        gen = np.random.default_rng(8)
        xs = gen.normal(size=(200, 2)) + 5.0
        ys = xs @ gen.normal(size=(2, 2)).T + 0.1 * gen.normal(size=(200, 2))
        samples = SampleSet(xs, ys, np.full(2, 5.0), ys.mean(axis=0))
        est = empirical_lmmse(samples, 0.01, center="empirical")
        np.testing.assert_allclose(est.apply(ys.mean(axis=0)), xs.mean(axis=0))
        with pytest.raises(ValueError, match="center"):
            empirical_lmmse(samples, 0.01, center="bogus")

    def test_empty_sample_set_rejected(self):
        with pytest.raises(ValueError, match="at least one sample"):
            SampleSet(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(2), np.zeros(2))


class TestStatisticalProperties:
    def test_unbiasedness_of_affine_form(self):
        gen = np.random.default_rng(9)
        for _ in range(5):
            pm = random_problem(gen, int(gen.integers(2, 6)), int(gen.integers(2, 6)))
            est = lmmse_blind_signal(pm, float(gen.uniform(0.0, 0.4)))
            theta_y = pm.op.mean_op @ pm.theta_x
            scale = 1.0 + np.abs(est.gain @ theta_y).max()
            np.testing.assert_allclose(
                est.apply(theta_y), pm.theta_x, atol=1e-12 * scale
            )

    def test_orthogonality_principle(self):
        # residual of the unregularized estimator is uncorrelated with y
        gen = np.random.default_rng(10)
        pm = random_problem(gen, 3, 3)
        est = lmmse_blind_signal(pm, 0.0)
        n_draws = 200_000
        caa = pm.op.assemble_cov()
        eigval, eigvec = np.linalg.eigh(caa)
        a = gen.normal(size=(n_draws, 9)) @ (
            eigvec * np.sqrt(np.clip(eigval, 0, None))
        ).T + pm.op.mean_op.reshape(-1)
        eigval, eigvec = np.linalg.eigh(pm.c_xx)
        x = gen.normal(size=(n_draws, 3)) @ (
            eigvec * np.sqrt(np.clip(eigval, 0, None))
        ).T + pm.theta_x
        y = np.einsum("kij,kj->ki", a.reshape(n_draws, 3, 3), x)
        y += gen.normal(size=(n_draws, 3)) * np.sqrt(pm.beta)
        resid = est.apply(y) - x
        prods = resid[:, :, None] * y[:, None, :]
        se = np.maximum(np.sqrt(prods.var(axis=0) / n_draws), 1e-300)
        assert (np.abs(prods.mean(axis=0)) <= 3.0 * se).all()

    def test_empirical_gap_shrinks_with_sample_count(self):
        # averaged over seeds, the squared distance to the exact estimator
        # decreases as the training set grows
        gen = np.random.default_rng(12)
        pm = random_problem(gen, 4, 4)
        cov = cov_obs_blind(pm).total
        exact = lmmse_blind_signal(pm, 0.2)
        theta_y = pm.op.mean_op @ pm.theta_x
        mean_gaps = []
        for n_samples in (100, 400, 1600):
            gaps = []
            for _ in range(8):
                ys = gaussian_mc_observations(pm, n_samples, gen)
                eigval, eigvec = np.linalg.eigh(pm.c_xx)
                xs = gen.normal(size=(n_samples, 4)) @ (
                    eigvec * np.sqrt(np.clip(eigval, 0, None))
                ).T + pm.theta_x
                # xs here are fresh signals; rebuild consistent pairs instead
                samples = _paired_draws(pm, n_samples, gen)
                est = empirical_lmmse(samples, 0.2)
                gaps.append(expected_gap_sq(est, exact, cov))
            mean_gaps.append(np.mean(gaps))
        assert mean_gaps[0] > mean_gaps[1] > mean_gaps[2]
        del theta_y, ys, xs

    def test_expected_gap_matches_monte_carlo(self):
        gen = np.random.default_rng(11)
        pm = random_problem(gen, 3, 4)
        cov = cov_obs_blind(pm).total
        est_a = lmmse_blind_signal(pm, 0.1)
        est_b = lmmse_blind_signal(pm, 0.5)
        exact = expected_gap_sq(est_a, est_b, cov)
        ys = gaussian_mc_observations(pm, 200_000, gen)
        diffs = est_a.apply(ys) - est_b.apply(ys)
        mc = float((diffs**2).sum(axis=1).mean())
        assert abs(mc - exact) <= 0.05 * exact
