"""Synthetic data: determinism, kernel laws, end-to-end moment consistency."""

import numpy as np
import pytest
from conftest import entrywise_cov_check

from blind_lmmse import rng
from blind_lmmse.datagen import (
    Dataset,
    ShiftedKernelEnsemble,
    SinusoidPrior,
    dataset_from_manifest,
    generate_dataset,
    kernel_stats_from_draws,
    load_dataset,
    problem_moments_from,
    read_manifest,
    sample_kernel,
    sample_signals,
    save_dataset,
)
from blind_lmmse.moments import cov_obs_blind, obs_mean


class TestSinusoidPrior:
    def test_mean_values(self):
        prior = SinusoidPrior(8, 2.0)
        i = np.arange(1, 9)
        np.testing.assert_allclose(prior.theta_x, 2.0 * np.sin(2 * np.pi * i / 8))
        assert np.linalg.norm(prior.theta_x) > 0

    def test_isotropic_covariance(self):
        np.testing.assert_array_equal(SinusoidPrior(4, 0.5).c_xx, 0.5 * np.eye(4))

    def test_rejects_bad_amplitude(self):
        with pytest.raises(ValueError, match="amplitude"):
            SinusoidPrior(4, 0.0)


class TestKernelEnsemble:
    def test_validation(self):
        with pytest.raises(ValueError, match="support"):
            ShiftedKernelEnsemble(d=9, spread=0.5, sigma_theta=0.1, n=8)
        with pytest.raises(ValueError, match="spread"):
            ShiftedKernelEnsemble(d=5, spread=0.0, sigma_theta=0.1, n=8)

    def test_kernels_are_normalized_and_nonnegative(self):
        ens = ShiftedKernelEnsemble(d=21, spread=0.5, sigma_theta=0.8, n=64,
                                    spread_std=0.2)
        draws = ens.draw_kernels(500, seed=0)
        assert (draws >= 0).all()
        np.testing.assert_allclose(draws.sum(axis=1), np.ones(500), atol=1e-12)

    def test_zero_shift_variability_gives_fixed_kernel(self):
        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.0, n=8)
        draws = ens.draw_kernels(10, seed=1)
        offsets = np.arange(5) - 2
        profile = np.exp(-0.5 * (offsets / 0.5) ** 2)
        expected = np.zeros(8)
        expected[offsets % 8] = profile / profile.sum()
        np.testing.assert_allclose(draws, np.tile(expected, (10, 1)), atol=1e-15)

    def test_same_seed_reproduces(self):
        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.4, n=8)
        np.testing.assert_array_equal(
            ens.draw_kernels(20, seed=3), ens.draw_kernels(20, seed=3)
        )
        assert not np.array_equal(
            ens.draw_kernels(20, seed=3), ens.draw_kernels(20, seed=4)
        )

    def test_index_offset_addresses_per_sample_blocks(self):
        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.4, n=8)
        full = ens.draw_kernels(10, seed=5)
        tail = ens.draw_kernels(4, seed=5, index_offset=6)
        np.testing.assert_array_equal(full[6:], tail)

    def test_mean_kernel_matches_quadrature(self):
        # E[k] over the shift: Gauss-Hermite quadrature of the normalized
        # profile against the Gaussian shift law
        sigma_theta = 0.4
        ens = ShiftedKernelEnsemble(d=11, spread=0.5, sigma_theta=sigma_theta, n=16)
        nodes, weights = np.polynomial.hermite.hermgauss(80)
        offsets = ens.offsets
        expected = np.zeros(11)
        for node, weight in zip(nodes, weights):
            shift = np.sqrt(2.0) * sigma_theta * node
            profile = np.exp(-0.5 * ((offsets - shift) / 0.5) ** 2)
            expected += weight / np.sqrt(np.pi) * profile / profile.sum()
        n_draws = 100_000
        draws = ens.draw_kernels(n_draws, seed=7)[:, ens.support]
        se = np.maximum(draws.std(axis=0, ddof=1) / np.sqrt(n_draws), 1e-300)
        # underflow-level floor: the far-tail entries have means ~1e-14 with
        # distributions far too skewed for a plain normal-theory interval
        assert (np.abs(draws.mean(axis=0) - expected) <= 3.0 * se + 1e-9).all()

    def test_width_randomization_matches_requested_moments(self):
        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.0, n=8,
                                    spread_std=0.2)
        z = rng.normals(11, "kernel", (200_000, 2))
        log_var = np.log1p((0.2 / 0.5) ** 2)
        widths = 0.5 * np.exp(np.sqrt(log_var) * z[:, 1] - log_var / 2)
        assert abs(widths.mean() - 0.5) < 3 * widths.std() / np.sqrt(len(widths))
        assert abs(widths.std() - 0.2) < 0.005
        assert (widths > 0).all()


class TestSampleSignals:
    def test_zero_covariance_returns_mean(self):
        class Degenerate:
            theta_x = np.array([1.0, -2.0, 3.0])
            c_xx = np.zeros((3, 3))

        draws = sample_signals(Degenerate(), 5, seed=0)
        np.testing.assert_array_equal(draws, np.tile([1.0, -2.0, 3.0], (5, 1)))

    def test_moments_of_draws(self):
        prior = SinusoidPrior(6, 2.0)
        draws = sample_signals(prior, 100_000, seed=1)
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        assert (np.abs(draws.mean(axis=0) - prior.theta_x) <= 3.0 * se).all()
        assert entrywise_cov_check(draws, prior.c_xx) <= 1.0

    def test_determinism_and_count_validation(self):
        prior = SinusoidPrior(4, 1.0)
        np.testing.assert_array_equal(
            sample_signals(prior, 7, seed=2), sample_signals(prior, 7, seed=2)
        )
        with pytest.raises(ValueError, match="count"):
            sample_signals(prior, 0, seed=2)

    def test_indefinite_covariance_rejected(self):
        class Bad:
            theta_x = np.zeros(2)
            c_xx = np.diag([1.0, -1.0])

        with pytest.raises(ValueError, match="positive semidefinite"):
            sample_signals(Bad(), 3, seed=0)


class TestGenerateDataset:
    def test_identity_pipeline_reproduces_signals(self):
        # near-delta kernel (the profile underflows off-center), no noise,
        # no operator randomness: observations equal the signals
        prior = SinusoidPrior(16, 2.0)
        ens = ShiftedKernelEnsemble(d=5, spread=0.02, sigma_theta=0.0, n=16)
        ds = generate_dataset(prior, ens, 0.0, 8, seed=0, stat_draws=100)
        np.testing.assert_allclose(ds.samples.ys, ds.samples.xs, atol=1e-12)

    def test_component_streams_are_independent(self):
        # the noise stream is uncorrelated with the signal stream
        n_draws = 100_000
        prior = SinusoidPrior(4, 2.0)
        xs = sample_signals(prior, n_draws, seed=9) - prior.theta_x
        eps = rng.normals(9, "noise", (n_draws, 4))
        cross = xs.T @ eps / n_draws
        se = 1.0 * np.sqrt(2.0 / n_draws)  # Var(x) = 2, Var(eps) = 1
        assert np.abs(cross).max() <= 3.0 * se

    def test_observation_covariance_matches_propagated_moments(self):
        prior = SinusoidPrior(16, 2.0)
        ens = ShiftedKernelEnsemble(d=11, spread=0.5, sigma_theta=0.4, n=16)
        pm, stats = problem_moments_from(prior, ens, 0.5, stat_draws=400_000,
                                         stat_seed=1)
        ds = generate_dataset(prior, ens, 0.5, 100_000, seed=2, kernel_stats=stats)
        assert entrywise_cov_check(ds.samples.ys, cov_obs_blind(pm).total) <= 1.0
        se = ds.samples.ys.std(axis=0) / np.sqrt(100_000)
        assert (np.abs(ds.samples.ys.mean(axis=0) - obs_mean(pm)) <= 3 * se).all()

    def test_manifest_regenerates_bit_identically(self):
        prior = SinusoidPrior(8, 2.0)
        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.4, n=8,
                                    spread_std=0.1)
        ds = generate_dataset(prior, ens, 0.5, 25, seed=3, stat_draws=5000)
        regen = dataset_from_manifest(ds.manifest)
        assert np.array_equal(ds.samples.xs, regen.samples.xs)
        assert np.array_equal(ds.samples.ys, regen.samples.ys)
        assert np.array_equal(ds.samples.theta_y, regen.samples.theta_y)

    def test_source_condition_manifest_roundtrip(self):
        from blind_lmmse.bounds import source_condition_prior
        from blind_lmmse.convolution import operator_cov_from_kernel

        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.3, n=8)
        stats = kernel_stats_from_draws(ens, 5000, seed=4)
        sinusoid = SinusoidPrior(8, 2.0)
        prior = source_condition_prior(
            operator_cov_from_kernel(stats), 1.5, theta_x=sinusoid.theta_x
        )
        ds = generate_dataset(
            prior, ens, 0.5, 10, seed=5, kernel_stats=stats,
            stat_draws=5000, stat_seed=4, amplitude=2.0,
        )
        assert ds.manifest["alpha"] == repr(1.5)
        regen = dataset_from_manifest(ds.manifest)
        assert np.array_equal(ds.samples.xs, regen.samples.xs)
        assert np.array_equal(ds.samples.ys, regen.samples.ys)

    def test_source_condition_requires_amplitude(self):
        from blind_lmmse.bounds import source_condition_prior
        from blind_lmmse.convolution import operator_cov_from_kernel

        ens = ShiftedKernelEnsemble(d=5, spread=0.5, sigma_theta=0.3, n=8)
        stats = kernel_stats_from_draws(ens, 2000, seed=6)
        prior = source_condition_prior(operator_cov_from_kernel(stats), 1.0)
        with pytest.raises(ValueError, match="amplitude"):
            generate_dataset(prior, ens, 0.5, 5, seed=7, kernel_stats=stats)


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        prior = SinusoidPrior(6, 2.0)
        ens = ShiftedKernelEnsemble(d=3, spread=0.4, sigma_theta=0.2, n=6)
        ds = generate_dataset(prior, ens, 0.3, 12, seed=8, stat_draws=2000)
        save_dataset(ds, tmp_path)
        text = (tmp_path / "x.csv").read_text().splitlines()
        assert text[0] == "i," + ",".join(f"v{j}" for j in range(6))
        loaded = load_dataset(tmp_path)
        np.testing.assert_array_equal(loaded.samples.xs, ds.samples.xs)
        np.testing.assert_array_equal(loaded.samples.ys, ds.samples.ys)
        manifest = read_manifest(tmp_path / "manifest.txt")
        assert manifest == ds.manifest

    def test_manifest_guards(self, tmp_path):
        with pytest.raises(ValueError, match="datagen"):
            dataset_from_manifest({"generator": "other"})
