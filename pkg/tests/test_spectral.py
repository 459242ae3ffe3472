"""Eigendecomposition, diagonal operators, and shrinkage map tests."""

import numpy as np
import pytest

from lgm.spectral import (
    DeltaOperators,
    OpCounter,
    SpectralPrior,
    build_delta_operators,
    eigendecompose_covariance,
    from_spectral,
    prior_logdet,
    prior_null_mask,
    prior_quad_form,
    shrinkage_maps,
    to_spectral,
)

from conftest import make_singular_psd, make_spd


class TestEigendecomposition:
    def test_reconstructs_covariance(self, rng):
        cov = make_spd(12, rng)
        prior = eigendecompose_covariance(cov)
        recon = (prior.basis * prior.eigenvalues) @ prior.basis.T
        np.testing.assert_allclose(recon, cov, atol=1e-10 * np.abs(cov).max())

    def test_basis_is_orthonormal(self, rng):
        prior = eigendecompose_covariance(make_spd(9, rng))
        gram = prior.basis.T @ prior.basis
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-12)

    def test_eigenvalues_descending_and_nonnegative(self, rng):
        prior = eigendecompose_covariance(make_spd(15, rng))
        assert (np.diff(prior.eigenvalues) <= 0).all()
        assert (prior.eigenvalues >= 0).all()

    def test_singular_covariance_gets_exact_zeros(self, rng):
        cov = make_singular_psd(8, 5, rng)
        prior = eigendecompose_covariance(cov)
        assert (prior.eigenvalues[5:] == 0.0).all()
        assert (prior.eigenvalues[:5] > 0).all()

    def test_tiny_relative_eigenvalues_zeroed(self):
        # one direction 1e-12 below the dominant scale falls under the null cutoff
        cov = np.diag([1.0, 1e-12])
        prior = eigendecompose_covariance(cov)
        assert prior.eigenvalues[0] == pytest.approx(1.0)
        assert prior.eigenvalues[1] == 0.0

    def test_jitter_shifts_spectrum(self, rng):
        cov = make_spd(6, rng)
        plain = eigendecompose_covariance(cov)
        jittered = eigendecompose_covariance(cov, jitter=0.5)
        np.testing.assert_allclose(jittered.eigenvalues, plain.eigenvalues + 0.5, rtol=1e-10)

    def test_counter_tracks_factorization(self, rng):
        counter = OpCounter()
        eigendecompose_covariance(make_spd(4, rng), counter=counter)
        assert counter.factorizations == 1
        assert counter.matvecs == 0
        counter.reset()
        assert counter.factorizations == 0

    def test_rejects_asymmetric_matrix(self):
        cov = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(ValueError, match="not symmetric"):
            eigendecompose_covariance(cov)

    def test_rejects_indefinite_matrix(self):
        cov = np.diag([1.0, -0.5])
        with pytest.raises(ValueError, match="not positive semidefinite"):
            eigendecompose_covariance(cov)

    def test_rejects_nonsquare_and_nonfinite(self):
        with pytest.raises(ValueError, match="square"):
            eigendecompose_covariance(np.ones((2, 3)))
        with pytest.raises(ValueError, match="non-finite"):
            eigendecompose_covariance(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_dimension_property(self, rng):
        prior = eigendecompose_covariance(make_spd(7, rng))
        assert prior.dimension == 7
        np.testing.assert_allclose(prior.sqrt_eigenvalues**2, prior.eigenvalues)


class TestSpectralTransforms:
    def test_round_trip(self, rng):
        prior = eigendecompose_covariance(make_spd(10, rng))
        v = rng.standard_normal(10)
        np.testing.assert_allclose(from_spectral(prior, to_spectral(prior, v)), v, atol=1e-12)

    def test_counter_counts_matvecs(self, rng):
        prior = eigendecompose_covariance(make_spd(5, rng))
        counter = OpCounter()
        w = to_spectral(prior, rng.standard_normal(5), counter)
        from_spectral(prior, w, counter)
        assert counter.matvecs == 2
        assert counter.factorizations == 0


class TestDeltaOperators:
    @pytest.mark.parametrize("delta", [0.1, 1.0, 7.3])
    def test_aux_var_matches_dense_inverse(self, rng, delta):
        cov = make_spd(8, rng)
        prior = eigendecompose_covariance(cov)
        ops = build_delta_operators(prior, delta)
        dense_a = np.linalg.inv(np.linalg.inv(cov) + (2.0 / delta) * np.eye(8))
        spectral_a = (prior.basis * ops.aux_var) @ prior.basis.T
        np.testing.assert_allclose(spectral_a, dense_a, atol=1e-10)

    def test_marginal_var_identity(self, rng):
        prior = eigendecompose_covariance(make_spd(6, rng))
        delta = 0.7
        ops = build_delta_operators(prior, delta)
        a = ops.aux_var
        np.testing.assert_allclose(ops.marginal_var, (2.0 / delta) * a**2 + a, rtol=1e-12)

    def test_ratio_weight_identity(self, rng):
        prior = eigendecompose_covariance(make_spd(6, rng))
        delta = 2.5
        ops = build_delta_operators(prior, delta)
        gamma = prior.eigenvalues
        np.testing.assert_allclose(ops.ratio_weight, (delta + 2 * gamma) / (delta + 4 * gamma), rtol=1e-12)

    def test_null_directions_stay_pinned(self, rng):
        prior = eigendecompose_covariance(make_singular_psd(7, 4, rng))
        ops = build_delta_operators(prior, 1.3)
        assert (ops.aux_var[4:] == 0).all()
        assert (ops.marginal_var[4:] == 0).all()
        np.testing.assert_allclose(ops.ratio_weight[4:], 1.0)

    def test_sqrt_properties(self, rng):
        ops = build_delta_operators(eigendecompose_covariance(make_spd(5, rng)), 0.4)
        np.testing.assert_allclose(ops.sqrt_aux_var**2, ops.aux_var)
        np.testing.assert_allclose(ops.sqrt_marginal_var**2, ops.marginal_var)

    @pytest.mark.parametrize("delta", [0.0, -1.0, np.inf, np.nan])
    def test_invalid_delta_rejected(self, rng, delta):
        prior = eigendecompose_covariance(make_spd(3, rng))
        with pytest.raises(ValueError, match="delta"):
            build_delta_operators(prior, delta)


class TestShrinkageMaps:
    def test_pcnl_map_formula(self):
        gamma = np.array([0.5, 1.0, 20.0])
        delta = 0.8
        maps = shrinkage_maps(gamma, delta, sigma2=1.0)
        expected = delta * (delta + 4.0) / (delta + 2.0) ** 2 * gamma
        np.testing.assert_allclose(maps.pcnl, expected, rtol=1e-12)

    def test_marginal_map_bounded_by_gamma_and_delta(self):
        gamma = np.logspace(-4, 6, 200)
        delta = 0.3
        maps = shrinkage_maps(gamma, delta, sigma2=1.0)
        assert (maps.marginal <= np.minimum(gamma, delta) + 1e-12).all()

    def test_marginal_map_saturates_at_delta(self):
        delta = 0.05
        maps = shrinkage_maps(np.array([1e9 * delta]), delta, sigma2=1.0)
        assert maps.marginal[0] == pytest.approx(delta, rel=1e-6)

    def test_marginal_map_unit_slope_at_origin(self):
        delta = 1.7
        h = 1e-7
        maps = shrinkage_maps(np.array([h]), delta, sigma2=1.0)
        assert maps.marginal[0] / h == pytest.approx(1.0, abs=1e-5)

    def test_posterior_map(self):
        gamma = np.array([2.0, 8.0])
        maps = shrinkage_maps(gamma, delta=1.0, sigma2=0.5)
        np.testing.assert_allclose(maps.posterior, gamma * 0.5 / (gamma + 0.5), rtol=1e-12)

    def test_marginal_to_posterior_ratio_band_at_matched_delta(self):
        # with delta = sigma2 the two maps agree within a factor of 9/8
        sigma2 = 0.25
        gamma = np.logspace(-6, 8, 500)
        maps = shrinkage_maps(gamma, delta=sigma2, sigma2=sigma2)
        ratio = maps.marginal / maps.posterior
        assert ratio.min() >= 1.0 - 1e-9
        assert ratio.max() <= 1.125 + 1e-9

    def test_invalid_arguments(self):
        with pytest.raises(ValueError, match="delta"):
            shrinkage_maps(np.array([1.0]), delta=0.0, sigma2=1.0)
        with pytest.raises(ValueError, match="sigma2"):
            shrinkage_maps(np.array([1.0]), delta=1.0, sigma2=-1.0)


class TestPriorDensityPieces:
    def test_quad_form_matches_dense_solve(self, rng):
        cov = make_spd(9, rng)
        prior = eigendecompose_covariance(cov)
        x = rng.standard_normal(9)
        expected = x @ np.linalg.solve(cov, x)
        assert prior_quad_form(prior, to_spectral(prior, x)) == pytest.approx(expected, rel=1e-10)

    def test_quad_form_on_singular_prior_range_vector(self, rng):
        cov = make_singular_psd(6, 3, rng)
        prior = eigendecompose_covariance(cov)
        # a vector supported on the range of C
        w = np.zeros(6)
        w[:3] = rng.standard_normal(3)
        expected = np.sum(w[:3] ** 2 / prior.eigenvalues[:3])
        assert prior_quad_form(prior, w) == pytest.approx(expected, rel=1e-12)

    def test_quad_form_rejects_null_mass(self, rng):
        prior = eigendecompose_covariance(make_singular_psd(5, 2, rng))
        w = np.zeros(5)
        w[-1] = 0.5
        with pytest.raises(ValueError, match="null direction"):
            prior_quad_form(prior, w)

    def test_logdet_full_rank(self, rng):
        cov = make_spd(7, rng)
        prior = eigendecompose_covariance(cov)
        assert prior_logdet(prior) == pytest.approx(np.linalg.slogdet(cov)[1], rel=1e-10)

    def test_logdet_skips_null_directions(self, rng):
        prior = eigendecompose_covariance(make_singular_psd(6, 4, rng))
        expected = np.sum(np.log(prior.eigenvalues[:4]))
        assert prior_logdet(prior) == pytest.approx(expected, rel=1e-12)

    def test_null_mask(self, rng):
        prior = eigendecompose_covariance(make_singular_psd(6, 4, rng))
        np.testing.assert_array_equal(prior_null_mask(prior), [False] * 4 + [True] * 2)
