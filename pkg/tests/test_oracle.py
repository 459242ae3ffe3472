"""Brute-force validation oracle tests.

The discretized kernels are themselves test instruments, so this file
cross-checks them against independent constructions: adaptive quadrature for
the auxiliary kernels, closed-form Markov chain variances, and dense linear
algebra for the Gaussian identities.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from lgm.oracle import (
    asymptotic_variance,
    battery_functions,
    build_kernel_matrix,
    check_peskun,
    dense_gaussian_logpdf,
    detailed_balance_residual,
    discretize_target,
    exact_gaussian_posterior,
    gaussian_likelihood_target,
    generalized_marginal_proposal,
    logistic_target,
    make_oracle_grid,
    posterior_coordinate_moments,
    reversibility_residual,
    run_validation_suite,
    stationarity_residual,
    symmetric_conjugation_residual,
)
from lgm.samplers import SamplerKind
from lgm.spectral import build_delta_operators, eigendecompose_covariance

from conftest import make_spd

KERNEL_KINDS = [
    SamplerKind.AGRAD_Z,
    SamplerKind.AGRAD_U,
    SamplerKind.MGRAD,
    SamplerKind.PCN,
    SamplerKind.PCNL,
    SamplerKind.PMALA,
]


class TestDiscretization:
    def test_gaussian_moments_recovered(self):
        grid = discretize_target(lambda x: -0.5 * (x - 1.2) ** 2 / 0.49, (-3.0, 5.0), m=401)
        assert grid.mean() == pytest.approx(1.2, abs=1e-6)
        assert grid.variance() == pytest.approx(0.49, rel=1e-4)
        assert grid.quantile(0.5) == pytest.approx(1.2, abs=2 * grid.width)

    def test_narrow_bounds_expand_automatically(self):
        grid = discretize_target(lambda x: -0.5 * x**2, (-0.1, 0.1), m=201)
        assert grid.points[0] < -5.0 and grid.points[-1] > 5.0
        assert grid.mean() == pytest.approx(0.0, abs=1e-9)

    def test_minimum_grid_size_enforced(self):
        with pytest.raises(ValueError, match="51"):
            discretize_target(lambda x: -0.5 * x**2, (-1, 1), m=21)

    def test_non_integrable_density_rejected(self):
        with pytest.raises(ValueError, match="integrable"):
            discretize_target(lambda x: 0.01 * x, (-1, 1), m=51, max_expansions=8)

    def test_oracle_grid_covers_posterior(self):
        target = gaussian_likelihood_target(gamma=2.0, y=1.0, sigma2=0.5)
        grid = make_oracle_grid(target, m=201)
        post_var = 1.0 / (1.0 / 2.0 + 1.0 / 0.5)
        post_mean = post_var * 1.0 / 0.5
        assert grid.mean() == pytest.approx(post_mean, abs=1e-6)
        assert grid.variance() == pytest.approx(post_var, rel=1e-4)


class TestKernelMatrices:
    @pytest.mark.parametrize("kind", KERNEL_KINDS)
    def test_rows_are_probability_vectors(self, kind):
        target = logistic_target()
        grid = make_oracle_grid(target, m=101)
        p = build_kernel_matrix(kind, 1.0, target, grid)
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("kind", KERNEL_KINDS)
    def test_target_is_invariant_and_reversible(self, kind):
        target = gaussian_likelihood_target(gamma=1.0, y=1.0, sigma2=0.5)
        grid = make_oracle_grid(target, m=151)
        p = build_kernel_matrix(kind, 0.8, target, grid)
        assert stationarity_residual(grid, p) < 1e-8
        assert detailed_balance_residual(grid, p) < 1e-8

    def test_slice_kernel_not_discretizable(self):
        target = logistic_target()
        grid = make_oracle_grid(target, m=101)
        with pytest.raises(NotImplementedError):
            build_kernel_matrix(SamplerKind.ELLIPT, 1.0, target, grid)

    @pytest.mark.parametrize("kind", [SamplerKind.AGRAD_Z, SamplerKind.AGRAD_U])
    def test_auxiliary_cell_count_only_moves_truncation(self, kind):
        target = logistic_target()
        grid = make_oracle_grid(target, m=101)
        base = build_kernel_matrix(kind, 1.0, target, grid, aux_points=401)
        doubled = build_kernel_matrix(kind, 1.0, target, grid, aux_points=802)
        assert np.abs(base - doubled).max() < 1e-12

    @pytest.mark.parametrize("kind", [SamplerKind.AGRAD_Z, SamplerKind.AGRAD_U])
    def test_auxiliary_kernel_matches_adaptive_quadrature(self, kind):
        """Independent check: integrate q(z|x) q(y|z) alpha(x,y,z) dz numerically."""
        delta = 0.8
        target = gaussian_likelihood_target(gamma=1.3, y=0.7, sigma2=0.6)
        grid = make_oracle_grid(target, m=61)
        p = build_kernel_matrix(kind, delta, target, grid)

        gamma = target.gamma
        a = gamma * delta / (delta + 2.0 * gamma)
        x_pts = grid.points
        f = target.loglik(x_pts)
        g = target.grad(x_pts)

        def density(z, mean, var):
            return math.exp(-0.5 * (z - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)

        for i, j in [(10, 40), (30, 31), (50, 12)]:
            xi, xj = x_pts[i], x_pts[j]
            if kind is SamplerKind.AGRAD_Z:
                draw_mean = xi + 0.5 * delta * g[i]

                def integrand(z):
                    prop = density(xj, (2.0 / delta) * a * z, a)
                    r = (f[j] - f[i]
                         + (z - xj - 0.25 * delta * g[j]) * g[j]
                         - (z - xi - 0.25 * delta * g[i]) * g[i])
                    return density(z, draw_mean, 0.5 * delta) * prop * min(1.0, math.exp(r))

                # the acceptance exponent is linear in z; locate its sign change
                slope = g[j] - g[i]
                icept = (f[j] - f[i]
                         - (xj + 0.25 * delta * g[j]) * g[j]
                         + (xi + 0.25 * delta * g[i]) * g[i])
            else:
                draw_mean = xi
                shrink = (2.0 / delta) * a

                def integrand(u):
                    prop = density(xj, shrink * (u + 0.5 * delta * g[i]), a)
                    j_fwd = (xi - shrink * (u + 0.25 * delta * g[j])) * g[j]
                    j_bwd = (xj - shrink * (u + 0.25 * delta * g[i])) * g[i]
                    r = f[j] - f[i] + j_fwd - j_bwd
                    return density(u, draw_mean, 0.5 * delta) * prop * min(1.0, math.exp(r))

                slope = -shrink * (g[j] - g[i])
                icept = (f[j] - f[i] + xi * g[j] - xj * g[i]
                         - 0.25 * delta * shrink * (g[j] ** 2 - g[i] ** 2))

            span = 12.0 * math.sqrt(0.5 * delta)
            lo, hi = draw_mean - span, draw_mean + span
            kink = -icept / slope if slope != 0 else lo
            breakpoints = [kink] if lo < kink < hi else None
            value, err = integrate.quad(
                integrand, lo, hi, points=breakpoints, limit=400, epsabs=1e-15, epsrel=1e-12
            )
            assert p[i, j] == pytest.approx(grid.width * value, rel=1e-7, abs=1e-13)


class TestAsymptoticVariance:
    def test_two_state_chain_closed_form(self):
        # switching chain: up-rate a, down-rate b; indicator of state 1 has
        # asymptotic variance pi0 pi1 (2 - a - b) / (a + b)
        a, b = 0.3, 0.2
        p = np.array([[1 - a, a], [b, 1 - b]])
        pi = np.array([b, a]) / (a + b)
        f = np.array([0.0, 1.0])
        expected = pi[0] * pi[1] * (2 - a - b) / (a + b)
        assert asymptotic_variance(p, pi, f) == pytest.approx(expected, rel=1e-12)

    def test_iid_kernel_gives_plain_variance(self, rng):
        pi = np.array([0.2, 0.5, 0.3])
        p = np.tile(pi, (3, 1))
        f = np.array([1.0, -2.0, 0.5])
        var = pi @ (f - pi @ f) ** 2
        assert asymptotic_variance(p, pi, f) == pytest.approx(var, rel=1e-12)

    def test_non_ergodic_kernel_rejected(self):
        with pytest.raises(ValueError, match="ergodic"):
            asymptotic_variance(np.eye(2), np.array([0.5, 0.5]), np.array([0.0, 1.0]))


class TestPeskunOrdering:
    def test_marginal_never_worse_on_battery(self):
        target = gaussian_likelihood_target()
        grid = make_oracle_grid(target, m=121)
        for name, f_values in battery_functions(grid).items():
            v_marg, v_aux = check_peskun(SamplerKind.MGRAD, SamplerKind.AGRAD_Z, 1.0, target, grid, f_values)
            assert v_marg <= v_aux + 1e-6, name

    def test_battery_contents(self):
        grid = make_oracle_grid(logistic_target(), m=201)
        battery = battery_functions(grid)
        assert set(battery) == {"identity", "square", "tail_indicator_q90"}
        tail_mass = grid.pi @ battery["tail_indicator_q90"]
        assert tail_mass == pytest.approx(0.1, abs=0.02)


class TestGaussianIdentities:
    def test_exact_posterior_matches_dense_solve(self, rng):
        cov = make_spd(7, rng)
        sigma2 = 0.4
        y = rng.standard_normal(7)
        prior = eigendecompose_covariance(cov)
        mean, post_eigs = exact_gaussian_posterior(prior, sigma2, y)
        dense_post = np.linalg.inv(np.linalg.inv(cov) + np.eye(7) / sigma2)
        np.testing.assert_allclose(mean, dense_post @ y / sigma2, atol=1e-10)
        recon = (prior.basis * post_eigs) @ prior.basis.T
        np.testing.assert_allclose(recon, dense_post, atol=1e-10)

    def test_coordinate_moments_match_dense_diagonal(self, rng):
        cov = make_spd(5, rng)
        prior = eigendecompose_covariance(cov)
        y = rng.standard_normal(5)
        _, coord_var = posterior_coordinate_moments(prior, 0.7, y)
        dense_post = np.linalg.inv(np.linalg.inv(cov) + np.eye(5) / 0.7)
        np.testing.assert_allclose(coord_var, np.diag(dense_post), atol=1e-10)

    def test_dense_logpdf_matches_scipy(self, rng):
        cov = make_spd(4, rng)
        mean = rng.standard_normal(4)
        x = rng.standard_normal(4)
        expected = stats.multivariate_normal(mean, cov).logpdf(x)
        assert dense_gaussian_logpdf(x, mean, cov) == pytest.approx(expected, rel=1e-10)

    def test_invalid_sigma2_rejected(self, rng):
        prior = eigendecompose_covariance(make_spd(3, rng))
        with pytest.raises(ValueError, match="sigma2"):
            exact_gaussian_posterior(prior, 0.0, np.zeros(3))


class TestGeneralizedProposal:
    def test_identity_preconditioner_matches_spectral_marginal(self, rng):
        cov = make_spd(4, rng)
        prior = eigendecompose_covariance(cov)
        delta = 0.9
        ops = build_delta_operators(prior, delta)
        x = rng.standard_normal(4)
        grad = rng.standard_normal(4)
        mean, prop_cov = generalized_marginal_proposal(np.eye(4), cov, delta, x, grad)
        a_dense = (prior.basis * ops.aux_var) @ prior.basis.T
        np.testing.assert_allclose(mean, (2 / delta) * a_dense @ (x + 0.5 * delta * grad), atol=1e-10)
        marg_dense = (prior.basis * ops.marginal_var) @ prior.basis.T
        np.testing.assert_allclose(prop_cov, marg_dense, atol=1e-10)

    def test_singular_preconditioner_rejected(self, rng):
        cov = make_spd(3, rng)
        with pytest.raises(ValueError, match="singular"):
            generalized_marginal_proposal(np.zeros((3, 3)), cov, 1.0, np.zeros(3), np.zeros(3))


class TestReversibilityScans:
    def test_prior_reversible_proposal_passes(self, rng):
        cov = make_spd(5, rng)
        rho = 0.8
        resid = reversibility_residual(cov, lambda v: rho * v, (1 - rho**2) * cov, rng, n_pairs=50)
        assert resid < 1e-9

    def test_broken_proposal_caught(self, rng):
        cov = make_spd(5, rng)
        resid = reversibility_residual(cov, lambda v: 0.8 * v, 0.5 * cov, rng, n_pairs=50)
        assert resid > 1e-3

    def test_symmetric_conjugation_family_passes(self, rng):
        cov = make_spd(4, rng)
        f = 0.3 * make_spd(4, rng, spread=2.0)
        f = f / (1.05 * np.abs(np.linalg.eigvalsh(f)).max())
        assert symmetric_conjugation_residual(cov, f, rng, n_pairs=50) < 1e-9

    def test_symmetric_conjugation_validation(self, rng):
        cov = make_spd(3, rng)
        with pytest.raises(ValueError, match="symmetric"):
            symmetric_conjugation_residual(cov, np.triu(np.ones((3, 3))), rng)
        with pytest.raises(ValueError, match="spectral radius"):
            symmetric_conjugation_residual(cov, np.eye(3), rng)


class TestValidationSuite:
    def test_every_check_passes(self):
        checks = run_validation_suite()
        failures = [c.describe() for c in checks if not c.passed]
        assert not failures, "\n".join(failures)
        names = {c.name for c in checks}
        assert any("stationarity" in n for n in names)
        assert any("variance-ordering" in n for n in names)

    def test_describe_format(self):
        checks = run_validation_suite(grid_points=51)
        line = checks[0].describe()
        assert line.startswith(("PASS", "FAIL"))
        assert "residual" in line
