"""Shared spectral machinery for latent Gaussian model samplers.

Every sampler in this package targets a density of the form

    pi(x) proportional to exp{f(x)} N(x | 0, C)

and works in the eigenbasis of the prior covariance C = U diag(gamma) U^T.
The decomposition is computed once per covariance (O(n^3)); afterwards each
transition costs a fixed number of basis multiplications (O(n^2) each) plus
O(n) diagonal arithmetic.  Changing the step size delta never touches the
basis: it only rebuilds three O(n) diagonal vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Eigenvalues of a PSD covariance may come out of LAPACK slightly negative.
# Values in [EIG_CLAMP_FLOOR * gamma_max, 0) are clamped to zero; anything
# below -EIG_NEGATIVE_TOL * gamma_max means the input was not PSD.
EIG_CLAMP_FLOOR = 1e-10
EIG_NEGATIVE_TOL = 1e-6

RECONSTRUCTION_RTOL = 1e-8
ORTHONORMALITY_ATOL = 1e-10

# Eigenvalues at or below NULL_REL_TOL * gamma_max are treated as exact
# zeros by the pseudo-inverse prior density.
NULL_REL_TOL = 1e-10


@dataclass
class OpCounter:
    """Running totals of the expensive linear algebra a chain performs.

    ``matvecs`` counts dense n x n basis multiplications, ``factorizations``
    counts eigendecompositions.  Fixed-hyperparameter runs must show zero
    factorizations after initialization.
    """

    matvecs: int = 0
    factorizations: int = 0

    def reset(self) -> None:
        self.matvecs = 0
        self.factorizations = 0


@dataclass(frozen=True)
class SpectralPrior:
    """Eigendecomposition C = basis @ diag(eigenvalues) @ basis.T.

    ``basis`` has orthonormal columns; ``eigenvalues`` is nonnegative and
    sorted in descending order.  Exact zeros mark prior null directions.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def dimension(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def sqrt_eigenvalues(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)


def eigendecompose_covariance(
    cov: np.ndarray,
    jitter: float = 0.0,
    counter: OpCounter | None = None,
) -> SpectralPrior:
    """Decompose a symmetric PSD covariance into a SpectralPrior.

    The input is symmetrized before factorization; an asymmetry larger than
    1e-8 relative to the largest entry is an error, as is any eigenvalue
    below -1e-6 * gamma_max.  Slightly negative eigenvalues (down to
    -1e-10 * gamma_max) are clamped to zero so that degenerate priors are
    representable.  ``jitter`` adds jitter * I before decomposing.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if not np.isfinite(cov).all():
        raise ValueError("covariance contains non-finite entries")
    scale = np.abs(cov).max()
    if scale > 0:
        asym = np.abs(cov - cov.T).max()
        if asym > 1e-8 * scale:
            raise ValueError(
                f"covariance is not symmetric: max |C - C.T| = {asym:.3e} "
                f"exceeds 1e-8 relative to max |C| = {scale:.3e}"
            )
    sym = 0.5 * (cov + cov.T)
    if jitter:
        sym = sym + jitter * np.eye(sym.shape[0])

    eigvals, eigvecs = np.linalg.eigh(sym)
    if counter is not None:
        counter.factorizations += 1

    # eigh returns ascending order; all consumers expect descending.
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    gamma_max = max(eigvals[0], 0.0)
    floor = -EIG_NEGATIVE_TOL * max(gamma_max, 1.0)
    if eigvals[-1] < floor:
        raise ValueError(
            f"covariance is not positive semidefinite: smallest eigenvalue "
            f"{eigvals[-1]:.3e} is below {floor:.3e}"
        )
    # Everything at or below the null tolerance becomes an exact zero: the
    # pseudo-inverse density already ignores those directions, so the
    # proposals must not inject noise into them either.
    eigvals = np.where(eigvals > NULL_REL_TOL * gamma_max, eigvals, 0.0)

    prior = SpectralPrior(basis=eigvecs, eigenvalues=eigvals)
    _check_decomposition(sym, prior)
    return prior


def _check_decomposition(cov: np.ndarray, prior: SpectralPrior) -> None:
    n = prior.dimension
    gram = prior.basis.T @ prior.basis
    ortho_err = np.abs(gram - np.eye(n)).max()
    if ortho_err > ORTHONORMALITY_ATOL:
        raise ValueError(f"basis is not orthonormal: max |U^T U - I| = {ortho_err:.3e}")
    recon = (prior.basis * prior.eigenvalues) @ prior.basis.T
    scale = max(np.abs(cov).max(), 1.0)
    recon_err = np.abs(recon - cov).max()
    if recon_err > RECONSTRUCTION_RTOL * scale:
        raise ValueError(
            f"reconstruction U diag(gamma) U^T differs from C by {recon_err:.3e} "
            f"(relative tolerance {RECONSTRUCTION_RTOL:g})"
        )


def to_spectral(prior: SpectralPrior, v: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Return basis.T @ v and count one matvec."""
    if counter is not None:
        counter.matvecs += 1
    return prior.basis.T @ v


def from_spectral(prior: SpectralPrior, w: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Return basis @ w and count one matvec."""
    if counter is not None:
        counter.matvecs += 1
    return prior.basis @ w


@dataclass(frozen=True)
class DeltaOperators:
    """Step-size dependent diagonal operators shared by the gradient samplers.

    With A = (C^{-1} + (2/delta) I)^{-1}, equivalently
    A = (delta/2) (C + (delta/2) I)^{-1} C (the form that stays valid for
    singular C), the three diagonals are, per eigenvalue gamma:

      aux_var      = gamma * delta / (delta + 2 gamma)           (diag of A)
      marginal_var = aux_var * (delta + 4 gamma) / (delta + 2 gamma)
                                                  (diag of (2/delta) A^2 + A)
      ratio_weight = (delta + 2 gamma) / (delta + 4 gamma)
                                                  (diag of ((2/delta) A + I)^{-1})

    ``aux_var`` is the conditional covariance of the auxiliary-variable
    proposals, ``marginal_var`` the marginal proposal covariance, and
    ``ratio_weight`` the weighting inside the marginal acceptance ratio.
    All three are O(n) functions of the prior eigenvalues; the basis is
    shared with the SpectralPrior and never recomputed.
    """

    delta: float
    aux_var: np.ndarray
    marginal_var: np.ndarray
    ratio_weight: np.ndarray

    @property
    def sqrt_aux_var(self) -> np.ndarray:
        return np.sqrt(self.aux_var)

    @property
    def sqrt_marginal_var(self) -> np.ndarray:
        return np.sqrt(self.marginal_var)


def build_delta_operators(prior: SpectralPrior, delta: float) -> DeltaOperators:
    """Build the three diagonal operators for step size delta.

    Uses only prior.eigenvalues; costs O(n) and performs no matvecs or
    factorizations.  gamma = 0 maps to aux_var = marginal_var = 0 and
    ratio_weight = 1, so null prior directions stay pinned at zero.
    """
    if not np.isfinite(delta) or delta <= 0.0:
        raise ValueError(f"step size delta must be positive and finite, got {delta!r}")
    gamma = prior.eigenvalues
    denom = delta + 2.0 * gamma
    aux_var = gamma * delta / denom
    wide = delta + 4.0 * gamma
    marginal_var = aux_var * wide / denom
    ratio_weight = denom / wide
    return DeltaOperators(
        delta=float(delta),
        aux_var=aux_var,
        marginal_var=marginal_var,
        ratio_weight=ratio_weight,
    )


class ShrinkageMaps(NamedTuple):
    """Eigenvalue maps of the three covariances compared in the step-size analysis."""

    pcnl: np.ndarray
    marginal: np.ndarray
    posterior: np.ndarray


def shrinkage_maps(gamma: np.ndarray, delta: float, sigma2: float) -> ShrinkageMaps:
    """Per-eigenvalue variances of three proposal/posterior covariances.

      pcnl(gamma)      = (1 - 4/(delta+2)^2) gamma      pCNL proposal variance
      marginal(gamma)  = delta (delta + 4 gamma) gamma / (delta + 2 gamma)^2
                                                        marginal proposal variance
      posterior(gamma) = gamma sigma2 / (gamma + sigma2)
                                      exact Gaussian posterior variance at
                                      unit-variance-per-coordinate likelihoods

    marginal is bounded by min(gamma, delta) and approaches the posterior map
    when delta is matched to the likelihood noise sigma2, which is why the
    marginal sampler tolerates step sizes on the scale of sigma2 rather than
    sigma2 / gamma_max.
    """
    gamma = np.asarray(gamma, dtype=float)
    if delta <= 0.0:
        raise ValueError(f"step size delta must be positive, got {delta!r}")
    if sigma2 <= 0.0:
        raise ValueError(f"noise variance sigma2 must be positive, got {sigma2!r}")
    pcnl = (1.0 - 4.0 / (delta + 2.0) ** 2) * gamma
    marginal = delta * (delta + 4.0 * gamma) * gamma / (delta + 2.0 * gamma) ** 2
    posterior = gamma * sigma2 / (gamma + sigma2)
    return ShrinkageMaps(pcnl=pcnl, marginal=marginal, posterior=posterior)


def prior_null_mask(prior: SpectralPrior) -> np.ndarray:
    """Boolean mask of eigendirections treated as prior null space."""
    gamma = prior.eigenvalues
    tol = NULL_REL_TOL * max(gamma[0], 0.0) if gamma.size else 0.0
    return gamma <= tol


def prior_quad_form(prior: SpectralPrior, ux: np.ndarray, what: str = "state") -> float:
    """Return x^T C^+ x from spectral coordinates ux = U^T x.

    Null directions (eigenvalues at or below 1e-10 * gamma_max) are skipped;
    a state with non-negligible mass in a null direction is an error, since
    the prior cannot support it.
    """
    null = prior_null_mask(prior)
    if null.any():
        scale = max(1.0, float(np.abs(ux).max()))
        stray = np.abs(ux[null]).max() if null.any() else 0.0
        if stray > 1e-8 * scale:
            raise ValueError(
                "prior-singular state: component of size "
                f"{stray:.3e} lies in a null direction of the prior"
            )
    keep = ~null
    return float(np.sum(ux[keep] ** 2 / prior.eigenvalues[keep]))


def prior_logdet(prior: SpectralPrior) -> float:
    """Log pseudo-determinant of the prior covariance (null directions skipped)."""
    keep = ~prior_null_mask(prior)
    return float(np.sum(np.log(prior.eigenvalues[keep])))
