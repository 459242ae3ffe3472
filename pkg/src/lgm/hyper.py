"""Hyperparameter learning for latent Gaussian models.

Extends the latent samplers to posteriors over (x, theta) where the prior
covariance C(theta) depends on hyperparameters with density p(theta):

    pi(x, theta) proportional to exp{f(x)} N(x | 0, C(theta)) p(theta).

Two moves are provided.  The joint move updates (x, theta) together: it
draws the noised-gradient auxiliary variable z at the current state, walks
theta, rebuilds the spectral decomposition under the proposed theta, and
proposes the latent state from the auxiliary-gradient kernel under the new
covariance.  Its acceptance ratio factorizes into the usual latent ratio
times an evidence ratio N(z | 0, C' + (delta/2) I) / N(z | 0, C + (delta/2) I)
and the hyperparameter prior ratio.  The Gibbs move updates theta alone by
Metropolis-Hastings against N(x | 0, C(theta)) p(theta).

With kappa = 0 the joint move skips the theta walk, the rebuild, and the
evidence terms entirely, reproducing the fixed-covariance auxiliary
gradient step bit for bit on a shared random stream.

Each proposed theta costs exactly one eigendecomposition; fixed-theta runs
perform none after initialization.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adaptation import (
    BASELINE_TARGET_RATE,
    GRADIENT_TARGET_RATE,
    MIN_BURN_IN,
    AdaptState,
    adapt_step,
)
from .samplers import (
    ChainState,
    SamplerKind,
    draw_noised_gradient_aux,
    init_chain_state,
    mh_accept,
    propose_given_noised_gradient_aux,
    step_agrad_z,
)
from .spectral import (
    DeltaOperators,
    OpCounter,
    SpectralPrior,
    build_delta_operators,
    eigendecompose_covariance,
    prior_logdet,
    prior_null_mask,
    to_spectral,
)
from .targets import TargetModel

logger = logging.getLogger(__name__)

DEFAULT_THETA_PRIOR_VARIANCE = 100.0
DEFAULT_LATENT_STEPS_PER_MOVE = 10


@dataclass(frozen=True)
class GaussianHyperPrior:
    """Independent Gaussian prior on the hyperparameter vector."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "variance", np.atleast_1d(np.asarray(self.variance, dtype=float)))
        if self.mean.shape != self.variance.shape:
            raise ValueError(
                f"prior mean shape {self.mean.shape} does not match variance shape {self.variance.shape}"
            )
        if (self.variance <= 0).any():
            raise ValueError("prior variances must be positive")

    @classmethod
    def diffuse(cls, dim: int, variance: float = DEFAULT_THETA_PRIOR_VARIANCE) -> "GaussianHyperPrior":
        return cls(mean=np.zeros(dim), variance=np.full(dim, float(variance)))

    def logpdf(self, theta: np.ndarray) -> float:
        diff = np.atleast_1d(theta) - self.mean
        return float(-0.5 * np.sum(np.log(2.0 * math.pi * self.variance) + diff**2 / self.variance))


@dataclass(frozen=True)
class HyperModel:
    """Covariance family C(theta) plus the hyperparameter prior."""

    build_covariance: Callable[[np.ndarray], np.ndarray]
    prior: GaussianHyperPrior


def log_evidence(z: np.ndarray, prior: SpectralPrior, delta: float, counter: OpCounter | None = None) -> float:
    """log N(z | 0, C + (delta/2) I) in the prior's eigenbasis.

    This is the marginal density of the noised-gradient auxiliary variable
    under the prior, the quantity whose ratio carries all theta dependence
    of the joint move beyond the latent factor.  Costs one matvec.
    """
    uz = to_spectral(prior, z, counter)
    var = prior.eigenvalues + 0.5 * delta
    return float(-0.5 * np.sum(np.log(2.0 * math.pi * var) + uz**2 / var))


def prior_state_logpdf(prior: SpectralPrior, ux: np.ndarray) -> float:
    """log N(x | 0, C) from spectral coordinates, -inf when x leaves the support.

    Degenerate covariances use the pseudo-density on their range; a state
    with non-negligible mass in a null direction has zero density, which a
    Metropolis move treats as a rejection rather than an error.
    """
    null = prior_null_mask(prior)
    if null.any():
        scale = max(1.0, float(np.abs(ux).max()))
        if float(np.abs(ux[null]).max()) > 1e-8 * scale:
            return -math.inf
    keep = ~null
    rank = int(keep.sum())
    quad = float(np.sum(ux[keep] ** 2 / prior.eigenvalues[keep]))
    return -0.5 * (rank * math.log(2.0 * math.pi) + prior_logdet(prior) + quad)


@dataclass(frozen=True)
class ThetaStepResult:
    """Outcome of one hyperparameter move.

    For the joint move the total log-ratio is exactly
    latent_log_ratio + theta_log_ratio; the Gibbs move has no latent factor.
    """

    accepted: bool
    theta_proposal: np.ndarray
    latent_log_ratio: float
    theta_log_ratio: float


class HyperChain:
    """A chain over (x, theta): auxiliary-gradient latent steps plus theta moves.

    ``mode`` selects how theta moves: "joint" proposes (x, theta) together,
    "gibbs" updates theta alone between latent sweeps.  ``kappa`` is the
    theta random-walk variance; zero disables theta moves (the chain then
    matches a fixed-covariance latent chain exactly).
    """

    def __init__(
        self,
        model: HyperModel,
        target: TargetModel,
        theta0: np.ndarray,
        rng: np.random.Generator,
        mode: str = "joint",
        delta: float = 1.0,
        kappa: float = 0.25,
        x0: np.ndarray | None = None,
        counter: OpCounter | None = None,
    ):
        if mode not in ("joint", "gibbs"):
            raise ValueError(f"mode must be 'joint' or 'gibbs', got {mode!r}")
        if kappa < 0 or not np.isfinite(kappa):
            raise ValueError(f"kappa must be finite and nonnegative, got {kappa!r}")
        self.model = model
        self.mode = mode
        self.target = target
        self.rng = rng
        self.kappa = float(kappa)
        self.theta = np.atleast_1d(np.array(theta0, dtype=float, copy=True))
        if self.theta.shape != self.model.prior.mean.shape:
            raise ValueError(
                f"theta0 shape {self.theta.shape} does not match prior shape {self.model.prior.mean.shape}"
            )
        self.counter = counter if counter is not None else OpCounter()
        self.prior = eigendecompose_covariance(model.build_covariance(self.theta), counter=self.counter)
        self.ops = build_delta_operators(self.prior, delta)
        if x0 is None:
            x0 = np.zeros(self.prior.dimension)
        self.state: ChainState = init_chain_state(
            SamplerKind.AGRAD_Z, x0, self.prior, self.ops, target, self.counter
        )
        self.theta_accept_count = 0
        self.theta_step_count = 0

    @property
    def delta(self) -> float:
        return self.ops.delta

    @property
    def theta_acceptance_rate(self) -> float:
        return self.theta_accept_count / self.theta_step_count if self.theta_step_count else 0.0

    def set_delta(self, delta: float) -> None:
        self.ops = build_delta_operators(self.prior, delta)

    def latent_step(self) -> bool:
        """One fixed-theta auxiliary gradient transition."""
        return step_agrad_z(self.state, self.prior, self.ops, self.target, self.rng).accepted

    def theta_step(self) -> ThetaStepResult:
        if self.mode == "joint":
            return step_joint_x_theta(self)
        return step_gibbs_theta(self)


def _propose_theta(chain: HyperChain) -> tuple[np.ndarray, SpectralPrior | None, DeltaOperators | None]:
    """Random-walk theta and decompose its covariance; None prior means reject."""
    theta_prop = chain.theta + math.sqrt(chain.kappa) * chain.rng.standard_normal(chain.theta.shape[0])
    try:
        cov = chain.model.build_covariance(theta_prop)
        new_prior = eigendecompose_covariance(cov, counter=chain.counter)
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("rejecting hyperparameter proposal %s: %s", theta_prop, exc)
        return theta_prop, None, None
    return theta_prop, new_prior, build_delta_operators(new_prior, chain.ops.delta)


def step_joint_x_theta(chain: HyperChain) -> ThetaStepResult:
    """Propose (x, theta) together through the auxiliary variable z.

    Draw z at the current state, walk theta, rebuild the decomposition for
    the proposed covariance (exactly one factorization), propose the latent
    state from the auxiliary-gradient kernel under the new covariance, and
    accept both with the product of the latent ratio, the z-evidence ratio,
    and the hyperparameter prior ratio.  With kappa = 0 the theta leg is
    skipped and the move reduces to the plain latent step on an identical
    random stream.
    """
    state = chain.state
    rng = chain.rng
    z = draw_noised_gradient_aux(state, chain.ops.delta, rng)

    if chain.kappa > 0.0:
        theta_prop, new_prior, new_ops = _propose_theta(chain)
        if new_prior is None:
            state.step_count += 1
            chain.theta_step_count += 1
            return ThetaStepResult(False, theta_prop, -math.inf, -math.inf)
        y, f_y, grad_y, latent_ratio = propose_given_noised_gradient_aux(
            state, new_prior, new_ops, chain.target, rng, z
        )
        theta_ratio = (
            log_evidence(z, new_prior, new_ops.delta, chain.counter)
            - log_evidence(z, chain.prior, chain.ops.delta, chain.counter)
            + chain.model.prior.logpdf(theta_prop)
            - chain.model.prior.logpdf(chain.theta)
        )
        total = latent_ratio + theta_ratio
    else:
        theta_prop, new_prior, new_ops = chain.theta, chain.prior, chain.ops
        y, f_y, grad_y, latent_ratio = propose_given_noised_gradient_aux(
            state, chain.prior, chain.ops, chain.target, rng, z
        )
        theta_ratio = 0.0
        total = latent_ratio

    accepted = mh_accept(total, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.accept_count += 1
        chain.theta = theta_prop
        chain.prior = new_prior
        chain.ops = new_ops
        chain.theta_accept_count += 1
    state.step_count += 1
    chain.theta_step_count += 1
    return ThetaStepResult(accepted, theta_prop, latent_ratio, theta_ratio)


def step_gibbs_theta(chain: HyperChain) -> ThetaStepResult:
    """Metropolis update of theta alone against N(x | 0, C(theta)) p(theta).

    The latent state never moves here; proposals whose covariance loses the
    support of the current x are rejected through a -inf density rather
    than raised.  Costs one factorization and two matvecs per proposal.
    """
    state = chain.state
    if chain.kappa > 0.0:
        theta_prop, new_prior, new_ops = _propose_theta(chain)
        if new_prior is None:
            chain.theta_step_count += 1
            return ThetaStepResult(False, theta_prop, 0.0, -math.inf)
        lp_new = prior_state_logpdf(new_prior, to_spectral(new_prior, state.x, chain.counter))
        lp_old = prior_state_logpdf(chain.prior, to_spectral(chain.prior, state.x, chain.counter))
        theta_ratio = (
            lp_new - lp_old + chain.model.prior.logpdf(theta_prop) - chain.model.prior.logpdf(chain.theta)
        )
    else:
        theta_prop, new_prior, new_ops = chain.theta, chain.prior, chain.ops
        theta_ratio = 0.0

    accepted = mh_accept(theta_ratio, chain.rng)
    if accepted:
        chain.theta = theta_prop
        chain.prior = new_prior
        chain.ops = new_ops
        chain.theta_accept_count += 1
    chain.theta_step_count += 1
    return ThetaStepResult(accepted, theta_prop, 0.0, theta_ratio)


@dataclass
class HyperRunResult:
    """Samples and tuning outcome of a hyperparameter-learning run."""

    theta_samples: np.ndarray
    x_samples: np.ndarray
    delta: float
    kappa: float
    latent_acceptance_rate: float
    theta_acceptance_rate: float
    counter: OpCounter
    warnings: list[str] = field(default_factory=list)


def run_hyper_chain(
    model: HyperModel,
    target: TargetModel,
    theta0: np.ndarray,
    rng: np.random.Generator,
    mode: str = "joint",
    burn_in: int = 2000,
    collect: int = 2000,
    latent_steps_per_move: int | None = DEFAULT_LATENT_STEPS_PER_MOVE,
    delta: float = 1.0,
    kappa: float = 0.25,
    adapt: bool = True,
    x0: np.ndarray | None = None,
) -> HyperRunResult:
    """Run a hyperparameter-learning chain and return (theta, x) samples.

    One sweep is ``latent_steps_per_move`` fixed-theta latent transitions
    followed by one theta move; ``latent_steps_per_move=None`` keeps theta
    fixed forever.  ``burn_in`` and ``collect`` count sweeps; one (theta, x)
    sample is recorded per collected sweep.  During burn-in, delta adapts on
    the latent acceptances toward 0.55 and kappa on the theta-move
    acceptances toward 0.25; both freeze afterwards.
    """
    if burn_in < MIN_BURN_IN:
        raise ValueError(f"burn_in must be at least {MIN_BURN_IN}, got {burn_in!r}")
    if collect < 1:
        raise ValueError(f"collect must be at least 1, got {collect!r}")
    r_steps = latent_steps_per_move
    if r_steps is not None and r_steps < 0:
        raise ValueError(f"latent_steps_per_move must be nonnegative or None, got {r_steps!r}")

    chain = HyperChain(model, target, theta0, rng, mode=mode, delta=delta, kappa=kappa, x0=x0)
    delta_ctl = AdaptState(log_delta=math.log(chain.delta), target_rate=GRADIENT_TARGET_RATE)
    kappa_ctl = (
        AdaptState(log_delta=math.log(chain.kappa), target_rate=BASELINE_TARGET_RATE)
        if chain.kappa > 0.0
        else None
    )

    def sweep(adapting: bool) -> None:
        for _ in range(r_steps if r_steps is not None else 1):
            accepted = chain.latent_step()
            if adapting:
                adapt_step(delta_ctl, accepted)
                if delta_ctl.delta != chain.delta:
                    chain.set_delta(delta_ctl.delta)
        if r_steps is None:
            return
        result = chain.theta_step()
        if adapting and kappa_ctl is not None:
            adapt_step(kappa_ctl, result.accepted)
            chain.kappa = kappa_ctl.delta

    for _ in range(burn_in):
        sweep(adapting=adapt)
    delta_ctl.frozen = True
    if kappa_ctl is not None:
        kappa_ctl.frozen = True

    theta_samples = np.empty((collect, chain.theta.shape[0]))
    x_samples = np.empty((collect, chain.prior.dimension))
    chain.state.accept_count = 0
    chain.state.step_count = 0
    chain.theta_accept_count = 0
    chain.theta_step_count = 0
    for t in range(collect):
        sweep(adapting=False)
        theta_samples[t] = chain.theta
        x_samples[t] = chain.state.x

    run_warnings: list[str] = []
    rate = chain.state.acceptance_rate
    if chain.state.step_count and (rate == 0.0 or rate == 1.0):
        run_warnings.append(f"latent acceptance stuck at {rate:.0f} during collection")
    return HyperRunResult(
        theta_samples=theta_samples,
        x_samples=x_samples,
        delta=chain.delta,
        kappa=chain.kappa,
        latent_acceptance_rate=rate,
        theta_acceptance_rate=chain.theta_acceptance_rate,
        counter=chain.counter,
        warnings=run_warnings,
    )
