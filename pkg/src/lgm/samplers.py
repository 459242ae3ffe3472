"""One-step transition kernels for latent Gaussian model posteriors.

Seven kernels share the target pi(x) proportional to exp{f(x)} N(x | 0, C)
and the spectral machinery of :mod:`lgm.spectral`:

  agrad-z   auxiliary gradient sampler, noised-gradient auxiliary variable
  agrad-u   auxiliary gradient sampler, noised-state auxiliary variable
  mgrad     marginal gradient sampler (auxiliary variable integrated out)
  pcn       preconditioned Crank-Nicolson
  pcnl      preconditioned Crank-Nicolson Langevin
  pmala     preconditioned MALA (prior does not cancel in the ratio)
  ellipt    elliptical slice sampling

Each step costs a fixed number of basis matvecs, counted on the chain's
OpCounter: pcn and ellipt 1, agrad-z and pcnl 2, agrad-u, mgrad and pmala 3.
States carry exactly the caches their kernel promotes between steps, so
nothing is recomputed on acceptance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .spectral import (
    DeltaOperators,
    OpCounter,
    SpectralPrior,
    build_delta_operators,
    from_spectral,
    prior_quad_form,
    to_spectral,
)
from .targets import TargetModel

logger = logging.getLogger(__name__)

MAX_SLICE_SHRINKS = 100


class SamplerKind(str, Enum):
    AGRAD_Z = "agrad-z"
    AGRAD_U = "agrad-u"
    MGRAD = "mgrad"
    PCN = "pcn"
    PCNL = "pcnl"
    PMALA = "pmala"
    ELLIPT = "ellipt"


DISPLAY_NAMES = {
    SamplerKind.AGRAD_Z: "aGrad-z",
    SamplerKind.AGRAD_U: "aGrad-u",
    SamplerKind.MGRAD: "mGrad",
    SamplerKind.PCN: "pCN",
    SamplerKind.PCNL: "pCNL",
    SamplerKind.PMALA: "pMALA",
    SamplerKind.ELLIPT: "Ellipt",
}

# Kernels whose proposals use grad f; they share the 0.55 acceptance target.
GRADIENT_KINDS = frozenset(
    {SamplerKind.AGRAD_Z, SamplerKind.AGRAD_U, SamplerKind.MGRAD, SamplerKind.PCNL, SamplerKind.PMALA}
)

# Basis matvecs consumed by one transition, per kernel.
MATVEC_BUDGET = {
    SamplerKind.AGRAD_Z: 2,
    SamplerKind.AGRAD_U: 3,
    SamplerKind.MGRAD: 3,
    SamplerKind.PCN: 1,
    SamplerKind.PCNL: 2,
    SamplerKind.PMALA: 3,
    SamplerKind.ELLIPT: 1,
}


@dataclass
class ChainState:
    """Current position plus the caches its kernel keeps coherent.

    ``ux`` and ``ugrad_x`` are spectral coordinates of x and grad f(x);
    ``prop_mean_spec`` and ``ratio_anchor_spec`` are the two precomputed
    spectral vectors of the marginal kernel (its proposal mean and the
    anchor appearing in its acceptance ratio).  Only the caches a kernel
    needs are populated; the rest stay None.
    """

    x: np.ndarray
    f_x: float
    grad_x: np.ndarray
    ux: np.ndarray | None = None
    ugrad_x: np.ndarray | None = None
    prop_mean_spec: np.ndarray | None = None
    ratio_anchor_spec: np.ndarray | None = None
    accept_count: int = 0
    step_count: int = 0
    likelihood_evals: int = 0
    counter: OpCounter = field(default_factory=OpCounter)

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.step_count if self.step_count else 0.0


@dataclass(frozen=True)
class StepResult:
    accepted: bool
    proposal: np.ndarray
    log_ratio: float


def mh_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(log_ratio)).

    Compares against a log-uniform draw (one Exp(1) variate), so ratios far
    below underflow still behave correctly.  NaN and +inf ratios signal a
    broken proposal and are rejected with a diagnostic; they must never be
    silently accepted.
    """
    if math.isnan(log_ratio) or log_ratio == math.inf:
        logger.warning("rejecting proposal with non-finite MH log-ratio %r", log_ratio)
        return False
    return -rng.exponential() < log_ratio


def init_chain_state(
    kind: SamplerKind,
    x0: np.ndarray,
    prior: SpectralPrior,
    ops: DeltaOperators | None,
    target: TargetModel,
    counter: OpCounter | None = None,
) -> ChainState:
    """Evaluate the target at x0 and populate the caches ``kind`` maintains."""
    kind = SamplerKind(kind)
    x0 = np.array(x0, dtype=float, copy=True)
    if x0.shape != (prior.dimension,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({prior.dimension},)")
    counter = counter if counter is not None else OpCounter()
    f0, g0 = target.evaluate(x0)
    if not np.isfinite(f0):
        raise ValueError(f"initial state has non-finite log-likelihood {f0!r}")
    state = ChainState(x=x0, f_x=f0, grad_x=g0, counter=counter, likelihood_evals=1)
    if kind in (SamplerKind.AGRAD_U, SamplerKind.PCNL):
        state.ugrad_x = to_spectral(prior, g0, counter)
    elif kind in (SamplerKind.MGRAD, SamplerKind.PMALA):
        state.ux = to_spectral(prior, x0, counter)
        state.ugrad_x = to_spectral(prior, g0, counter)
        if kind is SamplerKind.MGRAD:
            refresh_step_size_caches(state, kind, ops)
    return state


def refresh_step_size_caches(state: ChainState, kind: SamplerKind, ops: DeltaOperators | None) -> None:
    """Rebuild the O(n) cached vectors that depend on the step size.

    Only the marginal kernel stores such vectors.  Must be called after
    every step-size change; costs no matvecs.
    """
    if SamplerKind(kind) is not SamplerKind.MGRAD:
        return
    if ops is None:
        raise ValueError("marginal kernel requires delta operators")
    if state.ux is None or state.ugrad_x is None:
        raise ValueError("marginal kernel state is missing spectral caches")
    two_over_delta = 2.0 / ops.delta
    state.prop_mean_spec = ops.aux_var * (two_over_delta * state.ux + state.ugrad_x)
    state.ratio_anchor_spec = ops.aux_var * (two_over_delta * state.ux + 0.5 * state.ugrad_x)


def _guarded_ratio(f_y: float, grad_y: np.ndarray, extra: float) -> float:
    """Assemble a log-ratio, mapping any non-finite ingredient to -inf."""
    if not np.isfinite(f_y) or not np.isfinite(grad_y).all() or not np.isfinite(extra):
        return -math.inf
    return f_y + extra


def _aux_grad_g_term(z: np.ndarray, v: np.ndarray, grad_v: np.ndarray, delta: float) -> float:
    # g(z, v) = (z - v - (delta/4) grad f(v))^T grad f(v)
    return float((z - v - 0.25 * delta * grad_v) @ grad_v)


def draw_noised_gradient_aux(state: ChainState, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw z ~ N(x + (delta/2) grad f(x), (delta/2) I)."""
    noise = rng.standard_normal(state.x.shape[0])
    return state.x + 0.5 * delta * state.grad_x + math.sqrt(0.5 * delta) * noise


def propose_given_noised_gradient_aux(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
    z: np.ndarray,
) -> tuple[np.ndarray, float, np.ndarray, float]:
    """Propose y | z and return (y, f_y, grad_y, latent log-ratio).

    The proposal is N((2/delta) A z, A) realized spectrally; the log-ratio
    term is f(y) - f(x) + g(z,y) - g(z,x), which is the complete acceptance
    ratio when the prior covariance is held fixed.  Costs 2 matvecs.
    """
    delta = ops.delta
    uz = to_spectral(prior, (2.0 / delta) * z, state.counter)
    eta = rng.standard_normal(prior.dimension)
    sq = ops.sqrt_aux_var
    y = from_spectral(prior, sq * (sq * uz + eta), state.counter)
    f_y, grad_y = target.evaluate(y)
    state.likelihood_evals += 1
    extra = -state.f_x + _aux_grad_g_term(z, y, grad_y, delta) - _aux_grad_g_term(z, state.x, state.grad_x, delta)
    return y, f_y, grad_y, _guarded_ratio(f_y, grad_y, extra)


def step_agrad_z(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Auxiliary gradient step with the auxiliary variable z = x + (delta/2) grad + noise.

    Draw z, propose y ~ N((2/delta) A z, A), accept with
    exp{f(y) - f(x) + g(z,y) - g(z,x)}.  2 matvecs; promotes x, f, grad.
    """
    z = draw_noised_gradient_aux(state, ops.delta, rng)
    y, f_y, grad_y, log_ratio = propose_given_noised_gradient_aux(state, prior, ops, target, rng, z)
    accepted = mh_accept(log_ratio, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.accept_count += 1
    state.step_count += 1
    return StepResult(accepted, y, log_ratio)


def step_agrad_u(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Auxiliary gradient step with the noised-state auxiliary u = x + noise.

    Propose y ~ N((2/delta) A (u + (delta/2) grad f(x)), A); accept with
    exp{f(y) - f(x) + j(x,y,u) - j(y,x,u)} where
    j(x,y,u) = (x - (2/delta) A (u + (delta/4) grad f(y)))^T grad f(y).
    3 matvecs; promotes x, f, grad and the spectral gradient.
    """
    delta = ops.delta
    n = prior.dimension
    noise = rng.standard_normal(n)
    u = state.x + math.sqrt(0.5 * delta) * noise
    uu = to_spectral(prior, (2.0 / delta) * u, state.counter)

    eta = rng.standard_normal(n)
    y = from_spectral(prior, ops.aux_var * (uu + state.ugrad_x) + ops.sqrt_aux_var * eta, state.counter)
    f_y, grad_y = target.evaluate(y)
    state.likelihood_evals += 1
    ugrad_y = to_spectral(prior, grad_y, state.counter)

    j_fwd = float(state.x @ grad_y) - float((ops.aux_var * (uu + 0.5 * ugrad_y)) @ ugrad_y)
    j_bwd = float(y @ state.grad_x) - float((ops.aux_var * (uu + 0.5 * state.ugrad_x)) @ state.ugrad_x)
    log_ratio = _guarded_ratio(f_y, grad_y, -state.f_x + j_fwd - j_bwd)

    accepted = mh_accept(log_ratio, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.ugrad_x = ugrad_y
        state.accept_count += 1
    state.step_count += 1
    return StepResult(accepted, y, log_ratio)


def step_mgrad(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Marginal gradient step: the auxiliary variable is integrated out.

    Propose y ~ N((2/delta) A (x + (delta/2) grad f(x)), (2/delta) A^2 + A)
    from the cached spectral mean; accept with
    exp{f(y) - f(x) + h(x,y) - h(y,x)} where, spectrally,
    h(x,y) = (ux - anchor(y))^T (ratio_weight * ugrad_y).
    3 matvecs; promotes everything including the two cached vectors.
    """
    eta = rng.standard_normal(prior.dimension)
    y = from_spectral(prior, state.prop_mean_spec + ops.sqrt_marginal_var * eta, state.counter)
    f_y, grad_y = target.evaluate(y)
    state.likelihood_evals += 1
    uy = to_spectral(prior, y, state.counter)
    ugrad_y = to_spectral(prior, grad_y, state.counter)

    two_over_delta = 2.0 / ops.delta
    anchor_y = ops.aux_var * (two_over_delta * uy + 0.5 * ugrad_y)
    h_fwd = float((state.ux - anchor_y) @ (ops.ratio_weight * ugrad_y))
    h_bwd = float((uy - state.ratio_anchor_spec) @ (ops.ratio_weight * state.ugrad_x))
    log_ratio = _guarded_ratio(f_y, grad_y, -state.f_x + h_fwd - h_bwd)

    accepted = mh_accept(log_ratio, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.ux = uy
        state.ugrad_x = ugrad_y
        state.prop_mean_spec = ops.aux_var * (two_over_delta * uy + ugrad_y)
        state.ratio_anchor_spec = anchor_y
        state.accept_count += 1
    state.step_count += 1
    return StepResult(accepted, y, log_ratio)


def step_pcn(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Preconditioned Crank-Nicolson step.

    y = (2/(2+delta)) x + (sqrt(delta(delta+4))/(2+delta)) N(0, C); the
    proposal is reversible with respect to the prior, so the acceptance
    ratio is exp{f(y) - f(x)}.  1 matvec.
    """
    delta = ops.delta
    eta = rng.standard_normal(prior.dimension)
    shift = from_spectral(prior, prior.sqrt_eigenvalues * eta, state.counter)
    y = (2.0 / (2.0 + delta)) * state.x + (math.sqrt(delta * (delta + 4.0)) / (2.0 + delta)) * shift
    f_y, grad_y = target.evaluate(y)
    state.likelihood_evals += 1
    log_ratio = _guarded_ratio(f_y, grad_y, -state.f_x)

    accepted = mh_accept(log_ratio, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.accept_count += 1
    state.step_count += 1
    return StepResult(accepted, y, log_ratio)


def step_pcnl(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Preconditioned Crank-Nicolson Langevin step.

    Proposal N((2/(2+delta)) x + (delta/(2+delta)) C grad f(x),
    delta(delta+4)/(2+delta)^2 C); acceptance ratio
    exp{f(y) - f(x) + k(x,y) - k(y,x)} with

      k(x,y) = (2+delta)/(4+delta) (x - (2/(2+delta)) y)^T grad f(y)
               - delta/(2(delta+4)) grad f(y)^T C grad f(y).

    2 matvecs; promotes x, f, grad and the spectral gradient.
    """
    delta = ops.delta
    gamma = prior.eigenvalues
    rho = 2.0 / (2.0 + delta)
    eta = rng.standard_normal(prior.dimension)
    drift_and_noise = (delta / (2.0 + delta)) * (gamma * state.ugrad_x) + (
        math.sqrt(delta * (delta + 4.0)) / (2.0 + delta)
    ) * (prior.sqrt_eigenvalues * eta)
    y = rho * state.x + from_spectral(prior, drift_and_noise, state.counter)
    f_y, grad_y = target.evaluate(y)
    state.likelihood_evals += 1
    ugrad_y = to_spectral(prior, grad_y, state.counter)

    c_lin = (2.0 + delta) / (4.0 + delta)
    c_quad = delta / (2.0 * (delta + 4.0))
    k_fwd = c_lin * float((state.x - rho * y) @ grad_y) - c_quad * float(ugrad_y @ (gamma * ugrad_y))
    k_bwd = c_lin * float((y - rho * state.x) @ state.grad_x) - c_quad * float(
        state.ugrad_x @ (gamma * state.ugrad_x)
    )
    log_ratio = _guarded_ratio(f_y, grad_y, -state.f_x + k_fwd - k_bwd)

    accepted = mh_accept(log_ratio, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.ugrad_x = ugrad_y
        state.accept_count += 1
    state.step_count += 1
    return StepResult(accepted, y, log_ratio)


def step_pmala(
    state: ChainState,
    prior: SpectralPrior,
    ops: DeltaOperators,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Preconditioned MALA step.

    Proposal N((1 - delta/2) x + (delta/2) C grad f(x), delta C).  The prior
    does not cancel here, so the full ratio carries the prior quadratic
    forms, computed with a pseudo-inverse that skips null eigendirections
    (a state with mass in a null direction is an error).  Any delta > 0 is
    accepted; the drift is a contraction only for delta < 2, which covers
    every tuned value seen in practice.  3 matvecs.
    """
    delta = ops.delta
    gamma = prior.eigenvalues
    keep = gamma > 1e-10 * max(gamma[0], 0.0)
    a = 1.0 - 0.5 * delta
    eta = rng.standard_normal(prior.dimension)
    drift_and_noise = 0.5 * delta * (gamma * state.ugrad_x) + math.sqrt(delta) * (
        prior.sqrt_eigenvalues * eta
    )
    y = a * state.x + from_spectral(prior, drift_and_noise, state.counter)
    f_y, grad_y = target.evaluate(y)
    state.likelihood_evals += 1
    uy = to_spectral(prior, y, state.counter)
    ugrad_y = to_spectral(prior, grad_y, state.counter)

    prior_term = -0.5 * (prior_quad_form(prior, uy) - prior_quad_form(prior, state.ux))
    g = gamma[keep]
    fwd = uy[keep] - a * state.ux[keep] - 0.5 * delta * g * state.ugrad_x[keep]
    bwd = state.ux[keep] - a * uy[keep] - 0.5 * delta * g * ugrad_y[keep]
    proposal_term = -(float(bwd @ (bwd / g)) - float(fwd @ (fwd / g))) / (2.0 * delta)
    log_ratio = _guarded_ratio(f_y, grad_y, -state.f_x + prior_term + proposal_term)

    accepted = mh_accept(log_ratio, rng)
    if accepted:
        state.x = y
        state.f_x = f_y
        state.grad_x = grad_y
        state.ux = uy
        state.ugrad_x = ugrad_y
        state.accept_count += 1
    state.step_count += 1
    return StepResult(accepted, y, log_ratio)


def step_ellipt(
    state: ChainState,
    prior: SpectralPrior,
    target: TargetModel,
    rng: np.random.Generator,
) -> StepResult:
    """Elliptical slice sampling step.

    Draw nu ~ N(0, C) (1 matvec) and a log-height below f(x), then shrink an
    angle bracket [theta - 2pi, theta] toward zero until
    f(x cos theta + nu sin theta) exceeds the height.  Never rejects; the
    number of likelihood evaluations per step is variable and recorded on
    the state.  A step that fails to terminate within 100 shrinks keeps the
    current state and logs a warning (unreachable for continuous f).
    """
    eta = rng.standard_normal(prior.dimension)
    nu = from_spectral(prior, prior.sqrt_eigenvalues * eta, state.counter)
    log_height = state.f_x - rng.exponential()

    theta = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = theta - 2.0 * math.pi, theta
    for _ in range(MAX_SLICE_SHRINKS):
        candidate = state.x * math.cos(theta) + nu * math.sin(theta)
        f_c, grad_c = target.evaluate(candidate)
        state.likelihood_evals += 1
        if np.isfinite(f_c) and f_c > log_height:
            state.x = candidate
            state.f_x = f_c
            state.grad_x = grad_c
            state.accept_count += 1
            state.step_count += 1
            return StepResult(True, candidate, 0.0)
        if theta < 0.0:
            lo = theta
        else:
            hi = theta
        theta = rng.uniform(lo, hi)
    logger.warning("elliptical slice bracket failed to shrink within %d evaluations; keeping state", MAX_SLICE_SHRINKS)
    state.step_count += 1
    return StepResult(False, state.x.copy(), 0.0)


_STEP_FUNCS = {
    SamplerKind.AGRAD_Z: step_agrad_z,
    SamplerKind.AGRAD_U: step_agrad_u,
    SamplerKind.MGRAD: step_mgrad,
    SamplerKind.PCN: step_pcn,
    SamplerKind.PCNL: step_pcnl,
    SamplerKind.PMALA: step_pmala,
}

DEFAULT_INITIAL_DELTA = {
    SamplerKind.AGRAD_Z: 1.0,
    SamplerKind.AGRAD_U: 1.0,
    SamplerKind.MGRAD: 1.0,
    SamplerKind.PCN: 0.01,
    SamplerKind.PCNL: 0.01,
    SamplerKind.PMALA: 0.01,
}


class Chain:
    """A single chain: one kernel, one target, one RNG, mutable state.

    ``delta`` defaults per kernel (1.0 for the auxiliary/marginal gradient
    kernels, 0.01 for the small-step baselines); the elliptical slice kernel
    has no step size.  ``set_delta`` rebuilds the O(n) diagonal operators and
    cached vectors without touching the basis.
    """

    def __init__(
        self,
        kind: SamplerKind | str,
        prior: SpectralPrior,
        target: TargetModel,
        rng: np.random.Generator,
        delta: float | None = None,
        x0: np.ndarray | None = None,
        counter: OpCounter | None = None,
    ):
        self.kind = SamplerKind(kind)
        if target.dimension != prior.dimension:
            raise ValueError(
                f"target dimension {target.dimension} does not match prior dimension {prior.dimension}"
            )
        self.prior = prior
        self.target = target
        self.rng = rng
        if x0 is None:
            x0 = np.zeros(prior.dimension)
        if self.kind is SamplerKind.ELLIPT:
            self.ops = None
        else:
            if delta is None:
                delta = DEFAULT_INITIAL_DELTA[self.kind]
            self.ops = build_delta_operators(prior, delta)
        self.state = init_chain_state(self.kind, x0, prior, self.ops, target, counter)

    @property
    def delta(self) -> float | None:
        return self.ops.delta if self.ops is not None else None

    @property
    def counter(self) -> OpCounter:
        return self.state.counter

    @property
    def acceptance_rate(self) -> float:
        return self.state.acceptance_rate

    def set_delta(self, delta: float) -> None:
        if self.kind is SamplerKind.ELLIPT:
            return
        self.ops = build_delta_operators(self.prior, delta)
        refresh_step_size_caches(self.state, self.kind, self.ops)

    def step(self) -> StepResult:
        if self.kind is SamplerKind.ELLIPT:
            return step_ellipt(self.state, self.prior, self.target, self.rng)
        return _STEP_FUNCS[self.kind](self.state, self.prior, self.ops, self.target, self.rng)

    def run(self, n_steps: int) -> int:
        """Advance n_steps transitions; return the number accepted."""
        accepted = 0
        for _ in range(n_steps):
            accepted += self.step().accepted
        return accepted

    def sample(self, n_samples: int, thin: int = 1) -> np.ndarray:
        """Collect n_samples states, keeping every ``thin``-th transition."""
        if thin < 1:
            raise ValueError(f"thin must be at least 1, got {thin!r}")
        out = np.empty((n_samples, self.prior.dimension))
        for i in range(n_samples):
            for _ in range(thin):
                self.step()
            out[i] = self.state.x
        return out


def check_state_coherence(
    chain_or_state,
    prior: SpectralPrior | None = None,
    target: TargetModel | None = None,
    ops: DeltaOperators | None = None,
    kind: SamplerKind | None = None,
    atol: float = 1e-9,
) -> None:
    """Recompute every populated cache from x and compare.

    Debugging aid used by the test suite; raises AssertionError on drift.
    """
    if isinstance(chain_or_state, Chain):
        state = chain_or_state.state
        prior = chain_or_state.prior
        target = chain_or_state.target
        ops = chain_or_state.ops
        kind = chain_or_state.kind
    else:
        state = chain_or_state
    f, g = target.evaluate(state.x)
    scale = max(1.0, abs(state.f_x))
    assert abs(f - state.f_x) <= atol * scale, "cached f(x) is stale"
    assert np.allclose(g, state.grad_x, atol=atol), "cached grad f(x) is stale"
    if state.ux is not None:
        assert np.allclose(prior.basis.T @ state.x, state.ux, atol=atol), "cached U^T x is stale"
    if state.ugrad_x is not None:
        assert np.allclose(prior.basis.T @ state.grad_x, state.ugrad_x, atol=atol), "cached U^T grad is stale"
    if state.prop_mean_spec is not None:
        expect = ops.aux_var * ((2.0 / ops.delta) * state.ux + state.ugrad_x)
        assert np.allclose(expect, state.prop_mean_spec, atol=atol), "cached proposal mean is stale"
    if state.ratio_anchor_spec is not None:
        expect = ops.aux_var * ((2.0 / ops.delta) * state.ux + 0.5 * state.ugrad_x)
        assert np.allclose(expect, state.ratio_anchor_spec, atol=atol), "cached ratio anchor is stale"
