"""Likelihood models and prior covariance kernels.

A target model exposes the log-likelihood term f(x) of the latent Gaussian
model pi(x) proportional to exp{f(x)} N(x | 0, C) together with its gradient.
Both are returned by a single ``evaluate`` call since every model here shares
intermediate quantities between the two.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
from scipy.special import expit, logsumexp


class TargetModel(ABC):
    """Log-likelihood f and gradient for a latent Gaussian model."""

    dimension: int

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Return (f(x), grad f(x))."""

    def log_likelihood(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]


class ConstantTarget(TargetModel):
    """f identically zero; the posterior is the prior.  Used by tests."""

    def __init__(self, dimension: int):
        self.dimension = int(dimension)

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return 0.0, np.zeros_like(x)


class GaussianRegression(TargetModel):
    """Gaussian observations y_i ~ N(x_i, noise_variance)."""

    def __init__(self, y: np.ndarray, noise_variance: float):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise ValueError(f"y must be a vector, got shape {y.shape}")
        if noise_variance <= 0.0:
            raise ValueError(f"noise_variance must be positive, got {noise_variance!r}")
        self.y = y
        self.noise_variance = float(noise_variance)
        self.dimension = y.shape[0]
        self._const = -0.5 * self.dimension * np.log(2.0 * np.pi * self.noise_variance)

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        resid = self.y - x
        f = self._const - 0.5 * float(resid @ resid) / self.noise_variance
        return f, resid / self.noise_variance


class BernoulliLogit(TargetModel):
    """Binary labels y_i ~ Bernoulli(sigmoid(x_i)).

    Log terms are computed through log(sigmoid(.)) = -log(1 + exp(-.)) so
    that large |x_i| never overflows.
    """

    def __init__(self, labels: np.ndarray):
        labels = np.asarray(labels, dtype=float)
        if labels.ndim != 1:
            raise ValueError(f"labels must be a vector, got shape {labels.shape}")
        if not np.isin(labels, (0.0, 1.0)).all():
            raise ValueError("labels must be 0/1")
        self.labels = labels
        self.dimension = labels.shape[0]

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        # log sigmoid(x) = -logaddexp(0, -x); log(1 - sigmoid(x)) = -logaddexp(0, x)
        f = float(-(self.labels @ np.logaddexp(0.0, -x)) - ((1.0 - self.labels) @ np.logaddexp(0.0, x)))
        return f, self.labels - expit(x)


class PoissonCounts(TargetModel):
    """Grid counts y_j ~ Poisson(exposure * exp(x_j + offset)).

    Models a log Gaussian Cox process on a regular grid: ``exposure`` is the
    cell area and ``offset`` the constant log-intensity shift.  Counts are
    stored flattened in row-major order.  The Poisson y! normalizer is
    dropped; it does not depend on x.
    """

    def __init__(self, counts: np.ndarray, exposure: float, offset: float):
        counts = np.asarray(counts, dtype=float)
        if counts.ndim == 2:
            counts = counts.reshape(-1)
        if counts.ndim != 1:
            raise ValueError(f"counts must be a vector or matrix, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        if exposure <= 0.0:
            raise ValueError(f"exposure must be positive, got {exposure!r}")
        self.counts = counts
        self.exposure = float(exposure)
        self.offset = float(offset)
        self.dimension = counts.shape[0]

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        rate = self.exposure * np.exp(x + self.offset)
        f = float(self.counts @ (x + self.offset) - rate.sum())
        return f, self.counts - rate


class CategoricalSoftmax(TargetModel):
    """Multiclass labels y_i ~ Categorical(softmax over classes).

    The latent vector stacks one length-n block per class (class-major), so
    ``dimension`` is n_classes * n_points.  Entry (k, i) of the gradient is
    1{y_i = k} - softmax_k(x_:,i), flattened class-major to match.
    """

    def __init__(self, labels: np.ndarray, n_classes: int):
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise ValueError(f"labels must be a vector, got shape {labels.shape}")
        labels = labels.astype(int)
        if n_classes < 2:
            raise ValueError(f"n_classes must be at least 2, got {n_classes!r}")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError("labels must lie in [0, n_classes)")
        self.labels = labels
        self.n_classes = int(n_classes)
        self.n_points = labels.shape[0]
        self.dimension = self.n_classes * self.n_points
        self._onehot = np.zeros((self.n_classes, self.n_points))
        self._onehot[labels, np.arange(self.n_points)] = 1.0

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        scores = x.reshape(self.n_classes, self.n_points)
        lse = logsumexp(scores, axis=0)
        f = float(scores[self.labels, np.arange(self.n_points)].sum() - lse.sum())
        probs = np.exp(scores - lse)
        return f, (self._onehot - probs).reshape(-1)


def squared_exponential_kernel(
    points: np.ndarray, variance: float = 1.0, lengthscale2: float = 1.0
) -> np.ndarray:
    """Squared-exponential covariance on input locations.

    c(s_i, s_j) = variance * exp(-||s_i - s_j||^2 / (2 * lengthscale2)).
    ``points`` is (n,) or (n, d).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if variance <= 0.0 or lengthscale2 <= 0.0:
        raise ValueError("variance and lengthscale2 must be positive")
    sq = np.sum(points**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.maximum(d2, 0.0, out=d2)
    return variance * np.exp(-0.5 * d2 / lengthscale2)


def grid_exponential_kernel(
    side: int, variance: float, beta: float, scale: float | None = None
) -> np.ndarray:
    """Exponential-decay covariance between cells of a side x side grid.

    k((i,j), (i',j')) = variance * exp(-dist((i,j),(i',j')) / (scale * beta))
    where dist is Euclidean in grid index units and ``scale`` defaults to the
    grid side, so that refining the grid keeps the physical correlation
    length fixed.  Cells are ordered row-major to match PoissonCounts.
    """
    if side < 1:
        raise ValueError(f"side must be at least 1, got {side!r}")
    if variance <= 0.0 or beta <= 0.0:
        raise ValueError("variance and beta must be positive")
    if scale is None:
        scale = float(side)
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale!r}")
    idx = np.arange(side)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    coords = np.column_stack([ii.reshape(-1), jj.reshape(-1)]).astype(float)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    return variance * np.exp(-dist / (scale * beta))
