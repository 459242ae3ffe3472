"""Shared fixtures and numerical helpers for the test suite."""

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_spd(n: int, rng: np.random.Generator, spread: float = 10.0) -> np.ndarray:
    """Random symmetric positive definite matrix with eigenvalues in [1/spread, spread]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.exp(rng.uniform(-np.log(spread), np.log(spread), n))
    return (q * eigs) @ q.T


def make_singular_psd(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Random PSD matrix of the given rank (exactly n - rank zero eigenvalues)."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.zeros(n)
    eigs[:rank] = np.exp(rng.uniform(-1.0, 1.0, rank))
    return (q * eigs) @ q.T


def finite_difference_gradient(func, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        step = np.zeros_like(x, dtype=float)
        step[i] = h
        g[i] = (func(x + step) - func(x - step)) / (2.0 * h)
    return g
