"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from sparse_csg import EpisodeBatch


def normalized_gaussian_design(t: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Dense Gaussian design with every column rescaled to ||X_j||^2 = T."""
    x = rng.normal(size=(t, m))
    x *= np.sqrt(t) / np.linalg.norm(x, axis=0)
    return x


def orthogonal_design(t: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly orthogonal columns with ||X_j||^2 = T (requires t >= m)."""
    assert t >= m
    q, _ = np.linalg.qr(rng.normal(size=(t, m)))
    return q * np.sqrt(t)


def batch_from(x: np.ndarray, theta: np.ndarray, noise: np.ndarray | None = None,
               normalised: bool = True) -> EpisodeBatch:
    eps = np.zeros(x.shape[0]) if noise is None else noise
    return EpisodeBatch(
        design=x,
        response=x @ theta + eps,
        noise=eps,
        column_normalised=normalised,
    )
