"""Seeded generation of ground truth, episodic designs and noisy responses.

The design model draws each episode's activations as independent Bernoulli
variables, one per candidate coalition, then enforces the per-episode cap on
active coalitions by uniform thinning: when more than ``row_cap`` coalitions
fire, a uniformly random subset of ``row_cap`` of them is retained. Thinning
keeps episodes i.i.d. and is exchangeable across coalitions of equal
activation probability.

Columns are rescaled to ``||X_j||^2 = T`` *before* the response is computed,
so the normalised design is the one every estimator sees. Coalitions that
were never activated are left as zero columns and reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .model import CoalitionUniverse, EpisodeBatch, GroundTruth
from .rng import generator

SIGN_MODES = ("all_positive", "rademacher")
NOISE_DISTRIBUTIONS = ("gaussian", "bounded_uniform")


@dataclass(frozen=True)
class DesignConfig:
    """Parameters of the episodic activation design.

    ``activation_probs`` may be a scalar (shared by all coalitions) or a
    length-m vector with entries in (0, 1]. ``row_cap`` bounds the number of
    active coalitions per episode.
    """

    m: int
    episodes: int
    activation_probs: Union[float, tuple[float, ...]]
    row_cap: int
    normalise_columns: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.episodes < 1:
            raise ConfigError("episodes must be positive")
        p = self.probs_vector()
        if np.any(p <= 0) or np.any(p > 1):
            raise ConfigError("activation probabilities must lie in (0, 1]")
        if not 1 <= self.row_cap <= self.m:
            raise ConfigError("row_cap must be in 1..m")

    def probs_vector(self) -> np.ndarray:
        p = np.asarray(self.activation_probs, dtype=float)
        if p.ndim == 0:
            return np.full(self.m, float(p))
        if p.shape != (self.m,):
            raise ConfigError("activation_probs must be scalar or length m")
        return p


@dataclass(frozen=True)
class NoiseConfig:
    """Noise scale and distribution for episode responses."""

    sigma: float
    distribution: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if self.distribution not in NOISE_DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {NOISE_DISTRIBUTIONS}")


def generate_theta(
    m: int,
    sparsity: int,
    theta_min: float,
    magnitude_cap: float,
    sign_mode: str = "all_positive",
    seed: int = 0,
    sigma: float = 0.0,
) -> GroundTruth:
    """Draw a sparse contribution vector.

    The support is a uniformly random size-``sparsity`` subset of the m
    indices; nonzero magnitudes are uniform on [theta_min, magnitude_cap];
    signs are all positive or independent Rademacher. Deterministic in seed.
    """
    if not 1 <= sparsity <= m:
        raise ConfigError("sparsity must be in 1..m")
    if theta_min <= 0:
        raise ConfigError("theta_min must be positive")
    if magnitude_cap < theta_min:
        raise ConfigError("magnitude_cap must be at least theta_min")
    if sign_mode not in SIGN_MODES:
        raise ConfigError(f"sign_mode must be one of {SIGN_MODES}")
    rng = generator(seed, "theta")
    support = np.sort(rng.choice(m, size=sparsity, replace=False))
    magnitudes = rng.uniform(theta_min, magnitude_cap, size=sparsity)
    if sign_mode == "rademacher":
        signs = rng.choice(np.array([-1.0, 1.0]), size=sparsity)
    else:
        signs = np.ones(sparsity)
    theta = np.zeros(m)
    theta[support] = signs * magnitudes
    return GroundTruth(
        theta_star=theta,
        support=tuple(int(j) for j in support),
        sparsity=sparsity,
        theta_min=theta_min,
        sigma=sigma,
    )


def generate_design(cfg: DesignConfig) -> tuple[np.ndarray, tuple[int, ...]]:
    """Draw the T x m activation matrix.

    Returns the matrix together with the indices of all-zero columns (never
    normalised, coefficient unidentifiable). Deterministic in ``cfg.seed``.
    """
    t, m = cfg.episodes, cfg.m
    rng = generator(cfg.seed, "design")
    p = cfg.probs_vector()
    x = (rng.random((t, m)) < p).astype(float)
    counts = x.sum(axis=1)
    for row in np.flatnonzero(counts > cfg.row_cap):
        active = np.flatnonzero(x[row])
        keep = rng.choice(active, size=cfg.row_cap, replace=False)
        x[row] = 0.0
        x[row, keep] = 1.0
    col_sq = np.einsum("ij,ij->j", x, x)
    zero_columns = tuple(int(j) for j in np.flatnonzero(col_sq == 0))
    if cfg.normalise_columns:
        scale = np.ones(m)
        nonzero = col_sq > 0
        scale[nonzero] = np.sqrt(t / col_sq[nonzero])
        x *= scale
    return x, zero_columns


def generate_noise(episodes: int, cfg: NoiseConfig) -> np.ndarray:
    """Draw i.i.d. mean-zero noise: Gaussian(0, sigma^2) or uniform on
    [-sigma*sqrt(3), sigma*sqrt(3)]. Deterministic in ``cfg.seed``."""
    if episodes < 1:
        raise ConfigError("episodes must be positive")
    rng = generator(cfg.seed, "noise")
    if cfg.sigma == 0:
        return np.zeros(episodes)
    if cfg.distribution == "gaussian":
        return rng.normal(0.0, cfg.sigma, size=episodes)
    half = cfg.sigma * np.sqrt(3.0)
    return rng.uniform(-half, half, size=episodes)


def synthesize_batch(
    universe: CoalitionUniverse,
    truth: GroundTruth,
    design_cfg: DesignConfig,
    noise_cfg: NoiseConfig,
) -> EpisodeBatch:
    """Generate a full episode batch with ``Y = X theta* + eps`` exact.

    The realised noise is stored on the batch for diagnostics.
    """
    if design_cfg.m != universe.m:
        raise DimensionMismatchError("design config m differs from universe size")
    if truth.m != universe.m:
        raise DimensionMismatchError("truth vector length differs from universe size")
    x, zero_columns = generate_design(design_cfg)
    signal = x @ truth.theta_star
    y = signal + generate_noise(design_cfg.episodes, noise_cfg)
    # Store the noise as the exact float residual so Y - X theta* == eps
    # bit-for-bit (the drawn noise differs from it by at most one rounding).
    eps = y - signal
    if not np.array_equal(y - x @ truth.theta_star, eps):
        raise AssertionError("stored noise does not reproduce Y - X theta* bit-exactly")
    return EpisodeBatch(
        design=x,
        response=y,
        noise=eps,
        column_normalised=design_cfg.normalise_columns,
        zero_columns=zero_columns,
    )
