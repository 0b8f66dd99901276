"""Design geometry and noise diagnostics the recovery guarantees condition on.

These quantities let experiments stratify results by whether the working
assumptions actually held on a given batch: mutual coherence (greedy pursuit),
restricted-eigenvalue health (lasso), Gram concentration, the noise-event
margin, and correlation separation along a pursuit trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionMismatchError, MissingNoiseError
from .estimators import BgcpIteration
from .model import EpisodeBatch, EstimateResult, GroundTruth
from .rng import generator


def mutual_coherence(x: np.ndarray) -> float:
    """Largest absolute cosine between two distinct columns.

    All-zero columns are excluded; at least two nonzero columns are needed.
    """
    x = np.asarray(x, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->j", x, x))
    keep = np.flatnonzero(norms > 0)
    if keep.size < 2:
        raise ConfigError("mutual coherence needs at least two nonzero columns")
    sub = x[:, keep]
    cos = (sub.T @ sub) / np.outer(norms[keep], norms[keep])
    np.fill_diagonal(cos, 0.0)
    return float(np.max(np.abs(cos)))


def empirical_gram(x: np.ndarray) -> np.ndarray:
    """(1/T) X^T X, symmetrised exactly."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 1:
        raise ConfigError("need at least one episode")
    gram = x.T @ x / x.shape[0]
    return (gram + gram.T) / 2.0


def gram_deviation(x: np.ndarray, sigma_pop: np.ndarray) -> float:
    """Elementwise sup-norm distance between the empirical Gram and a
    supplied population Gram."""
    sigma_pop = np.asarray(sigma_pop, dtype=float)
    gram = empirical_gram(x)
    if gram.shape != sigma_pop.shape:
        raise DimensionMismatchError("population Gram shape does not match the design")
    return float(np.max(np.abs(gram - sigma_pop)))


def re_certificate(
    x: np.ndarray,
    support: Sequence[int],
    alpha: float = 3.0,
    n_samples: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Lower certificate and sampled upper estimate of the restricted
    eigenvalue over the cone ``||u_Sc||_1 <= alpha * ||u_S||_1``.

    ``sampled`` is the minimum of sqrt(u' Gram u) over random cone directions
    normalised to ``||u_S||_2 = 1`` (always an upper bound on the true
    constant). ``lower`` is the sound certificate
    ``sqrt(max(0, lambda_min(Gram_SS) - (1+alpha)^2 K max|Gram_cross|))``
    obtained by splitting off the block-diagonal part of the Gram and
    bounding the cross-block quadratic form by its sup-norm times the squared
    l1 mass of a cone direction.
    """
    if alpha < 1:
        raise ConfigError("alpha must be at least 1")
    support = sorted(set(int(j) for j in support))
    if not support:
        raise ConfigError("support must be non-empty")
    gram = empirical_gram(np.asarray(x, dtype=float))
    m = gram.shape[0]
    comp = np.setdiff1d(np.arange(m), support)
    k = len(support)

    gram_ss = gram[np.ix_(support, support)]
    eigvals, eigvecs = scipy.linalg.eigh(gram_ss)
    lam_min = float(eigvals[0])
    cross = float(np.max(np.abs(gram[np.ix_(support, comp)]))) if comp.size else 0.0
    lower = float(np.sqrt(max(0.0, lam_min - (1 + alpha) ** 2 * k * cross)))

    # Deterministic in-cone direction with zero off-support mass: attains
    # lambda_min of the support block exactly.
    directions = [np.zeros(m)]
    directions[0][support] = eigvecs[:, 0]
    rng = generator(seed, "re_certificate")
    for _ in range(int(n_samples)):
        u = np.zeros(m)
        u_s = rng.normal(size=k)
        u_s /= np.linalg.norm(u_s)
        u[support] = u_s
        if comp.size:
            budget = rng.uniform(0.0, alpha * np.sum(np.abs(u_s)))
            n_off = int(rng.integers(1, comp.size + 1))
            coords = rng.choice(comp, size=n_off, replace=False)
            weights = rng.dirichlet(np.ones(n_off))
            signs = rng.choice(np.array([-1.0, 1.0]), size=n_off)
            u[coords] = budget * weights * signs
        directions.append(u)
    dirs = np.stack(directions)
    quads = np.einsum("ij,jk,ik->i", dirs, gram, dirs)
    sampled = float(np.sqrt(max(0.0, float(quads.min()))))
    return lower, sampled


class NoiseEvent(NamedTuple):
    max_corr: float
    margin: float
    event_holds: bool


def noise_event_margin(batch: EpisodeBatch, lam: float) -> NoiseEvent:
    """Whether the realised noise correlations stay below lambda/2.

    Requires the stored noise vector (simulation only). ``margin`` is
    ``lambda/2 - max_j |X_j' eps| / T``; the event holds when it is
    non-negative.
    """
    if batch.noise is None:
        raise MissingNoiseError("batch carries no stored noise vector")
    max_corr = float(np.max(np.abs(batch.design.T @ batch.noise)) / batch.n_episodes)
    margin = lam / 2.0 - max_corr
    return NoiseEvent(max_corr=max_corr, margin=margin, event_holds=margin >= 0.0)


@dataclass(frozen=True)
class CorrelationSeparation:
    """Separation of true vs false correlations at one pursuit iteration."""

    iteration: int
    min_true_corr: float
    max_false_corr: float
    separated: bool
    prefix_in_support: bool
    true_exhausted: bool


def correlation_profile(
    batch: EpisodeBatch,
    truth: GroundTruth,
    trace: Sequence[BgcpIteration],
) -> tuple[CorrelationSeparation, ...]:
    """Per-iteration minimum true and maximum false correlation magnitudes.

    The trace must carry full correlation vectors. ``prefix_in_support``
    reports whether the selections before each iteration all lie in the true
    support. With no false atoms the maximum is 0 by convention and
    separation holds; with no remaining true atoms the minimum is 0 and the
    iteration is flagged ``true_exhausted``.
    """
    true_set = set(truth.support)
    out = []
    picked: set[int] = set()
    for k, step in enumerate(trace):
        if step.correlations is None:
            raise ConfigError("trace does not carry correlation vectors; rerun with record_correlations")
        scores = np.abs(step.correlations)
        remaining = sorted(true_set - picked)
        false_idx = [j for j in range(scores.size) if j not in true_set]
        max_false = float(scores[false_idx].max()) if false_idx else 0.0
        if remaining:
            min_true = float(scores[remaining].min())
            separated = min_true > max_false
            exhausted = False
        else:
            min_true = 0.0
            separated = True
            exhausted = True
        out.append(
            CorrelationSeparation(
                iteration=k,
                min_true_corr=min_true,
                max_false_corr=max_false,
                separated=separated,
                prefix_in_support=picked <= true_set,
                true_exhausted=exhausted,
            )
        )
        picked.add(step.selected)
    return tuple(out)


@dataclass(frozen=True)
class LassoErrorReport:
    """Error decomposition of an estimate against the ground truth."""

    l2_error: float
    l1_error: float
    prediction_error: float
    false_positives: int
    cone_ratio: float


def lasso_error_report(
    result: EstimateResult, truth: GroundTruth, batch: EpisodeBatch
) -> LassoErrorReport:
    """l2/l1/prediction errors, spurious-support count and the cone ratio
    ``||delta_offsupport||_1 / ||delta_support||_1`` (inf when only the
    numerator is nonzero, 0 when both vanish)."""
    delta = result.theta_hat - truth.theta_star
    if delta.shape != (batch.m,):
        raise DimensionMismatchError("estimate, truth and batch disagree on m")
    support = list(truth.support)
    on = np.zeros(delta.size, dtype=bool)
    on[support] = True
    num = float(np.sum(np.abs(delta[~on])))
    den = float(np.sum(np.abs(delta[on])))
    if den > 0:
        cone = num / den
    else:
        cone = 0.0 if num == 0 else float("inf")
    return LassoErrorReport(
        l2_error=float(np.linalg.norm(delta)),
        l1_error=float(np.sum(np.abs(delta))),
        prediction_error=float(np.sum((batch.design @ delta) ** 2) / batch.n_episodes),
        false_positives=len(set(result.support_hat) - set(truth.support)),
        cone_ratio=cone,
    )


@dataclass(frozen=True)
class DesignReport:
    """Summary of the geometric health of one design matrix."""

    coherence: float
    coherence_condition_met: Optional[bool]
    diag_min: Optional[float]
    gram_deviation: Optional[float]
    re_lower_bound: Optional[float]
    re_sampled: Optional[float]
    zero_columns: tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.coherence <= 1.0 + 1e-12:
            raise ConfigError("coherence must lie in [0, 1]")
        if self.re_lower_bound is not None and self.re_sampled is not None:
            if self.re_lower_bound > self.re_sampled + 1e-9:
                raise ConfigError("lower RE certificate exceeds the sampled estimate")


def design_report(
    x: np.ndarray,
    support: Optional[Sequence[int]] = None,
    sigma_pop: Optional[np.ndarray] = None,
    alpha: float = 3.0,
    re_samples: int = 0,
    seed: int = 0,
) -> DesignReport:
    """Assemble the design diagnostics used to stratify experiment results.

    The restricted-eigenvalue certificate is only computed when
    ``re_samples > 0`` and a support is given; it is the expensive part.
    """
    x = np.asarray(x, dtype=float)
    col_sq = np.einsum("ij,ij->j", x, x)
    zero_columns = tuple(int(j) for j in np.flatnonzero(col_sq == 0))
    coherence = mutual_coherence(x)
    condition = None
    diag_min = None
    lower = sampled = None
    deviation = gram_deviation(x, sigma_pop) if sigma_pop is not None else None
    if support is not None and len(support) > 0:
        k = len(set(support))
        condition = bool(coherence < 1.0 / (2 * k - 1))
        gram = empirical_gram(x)
        diag_min = float(np.min(np.diag(gram)[sorted(support)]))
        if re_samples > 0:
            lower, sampled = re_certificate(x, support, alpha=alpha, n_samples=re_samples, seed=seed)
    return DesignReport(
        coherence=coherence,
        coherence_condition_met=condition,
        diag_min=diag_min,
        gram_deviation=deviation,
        re_lower_bound=lower,
        re_sampled=sampled,
        zero_columns=zero_columns,
    )
