"""Estimation schemes mapping an episode batch to a coefficient estimate.

Four production estimators plus one tiny-scale exact oracle:

* ``bgcp``  -- greedy pursuit: repeatedly select the column most correlated
  with the residual, re-fit least squares on the selected support.
* ``lasso`` -- l1-penalised least squares by cyclic coordinate descent.
* ``epc``   -- per-coalition plug-in average payoff per unit activation.
* ``dls``   -- dense (ordinary or ridge) least squares over all columns.
* ``l0_map_oracle`` -- exact l0-penalised minimiser by support enumeration.

All estimators are deterministic functions of (batch, config) and safe to run
concurrently on distinct batches.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError, IllPosedError, RankDeficiencyError
from .model import EpisodeBatch, EstimateResult


@dataclass(frozen=True)
class BgcpConfig:
    """Greedy pursuit parameters: sparsity budget and residual threshold.

    ``record_correlations`` stores the full correlation vector of every
    iteration in the trace (needed for separation diagnostics).
    """

    k_max: int
    eta: float = 0.0
    record_correlations: bool = False

    def __post_init__(self):
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")


@dataclass(frozen=True)
class LassoConfig:
    """Coordinate-descent lasso parameters.

    ``lam=None`` selects the regularisation automatically as
    ``c0 * sigma_hat * sqrt(log(m) / T)``; ``sigma_hat=None`` falls back to
    the standard deviation of the response, a conservative upper proxy for
    the noise scale. Coefficients with magnitude at most
    ``support_threshold`` are zeroed on output.
    """

    lam: Optional[float] = None
    c0: float = 2.0
    sigma_hat: Optional[float] = None
    max_sweeps: int = 1000
    tol: float = 1e-6
    support_threshold: float = 1e-8

    def __post_init__(self):
        if self.lam is not None and self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.lam is None and self.c0 <= 0:
            raise ConfigError("c0 must be positive for automatic lambda")
        if self.max_sweeps < 1:
            raise ConfigError("max_sweeps must be at least 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.support_threshold < 0:
            raise ConfigError("support_threshold must be non-negative")

    def resolve_lambda(self, batch: EpisodeBatch) -> tuple[float, dict]:
        if self.lam is not None:
            return float(self.lam), {"lambda_mode": "fixed"}
        sigma = self.sigma_hat if self.sigma_hat is not None else float(np.std(batch.response))
        t, m = batch.design.shape
        lam = self.c0 * sigma * np.sqrt(np.log(m) / t)
        if lam <= 0:
            raise ConfigError("automatic lambda resolved to a non-positive value")
        return float(lam), {"lambda_mode": "auto", "c0": self.c0, "sigma_hat": sigma}


@dataclass(frozen=True)
class BgcpIteration:
    """One pursuit step: chosen index, its |correlation|, residual norm after
    the projection, and optionally the full correlation vector used."""

    selected: int
    score: float
    residual_norm: float
    correlations: Optional[np.ndarray] = None


def least_squares_on_support(batch: EpisodeBatch, support) -> np.ndarray:
    """Least-squares fit restricted to ``support``, embedded into an m-vector.

    Solved through an orthogonal factorisation (never normal equations).
    Raises RankDeficiencyError naming the dependent columns when the selected
    submatrix is rank deficient.
    """
    x, y = batch.design, batch.response
    support = sorted(int(j) for j in support)
    theta = np.zeros(x.shape[1])
    if not support:
        return theta
    if len(support) > x.shape[0]:
        raise ConfigError("support larger than the number of episodes")
    sub = x[:, support]
    coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
    if rank < len(support):
        _, _, pivots = scipy.linalg.qr(sub, mode="economic", pivoting=True)
        dependent = tuple(support[j] for j in sorted(pivots[rank:]))
        raise RankDeficiencyError(
            f"columns {dependent} are linearly dependent on the rest of the support",
            support=support,
            dependent_columns=dependent,
        )
    theta[support] = coef
    return theta


def bgcp(batch: EpisodeBatch, cfg: BgcpConfig) -> tuple[EstimateResult, tuple[BgcpIteration, ...]]:
    """Greedy pursuit estimate with its per-iteration trace.

    Selection maximises ``|X_j^T r| / T`` over unselected columns (smallest
    index wins ties); projection re-fits least squares on the enlarged
    support; the loop runs while fewer than ``k_max`` atoms are selected and
    the residual norm exceeds ``eta``. Stops early when every remaining
    correlation is exactly zero, since no further progress is possible.
    """
    x, y = batch.design, batch.response
    t, m = x.shape
    if cfg.k_max > min(t, m):
        raise ConfigError("k_max must not exceed min(T, m)")
    support: list[int] = []
    theta = np.zeros(m)
    residual = y.copy()
    trace: list[BgcpIteration] = []
    selected_mask = np.zeros(m, dtype=bool)
    k = 0
    while k < cfg.k_max and np.linalg.norm(residual) > cfg.eta:
        corr = x.T @ residual / t
        scores = np.abs(corr)
        scores[selected_mask] = -1.0
        j = int(np.argmax(scores))
        if scores[j] <= 0.0:
            break
        support.append(j)
        selected_mask[j] = True
        try:
            theta = least_squares_on_support(batch, support)
        except RankDeficiencyError as err:
            raise RankDeficiencyError(
                f"selecting column {j} made the support rank deficient",
                support=support,
                dependent_columns=err.dependent_columns or (j,),
            ) from err
        residual = y - x @ theta
        trace.append(
            BgcpIteration(
                selected=j,
                score=float(scores[j]),
                residual_norm=float(np.linalg.norm(residual)),
                correlations=corr if cfg.record_correlations else None,
            )
        )
        k += 1
    result = EstimateResult(
        theta_hat=theta,
        support_hat=tuple(np.flatnonzero(theta).tolist()),
        estimator="BGCP",
        tuning={"k_max": cfg.k_max, "eta": cfg.eta},
        iterations=k,
    )
    return result, tuple(trace)


def _soft(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def lasso_objective(x: np.ndarray, y: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """(1/2T)||Y - X theta||^2 + lam * ||theta||_1."""
    resid = y - x @ theta
    return float(resid @ resid / (2 * x.shape[0]) + lam * np.sum(np.abs(theta)))


def kkt_residual(x: np.ndarray, y: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """Largest distance of 0 from the coordinate-wise subdifferential.

    Zero at an exact lasso solution: |X_j^T r / T| <= lam where theta_j = 0
    and X_j^T r / T = lam * sign(theta_j) elsewhere.
    """
    corr = x.T @ (y - x @ theta) / x.shape[0]
    nonzero = theta != 0
    viol = np.maximum(np.abs(corr) - lam, 0.0)
    viol[nonzero] = np.abs(corr[nonzero] - lam * np.sign(theta[nonzero]))
    return float(viol.max()) if viol.size else 0.0


def lasso(batch: EpisodeBatch, cfg: LassoConfig) -> EstimateResult:
    """Cyclic coordinate descent for l1-penalised least squares.

    Each coordinate update is the exact soft-threshold minimiser, so the
    objective never increases. Terminates when the KKT residual drops to
    ``cfg.tol``; hitting ``max_sweeps`` first is reported through
    ``tuning["converged"]`` and the result is still returned.
    """
    x, y = batch.design, batch.response
    t, m = x.shape
    lam, lam_info = cfg.resolve_lambda(batch)
    col_sq = np.einsum("ij,ij->j", x, x) / t
    active = col_sq > 0
    theta = np.zeros(m)
    residual = y.copy()
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        for j in range(m):
            if not active[j]:
                continue
            old = theta[j]
            if old != 0.0:
                residual += x[:, j] * old
            rho = float(x[:, j] @ residual) / t
            new = _soft(rho, lam) / col_sq[j]
            if new != 0.0:
                residual -= x[:, j] * new
            theta[j] = new
        if kkt_residual(x, y, theta, lam) <= cfg.tol:
            converged = True
            break
    theta[np.abs(theta) <= cfg.support_threshold] = 0.0
    tuning = {
        "lambda": lam,
        "tol": cfg.tol,
        "max_sweeps": cfg.max_sweeps,
        "support_threshold": cfg.support_threshold,
        "converged": converged,
        "kkt_residual": kkt_residual(x, y, theta, lam),
    }
    tuning.update(lam_info)
    return EstimateResult(
        theta_hat=theta,
        support_hat=tuple(np.flatnonzero(theta).tolist()),
        estimator="LASSO",
        tuning=tuning,
        iterations=sweeps,
    )


def epc(batch: EpisodeBatch) -> EstimateResult:
    """Plug-in estimate: average payoff per unit activation of each
    coalition over the episodes where it is active; 0 when never active.

    Ignores interference between co-active coalitions.
    """
    x, y = batch.design, batch.response
    mask = x != 0
    counts = mask.sum(axis=0)
    safe = np.where(mask, x, 1.0)
    ratios = np.where(mask, y[:, None] / safe, 0.0)
    theta = ratios.sum(axis=0) / np.maximum(counts, 1)
    theta[counts == 0] = 0.0
    return EstimateResult(
        theta_hat=theta,
        support_hat=tuple(np.flatnonzero(theta).tolist()),
        estimator="EPC",
        tuning={"never_active": int(np.sum(counts == 0))},
        iterations=0,
    )


def dls(batch: EpisodeBatch, ridge: float = 0.0) -> EstimateResult:
    """Dense least squares over all m columns, optionally ridge-penalised.

    With ``ridge == 0`` this is ordinary least squares and requires
    ``T >= m`` with a full-rank design; otherwise an IllPosedError is
    raised rather than silently regularising.
    """
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    x, y = batch.design, batch.response
    t, m = x.shape
    if ridge == 0.0:
        if t < m:
            raise IllPosedError(f"ordinary least squares needs T >= m (T={t}, m={m})")
        theta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
        if rank < m:
            raise IllPosedError(f"design has rank {rank} < m={m}; the Gram matrix is singular")
    else:
        gram = x.T @ x / t + ridge * np.eye(m)
        theta = scipy.linalg.solve(gram, x.T @ y / t, assume_a="pos")
    return EstimateResult(
        theta_hat=theta,
        support_hat=tuple(np.flatnonzero(theta).tolist()),
        estimator="DLS",
        tuning={"ridge": ridge},
        iterations=0,
    )


def l0_map_oracle(batch: EpisodeBatch, lambda0: float, max_m: int = 15) -> EstimateResult:
    """Exact minimiser of (1/2)||Y - X theta||^2 + lambda0 * ||theta||_0.

    Enumerates every support (2^m of them, so m is capped), solving least
    squares on each. Ties break toward smaller supports, then
    lexicographically smaller index sets; enumeration order enforces both.
    """
    if lambda0 <= 0:
        raise ConfigError("lambda0 must be positive")
    x, y = batch.design, batch.response
    m = x.shape[1]
    if m > max_m:
        raise ConfigError(f"m={m} exceeds the enumeration cap {max_m}")
    best_obj = float(y @ y) / 2.0
    best_theta = np.zeros(m)
    examined = 1
    for size in range(1, m + 1):
        for support in combinations(range(m), size):
            examined += 1
            sub = x[:, support]
            coef, _, _, _ = np.linalg.lstsq(sub, y, rcond=None)
            resid = y - sub @ coef
            obj = float(resid @ resid) / 2.0 + lambda0 * size
            if obj < best_obj:
                best_obj = obj
                best_theta = np.zeros(m)
                best_theta[list(support)] = coef
    return EstimateResult(
        theta_hat=best_theta,
        support_hat=tuple(np.flatnonzero(best_theta).tolist()),
        estimator="L0_ORACLE",
        tuning={"lambda0": lambda0, "objective": best_obj},
        iterations=examined,
    )
