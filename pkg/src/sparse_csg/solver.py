"""Exact coalition structure generation over an estimated value function.

The optimiser is a subset dynamic program over agent masks: for every subset
U of agents, the best partition of U is found by trying every block C that
contains U's lowest agent and recursing on U \\ C. A brute-force enumerator
over all partitions (restricted growth strings) provides an independent
oracle at small n.

Both solvers share one tie-break so results are comparable structure-for-
structure: among welfare-optimal partitions prefer more blocks, then the
lexicographically smallest sequence of block masks (blocks ordered by their
lowest agent).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
from numba import njit

from .errors import ConfigError, DimensionMismatchError
from .estimators import BgcpConfig, BgcpIteration, LassoConfig, bgcp, dls, epc, lasso
from .model import (
    CoalitionStructure,
    CoalitionUniverse,
    EpisodeBatch,
    EstimateResult,
    GroundTruth,
    validate_structure,
    welfare,
)

DP_AGENT_CAP = 20
BRUTE_FORCE_AGENT_CAP = 10
SURROGATE_METHODS = ("LASSO", "EPC", "DLS")


@dataclass(frozen=True)
class ValueFunction:
    """Block values induced by an estimate over a coalition universe.

    ``values`` maps universe indices to real values; any subset of agents
    not covered by the map (because it is outside the universe, outside the
    optional restriction, or simply unvalued) is worth ``default_value``.
    """

    universe: CoalitionUniverse
    values: dict[int, float]
    default_value: float = 0.0

    def __post_init__(self):
        for j in self.values:
            if not 0 <= int(j) < self.universe.m:
                raise ConfigError(f"value index {j} outside the universe")

    @classmethod
    def from_estimate(
        cls,
        universe: CoalitionUniverse,
        theta: np.ndarray,
        restrict_to: Optional[Sequence[int]] = None,
        default_value: float = 0.0,
    ) -> "ValueFunction":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (universe.m,):
            raise DimensionMismatchError("theta length differs from universe size")
        indices = range(universe.m) if restrict_to is None else sorted(set(int(j) for j in restrict_to))
        return cls(universe=universe, values={int(j): float(theta[j]) for j in indices}, default_value=default_value)

    def block_value(self, mask: int) -> float:
        j = self.universe.index_of(mask)
        if j is None:
            return self.default_value
        return self.values.get(j, self.default_value)

    def total(self, blocks: Sequence[int]) -> float:
        return float(sum(self.block_value(mask) for mask in blocks))

    def dense_table(self, restrict_to: Optional[Sequence[int]] = None) -> np.ndarray:
        """Value of every agent subset as an array indexed by mask."""
        table = np.full(1 << self.universe.n_agents, self.default_value)
        scope = self.values if restrict_to is None else {
            j: self.values[j] for j in set(int(i) for i in restrict_to) if j in self.values
        }
        for j, value in scope.items():
            table[self.universe.coalitions[j]] = value
        return table


@njit(cache=True)
def _partition_dp(values):  # pragma: no cover - exercised via solve_csg_dp
    size = values.shape[0]
    best = np.zeros(size)
    nblocks = np.zeros(size, dtype=np.int64)
    first = np.zeros(size, dtype=np.int64)
    for u in range(1, size):
        low = u & (-u)
        rest = u ^ low
        best_w = -np.inf
        best_n = 0
        best_c = 0
        sub = rest
        while True:
            c = sub | low
            w = values[c] + best[u ^ c]
            nb = nblocks[u ^ c] + 1
            if w > best_w or (
                w == best_w and (nb > best_n or (nb == best_n and c < best_c))
            ):
                best_w = w
                best_n = nb
                best_c = c
            if sub == 0:
                break
            sub = (sub - 1) & rest
        best[u] = best_w
        nblocks[u] = best_n
        first[u] = best_c
    return best, nblocks, first


def solve_csg_dp(
    vf: ValueFunction,
    restrict_to: Optional[Sequence[int]] = None,
    agent_cap: int = DP_AGENT_CAP,
) -> CoalitionStructure:
    """Welfare-maximising partition of the agents by subset dynamic
    programming.

    ``restrict_to`` limits which universe indices keep their values; blocks
    outside the restriction fall back to the default value, so a partition
    always exists. Runs in O(3^n) over agent subsets.
    """
    n = vf.universe.n_agents
    if n > agent_cap:
        raise ConfigError(f"n_agents={n} exceeds the DP cap {agent_cap}")
    table = vf.dense_table(restrict_to)
    _, _, first = _partition_dp(table)
    blocks = []
    u = (1 << n) - 1
    while u:
        c = int(first[u])
        blocks.append(c)
        u ^= c
    return validate_structure(blocks, vf.universe)


def iter_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """All partitions of n agents as tuples of masks ordered by lowest agent.

    Enumerated through restricted growth strings: agent i joins one of the
    blocks opened so far or opens a new one.
    """
    codes = [0] * n
    maxes = [0] * n
    while True:
        blocks: dict[int, int] = {}
        for agent, code in enumerate(codes):
            blocks[code] = blocks.get(code, 0) | (1 << agent)
        yield tuple(blocks[c] for c in sorted(blocks))
        agent = n - 1
        while agent > 0 and codes[agent] > maxes[agent - 1]:
            agent -= 1
        if agent == 0:
            return
        codes[agent] += 1
        maxes[agent] = max(maxes[agent - 1], codes[agent])
        for i in range(agent + 1, n):
            codes[i] = 0
            maxes[i] = maxes[agent]


def solve_csg_bruteforce(vf: ValueFunction, agent_cap: int = BRUTE_FORCE_AGENT_CAP) -> CoalitionStructure:
    """Oracle solver: enumerate every partition, keep the best under the
    shared tie-break. Intended for n at most ~10."""
    n = vf.universe.n_agents
    if n > agent_cap:
        raise ConfigError(f"n_agents={n} exceeds the brute-force cap {agent_cap}")
    table = vf.dense_table()
    best_blocks: Optional[tuple[int, ...]] = None
    best_w = -np.inf
    for blocks in iter_partitions(n):
        # Right-fold in block order: the exact accumulation the DP performs,
        # so welfares compare bit-for-bit between the two solvers.
        w = 0.0
        for c in reversed(blocks):
            w = float(table[c]) + w
        if best_blocks is None or w > best_w or (
            w == best_w
            and (len(blocks), tuple(-b for b in blocks))
            > (len(best_blocks), tuple(-b for b in best_blocks))
        ):
            best_blocks = blocks
            best_w = w
    assert best_blocks is not None
    return validate_structure(best_blocks, vf.universe)


def random_partition(n: int, rng: np.random.Generator) -> tuple[int, ...]:
    """A uniformly-coded random partition (random restricted growth string)."""
    codes = [0] * n
    top = 0
    for agent in range(1, n):
        codes[agent] = int(rng.integers(0, top + 2))
        top = max(top, codes[agent])
    blocks: dict[int, int] = {}
    for agent, code in enumerate(codes):
        blocks[code] = blocks.get(code, 0) | (1 << agent)
    return tuple(blocks[c] for c in sorted(blocks))


@dataclass(frozen=True)
class PipelineResult:
    """Outcome of one estimate-then-solve pipeline run."""

    structure: CoalitionStructure
    estimate: EstimateResult
    welfare_gap: Optional[float]
    optimal_structure: Optional[CoalitionStructure]
    trace: Optional[tuple[BgcpIteration, ...]] = None


def optimal_structure_for(truth: GroundTruth, universe: CoalitionUniverse) -> CoalitionStructure:
    """Best structure under the true parameters."""
    return solve_csg_dp(ValueFunction.from_estimate(universe, truth.theta_star))


def _evaluate_gap(
    structure: CoalitionStructure,
    truth: Optional[GroundTruth],
    universe: CoalitionUniverse,
    optimal: Optional[CoalitionStructure],
) -> tuple[Optional[float], Optional[CoalitionStructure]]:
    if truth is None:
        return None, None
    if optimal is None:
        optimal = optimal_structure_for(truth, universe)
    gap = welfare(optimal, truth.theta_star) - welfare(structure, truth.theta_star)
    return float(gap), optimal


def pipeline_bgcp(
    batch: EpisodeBatch,
    universe: CoalitionUniverse,
    cfg: BgcpConfig,
    truth_for_eval: Optional[GroundTruth] = None,
    optimal: Optional[CoalitionStructure] = None,
) -> PipelineResult:
    """Greedy pursuit, then CSG restricted to the selected coalitions.

    Off-support coalitions are valued at 0 rather than dropped, so every
    partition stays feasible. When ground truth is supplied the welfare gap
    against the true optimum is evaluated.
    """
    if universe.m != batch.m:
        raise DimensionMismatchError("universe size differs from batch columns")
    estimate, trace = bgcp(batch, cfg)
    vf = ValueFunction.from_estimate(universe, estimate.theta_hat, restrict_to=estimate.support_hat)
    structure = solve_csg_dp(vf)
    gap, optimal = _evaluate_gap(structure, truth_for_eval, universe, optimal)
    return PipelineResult(
        structure=structure,
        estimate=estimate,
        welfare_gap=gap,
        optimal_structure=optimal,
        trace=trace,
    )


def pipeline_surrogate(
    batch: EpisodeBatch,
    universe: CoalitionUniverse,
    method: str,
    cfg=None,
    truth_for_eval: Optional[GroundTruth] = None,
    optimal: Optional[CoalitionStructure] = None,
) -> PipelineResult:
    """Estimate with a surrogate (LASSO, EPC or DLS), then CSG on the full
    estimated value function without support restriction."""
    if universe.m != batch.m:
        raise DimensionMismatchError("universe size differs from batch columns")
    if method == "LASSO":
        estimate = lasso(batch, cfg if cfg is not None else LassoConfig())
    elif method == "EPC":
        estimate = epc(batch)
    elif method == "DLS":
        estimate = dls(batch, ridge=float(cfg) if cfg is not None else 0.0)
    else:
        raise ConfigError(f"method must be one of {SURROGATE_METHODS}")
    vf = ValueFunction.from_estimate(universe, estimate.theta_hat)
    structure = solve_csg_dp(vf)
    gap, optimal = _evaluate_gap(structure, truth_for_eval, universe, optimal)
    return PipelineResult(
        structure=structure,
        estimate=estimate,
        welfare_gap=gap,
        optimal_structure=optimal,
    )
