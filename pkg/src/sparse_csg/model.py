"""Core domain types: coalition universes, ground truth, batches, structures.

Conventions
-----------
Agents are numbered 1..n externally and represented internally as bits of an
integer mask: agent ``a`` is bit ``a - 1``. Coalitions are non-empty masks.
A coalition universe fixes an ordered library of candidate coalitions; the
canonical order is (size, mask value) so that indices are reproducible across
runs and file formats.

All types are immutable after construction (frozen dataclasses, read-only
arrays) and safe to share across concurrent workers. Operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import ConfigError, DimensionMismatchError, InvalidPartitionError
from .rng import generator

ESTIMATOR_TAGS = ("BGCP", "LASSO", "EPC", "DLS", "L0_ORACLE")


def mask_from_agents(agents: Iterable[int], n_agents: int) -> int:
    """Convert a collection of 1-based agent indices to a bitmask."""
    mask = 0
    for a in agents:
        a = int(a)
        if not 1 <= a <= n_agents:
            raise ConfigError(f"agent {a} outside 1..{n_agents}")
        mask |= 1 << (a - 1)
    if mask == 0:
        raise ConfigError("empty coalition")
    return mask


def agents_from_mask(mask: int) -> tuple[int, ...]:
    """Convert a bitmask back to sorted 1-based agent indices."""
    out = []
    a = 1
    while mask:
        if mask & 1:
            out.append(a)
        mask >>= 1
        a += 1
    return tuple(out)


def _canonical(masks: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(set(int(m) for m in masks), key=lambda m: (bin(m).count("1"), m)))


@dataclass(frozen=True)
class CoalitionUniverse:
    """The agent set N and an indexed library of candidate coalitions.

    Attributes:
        n_agents: number of agents |N|.
        coalitions: distinct non-empty agent masks in canonical (size, mask)
            order; the position of a mask in this tuple is its index.
        contains_singletons: True when every single-agent coalition is listed,
            which guarantees every partition of N is expressible.
    """

    n_agents: int
    coalitions: tuple[int, ...]
    contains_singletons: bool

    def __post_init__(self):
        if self.n_agents < 1:
            raise ConfigError("n_agents must be positive")
        full = (1 << self.n_agents) - 1
        seen = set()
        for mask in self.coalitions:
            if mask == 0:
                raise ConfigError("universe contains an empty coalition")
            if mask & ~full:
                raise ConfigError(f"coalition {mask:#x} uses agents outside 1..{self.n_agents}")
            if mask in seen:
                raise ConfigError(f"duplicate coalition {agents_from_mask(mask)}")
            seen.add(mask)
        singletons = all((1 << i) in seen for i in range(self.n_agents))
        if singletons != self.contains_singletons:
            raise ConfigError("contains_singletons flag inconsistent with coalition list")

    @classmethod
    def from_masks(cls, n_agents: int, masks: Iterable[int]) -> "CoalitionUniverse":
        ordered = _canonical(masks)
        singles = all((1 << i) in set(ordered) for i in range(n_agents))
        return cls(n_agents=n_agents, coalitions=ordered, contains_singletons=singles)

    @classmethod
    def from_agent_sets(cls, n_agents: int, sets: Iterable[Iterable[int]]) -> "CoalitionUniverse":
        return cls.from_masks(n_agents, (mask_from_agents(s, n_agents) for s in sets))

    @classmethod
    def all_up_to_size(cls, n_agents: int, max_size: int) -> "CoalitionUniverse":
        """Library of all non-empty coalitions with at most ``max_size`` agents."""
        if not 1 <= max_size <= n_agents:
            raise ConfigError("max_size must be in 1..n_agents")
        masks = []
        for size in range(1, max_size + 1):
            for combo in combinations(range(n_agents), size):
                masks.append(sum(1 << i for i in combo))
        return cls.from_masks(n_agents, masks)

    @classmethod
    def random_library(cls, n_agents: int, size: int, seed: int) -> "CoalitionUniverse":
        """Uniformly sampled library of ``size`` distinct non-empty coalitions."""
        total = (1 << n_agents) - 1
        if not 1 <= size <= total:
            raise ConfigError(f"library size must be in 1..{total}")
        rng = generator(seed, "universe")
        masks = rng.choice(total, size=size, replace=False) + 1
        return cls.from_masks(n_agents, masks.tolist())

    @property
    def m(self) -> int:
        return len(self.coalitions)

    @cached_property
    def _index(self) -> Mapping[int, int]:
        return {mask: j for j, mask in enumerate(self.coalitions)}

    def index_of(self, mask: int) -> Optional[int]:
        """Index of a coalition mask in the library, or None if absent."""
        return self._index.get(mask)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GroundTruth:
    """The sparse contribution vector with its generation metadata.

    ``support`` holds the (0-based) indices of nonzero entries, ``sparsity``
    its size, ``theta_min`` the minimum nonzero magnitude and ``sigma`` the
    noise scale the batch was (or will be) generated with.
    """

    theta_star: np.ndarray
    support: tuple[int, ...]
    sparsity: int
    theta_min: float
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta_star", _readonly(self.theta_star))
        object.__setattr__(self, "support", tuple(sorted(int(j) for j in self.support)))
        actual = tuple(np.flatnonzero(self.theta_star).tolist())
        if actual != self.support:
            raise ConfigError("support does not match the nonzeros of theta_star")
        if len(self.support) != self.sparsity:
            raise ConfigError("sparsity does not match |support|")
        if self.theta_min <= 0:
            raise ConfigError("theta_min must be positive")
        if self.support:
            smallest = np.min(np.abs(self.theta_star[list(self.support)]))
            if smallest < self.theta_min * (1 - 1e-12):
                raise ConfigError("a nonzero entry is smaller than theta_min")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")

    @property
    def m(self) -> int:
        return self.theta_star.shape[0]


@dataclass(frozen=True)
class EpisodeBatch:
    """Episodic observations: design matrix, responses and optional noise.

    When ``column_normalised`` is set, every nonzero design column satisfies
    ``||X_j||^2 == T`` to relative precision 1e-10. ``zero_columns`` lists
    columns that were never activated; estimators pin their coefficients to 0.
    """

    design: np.ndarray
    response: np.ndarray
    noise: Optional[np.ndarray] = None
    column_normalised: bool = False
    zero_columns: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "design", _readonly(self.design))
        object.__setattr__(self, "response", _readonly(self.response))
        if self.noise is not None:
            object.__setattr__(self, "noise", _readonly(self.noise))
        if self.design.ndim != 2:
            raise DimensionMismatchError("design must be a T x m matrix")
        t = self.design.shape[0]
        if self.response.shape != (t,):
            raise DimensionMismatchError("response length must equal the number of episodes")
        if self.noise is not None and self.noise.shape != (t,):
            raise DimensionMismatchError("noise length must equal the number of episodes")
        object.__setattr__(self, "zero_columns", tuple(int(j) for j in self.zero_columns))
        if self.column_normalised:
            sq = np.einsum("ij,ij->j", self.design, self.design)
            nonzero = sq > 0
            if np.any(np.abs(sq[nonzero] - t) / t > 1e-10):
                raise ConfigError("column_normalised set but some ||X_j||^2 differs from T")

    @property
    def n_episodes(self) -> int:
        return self.design.shape[0]

    @property
    def m(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class EstimateResult:
    """An estimated coefficient vector with its declared support.

    ``support_hat`` always equals the nonzero indices of ``theta_hat`` after
    any thresholding declared in ``tuning`` has been applied.
    """

    theta_hat: np.ndarray
    support_hat: tuple[int, ...]
    estimator: str
    tuning: dict
    iterations: int

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", _readonly(self.theta_hat))
        object.__setattr__(self, "support_hat", tuple(sorted(int(j) for j in self.support_hat)))
        if self.estimator not in ESTIMATOR_TAGS:
            raise ConfigError(f"unknown estimator tag {self.estimator!r}")
        actual = tuple(np.flatnonzero(self.theta_hat).tolist())
        if actual != self.support_hat:
            raise ConfigError("support_hat does not match the nonzeros of theta_hat")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")


@dataclass(frozen=True)
class CoalitionStructure:
    """A validated partition of the agents with its coalition indicator.

    ``blocks`` are agent masks ordered by their lowest agent; ``indicator``
    is the 0/1 vector over universe indices marking which library coalitions
    the structure uses. Blocks absent from the universe have no indicator
    entry and contribute zero welfare.
    """

    blocks: tuple[int, ...]
    indicator: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "indicator", _readonly(self.indicator))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


def validate_structure(blocks: Iterable[int], universe: CoalitionUniverse) -> CoalitionStructure:
    """Check that ``blocks`` partition the agents and build the structure.

    Raises InvalidPartitionError when a block is empty, blocks overlap, or
    some agent is left uncovered.
    """
    masks = [int(b) for b in blocks]
    full = (1 << universe.n_agents) - 1
    union = 0
    for mask in masks:
        if mask == 0:
            raise InvalidPartitionError("empty block")
        if mask & ~full:
            raise InvalidPartitionError("block uses agents outside the universe")
        if mask & union:
            raise InvalidPartitionError(f"overlapping blocks at agents {agents_from_mask(mask & union)}")
        union |= mask
    if union != full:
        missing = agents_from_mask(full & ~union)
        raise InvalidPartitionError(f"agents {missing} not covered")
    masks.sort(key=lambda mask: mask & (-mask))
    indicator = np.zeros(universe.m)
    for mask in masks:
        j = universe.index_of(mask)
        if j is not None:
            indicator[j] = 1.0
    return CoalitionStructure(blocks=tuple(masks), indicator=indicator)


def welfare(structure: CoalitionStructure, theta: np.ndarray) -> float:
    """Total value of the structure under ``theta``: the indicator dotted
    with the coefficient vector. Blocks outside the universe contribute 0."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != structure.indicator.shape:
        raise DimensionMismatchError(
            f"theta has length {theta.shape}, indicator {structure.indicator.shape}"
        )
    return float(structure.indicator @ theta)


def welfare_lipschitz_check(
    structure: CoalitionStructure, theta_a: np.ndarray, theta_b: np.ndarray
) -> tuple[float, float]:
    """Welfare difference of one structure under two parameter vectors,
    paired with its l1 bound. Returns (gap, bound) with gap <= bound."""
    theta_a = np.asarray(theta_a, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)
    if theta_a.shape != theta_b.shape:
        raise DimensionMismatchError("parameter vectors differ in length")
    gap = abs(welfare(structure, theta_a) - welfare(structure, theta_b))
    bound = float(np.sum(np.abs(theta_a - theta_b)))
    if gap > bound:
        raise AssertionError(f"lipschitz contract violated: {gap} > {bound}")
    return gap, bound
