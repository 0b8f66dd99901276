"""Semantic exception hierarchy shared by all modules."""


class SparseCsgError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SparseCsgError, ValueError):
    """A configuration object violates its declared invariants."""


class DimensionMismatchError(SparseCsgError, ValueError):
    """Two objects that must share a dimension do not."""


class InvalidPartitionError(SparseCsgError, ValueError):
    """A list of blocks is not a partition of the agent set."""


class RankDeficiencyError(SparseCsgError, ValueError):
    """A selected design submatrix is rank deficient.

    Attributes:
        support: the column indices the solve was attempted on.
        dependent_columns: columns identified as linearly dependent.
    """

    def __init__(self, message, support=(), dependent_columns=()):
        super().__init__(message)
        self.support = tuple(support)
        self.dependent_columns = tuple(dependent_columns)


class IllPosedError(SparseCsgError, ValueError):
    """A dense least-squares problem has no unique solution."""


class MissingNoiseError(SparseCsgError, ValueError):
    """An operation requires the realised noise vector but the batch has none."""


class InsufficientDataError(SparseCsgError, ValueError):
    """Too few records to compute the requested statistic."""
