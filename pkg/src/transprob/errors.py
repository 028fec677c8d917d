"""Exception hierarchy shared by all modules."""


class TransprobError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(TransprobError, ValueError):
    """An event-history record or input file is malformed."""


class EstimationError(TransprobError):
    """An estimator cannot be computed from the data at hand."""


class ComparisonError(EstimationError):
    """A two-sample test cannot be computed (e.g. no events in the interval)."""


class DegenerateVarianceError(ComparisonError):
    """The variance estimate is zero while the linear statistic is not."""
