"""Exception hierarchy.

Two families: ``InputError`` for problems with the data handed in (bad files,
wrong panel shape, treated units where none are allowed) and
``EstimationError`` for numerically degenerate estimation problems.  The CLI
maps them to exit codes 2 and 3 respectively.
"""


class EtaDecompError(Exception):
    """Base class for all package errors."""


class InputError(EtaDecompError, ValueError):
    pass


class EstimationError(EtaDecompError, ArithmeticError):
    pass


# -- panel ingestion / shape ------------------------------------------------

class SchemaError(InputError):
    pass


class ParseError(InputError):
    pass


class DuplicateKeyError(InputError):
    def __init__(self, unit_id, period):
        self.unit_id = unit_id
        self.period = period
        super().__init__(f"duplicate record for unit {unit_id}, period {period}")


class DimensionError(InputError):
    pass


class InsufficientPeriodsError(InputError):
    pass


class ContaminationError(InputError):
    """Treated units present where the estimator needs an untreated sample."""


class MissingVariationError(InputError):
    """No treatment variation to identify a treatment effect from."""


# -- numerics ---------------------------------------------------------------

class DegenerateRegressorError(EstimationError):
    pass


class NonPositiveVarianceError(EstimationError):
    pass


class UnstableRatioError(EstimationError):
    def __init__(self, numerator, denominator, message=None):
        self.numerator = numerator
        self.denominator = denominator
        super().__init__(
            message
            or f"ratio unstable: predicted-outcome effect {numerator!r}, "
            f"actual-outcome effect {denominator!r}"
        )


class UncorrectableError(EstimationError):
    pass


class BootstrapInstabilityError(EstimationError):
    def __init__(self, failure_share, n_replicates):
        self.failure_share = failure_share
        self.n_replicates = n_replicates
        super().__init__(
            f"statistic failed on {failure_share:.1%} of {n_replicates} "
            "bootstrap replicates (limit 5%)"
        )
