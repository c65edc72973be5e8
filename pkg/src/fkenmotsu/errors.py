"""Exception hierarchy shared by every module.

Each class carries a short ``code`` used by the CLI when a failure is
folded into a report instead of aborting the run.
"""


class GeometryError(Exception):
    code = "geometry_error"


class DomainError(GeometryError, ValueError):
    """An expression was evaluated outside its domain (ln of <= 0, 1/0, ...)."""

    code = "domain_error"


class SingularMetric(GeometryError):
    code = "singular_metric"


class InvalidParam(GeometryError, ValueError):
    code = "invalid_param"


class DimensionError(GeometryError, ValueError):
    code = "dimension_error"


class NotApplicable(GeometryError):
    code = "not_applicable"


class StepTooCoarse(GeometryError):
    code = "step_too_coarse"


class DomainExit(GeometryError):
    code = "domain_exit"


class GapTooSmall(GeometryError):
    code = "gap_too_small"


class TransportInconsistent(GeometryError):
    code = "transport_inconsistent"


class DegenerateRicci(GeometryError):
    code = "degenerate_ricci"

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class ConfigError(ValueError):
    code = "config_error"
