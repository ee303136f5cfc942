"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its documented exit statuses without a lookup table.
"""


class PerforatedError(Exception):
    """Base class for domain and guard errors (exit status 1)."""

    exit_code = 1


class InvalidGeometry(PerforatedError):
    def __init__(self, clause, message=None):
        self.clause = clause
        super().__init__(message or clause)


class ResolutionTooCoarse(PerforatedError):
    pass


class DisconnectedFluid(PerforatedError):
    pass


class EmptyRegion(PerforatedError):
    pass


class CellOutOfDomain(PerforatedError):
    pass


class ShiftOutOfRange(PerforatedError):
    pass


class NoFluidNodes(PerforatedError):
    pass


class IncompatibleRHS(PerforatedError):
    pass


class EtaTooLarge(PerforatedError):
    pass


class TruncationTooSmall(PerforatedError):
    pass


class EmptyAnnulus(PerforatedError):
    pass


class InsufficientSamples(PerforatedError):
    pass


class NonPositiveValue(PerforatedError):
    pass


class UnsupportedQuantity(PerforatedError):
    pass


class NotConverged(PerforatedError):
    """Iterative solver gave up; ``report`` holds the last iterate's statistics."""

    exit_code = 3

    def __init__(self, report, message=None):
        self.report = report
        super().__init__(
            message
            or f"not converged after {report.iterations} iterations "
            f"(relative residual {report.final_relative_residual:.3e})"
        )


class ConfigError(PerforatedError):
    exit_code = 2
