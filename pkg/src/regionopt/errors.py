"""Exception hierarchy shared by all modules."""


class RegionOptError(Exception):
    """Base class for every error raised by this package."""


class InstanceError(RegionOptError, ValueError):
    """Problem instance could not be built or read."""


class ParseError(InstanceError):
    """Malformed instance document.

    ``line`` and ``field`` locate the problem when known.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SchemaError(InstanceError):
    """A JSON document does not match the per-problem key table."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class UnsupportedFormatError(InstanceError):
    """Valid document, but a variant this package does not read."""


class InfeasibleInstanceError(InstanceError):
    """No feasible solution can exist (e.g. a demand above capacity)."""


class ShapeError(RegionOptError, ValueError):
    """A solution does not structurally fit its instance."""


class SolutionParseError(RegionOptError, ValueError):
    """An XML-like solution block could not be read."""


class DegenerateSubproblemError(RegionOptError, ValueError):
    """Nothing is left to optimise (empty active set)."""


class IntegrationError(RegionOptError):
    """A local solution violates its subproblem and cannot be integrated."""

    def __init__(self, report):
        self.report = report
        details = "; ".join(v.detail for v in report.violations)
        super().__init__(f"local solution rejected: {details}")


class StrategyError(RegionOptError):
    """A decomposition or reconstruction strategy could not produce output."""


class CapabilityError(StrategyError):
    """The requested strategy cannot handle this subproblem."""


class ConfigurationError(RegionOptError):
    """Invalid configuration, detected before any work is done."""


class TransportError(RegionOptError):
    """The language-model service could not be reached or answered badly."""


class TransientTransportError(TransportError):
    """A failure worth retrying (timeouts, 429, 5xx)."""
