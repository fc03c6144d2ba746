"""Exception hierarchy shared across the toolkit."""


class ScucError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(ScucError):
    """Instance document is structurally malformed (bad JSON, missing keys, wrong types)."""


class ValidationError(ScucError):
    """An instance invariant is violated; the message names the offending field."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DisconnectedNetworkError(ScucError):
    """The bus graph is not connected from the reference bus."""


class ArgumentError(ScucError):
    """A caller-supplied argument is out of range."""


class DimensionError(ScucError):
    """A vector does not match the model's variable dimensions."""


class NumericalError(ScucError):
    """The LP kernel could not complete (iteration cap, singular basis)."""


class ModelError(ScucError):
    """The model is unsuitable for the requested operation."""


class MpsParseError(ScucError):
    """MPS text could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class MissingBaselineError(ScucError):
    """The requested baseline environment has no trial records."""


class EmptyEnvironmentError(ScucError):
    """An environment has no successful trials to aggregate."""


class UnknownJobError(ScucError):
    """No job with the given id exists."""


class NotReadyError(ScucError):
    """The job has not produced a result (not in the Done state)."""


class QueueFullError(ScucError):
    """The service's bounded submission queue is at capacity."""


class SolveCancelled(ScucError):
    """A solve was cancelled cooperatively; carries best-so-far bounds."""

    def __init__(self, message, objective=None, best_bound=None):
        self.objective = objective
        self.best_bound = best_bound
        super().__init__(message)
