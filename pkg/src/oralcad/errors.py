"""Exception hierarchy shared across the toolkit."""


class OralCadError(Exception):
    """Base class for all toolkit errors."""


class FormatError(OralCadError, ValueError):
    """A file does not match the expected binary or text layout."""


class DegenerateInputError(OralCadError, ValueError):
    """Input lacks the structure an operation needs (e.g. a constant image)."""


class ContractError(OralCadError, ValueError):
    """Arguments violate an operation's preconditions."""


class TrainingError(OralCadError, ValueError):
    pass


class SpecError(OralCadError, ValueError):
    """An invalid phantom specification or config file."""


class UndefinedMetricError(OralCadError, ValueError):
    pass


class EmptyPoolError(TrainingError):
    """No candidate ROIs were found to build a training pool from."""
