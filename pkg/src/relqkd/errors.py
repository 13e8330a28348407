"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class UnphysicalInputError(DomainError):
    """Inputs describe a physically impossible situation (e.g. superluminal flight)."""


class ValidationError(ValueError):
    """A configuration failed validation.

    ``keys`` lists every offending key so the CLI can report them all at once.
    """

    def __init__(self, message: str, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class MalformedTranscriptError(ValueError):
    """Paired sequences (sync transcript, packet buffers, keys) disagree in length."""


class CausalityViolation(RuntimeError):
    """An adversary decision read an event outside its past light cone."""

    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


class SimulationModelError(RuntimeError):
    """The simulator produced a physically impossible transcript (a bug, never data)."""
