"""Exception hierarchy shared across the package."""


class TubeLabError(Exception):
    """Base class for all errors raised by tubelab."""


class ConfigurationError(TubeLabError, ValueError):
    """Unknown name, bad parameter or malformed scenario file."""


class DomainError(TubeLabError, ValueError):
    """A point or graph lies outside the box it must live in."""


class InputError(TubeLabError, ValueError):
    """Sampled data is unusable (e.g. non-finite level-set values)."""


class StepSizeError(TubeLabError, ValueError):
    """Time step violates the CFL bound."""


class PreconditionError(TubeLabError, ValueError):
    """An operation was called on a state it cannot accept."""


class ContourError(TubeLabError, RuntimeError):
    """Iso-contour assembly produced an open polyline."""


class DegeneracyError(TubeLabError, RuntimeError):
    """The in-slice gradient of theta vanishes on the zero set."""


class NearStationaryError(TubeLabError, RuntimeError):
    """A normal speed is too small to divide by."""


class HypothesisError(TubeLabError, RuntimeError):
    """The non-collapse hypotheses cannot be met for the given inputs."""
