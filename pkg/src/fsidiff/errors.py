"""Exception types raised by the solver stack."""


class FsiError(Exception):
    """Base class for solver errors."""


class GridTooSmall(FsiError, ValueError):
    pass


class NonConvergence(FsiError):
    """Newton iteration hit its cap. ``diagnostics`` and ``partial`` carry the last iterate."""

    def __init__(self, message, diagnostics=None, partial=None, step_index=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.partial = partial
        self.step_index = step_index


class SingularSystem(FsiError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class NodeOutsideDomain(FsiError, ValueError):
    pass


class BodyTooLargeForDomain(FsiError, ValueError):
    pass


class StaleFactorization(FsiError):
    pass


class NoOscillationDetected(FsiError):
    pass


class ZeroReferenceVelocity(FsiError, ValueError):
    pass


class LineSearchFailure(FsiError):
    pass


class ConfigError(FsiError, ValueError):
    """Invalid or incomplete experiment configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
