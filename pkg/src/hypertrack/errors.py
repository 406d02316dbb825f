"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
infeasible designs with 3 and numerical failures with 4.
"""


class HypertrackError(Exception):
    """Base class for all package errors."""


class ValidationError(HypertrackError, ValueError):
    """Input data violates a documented precondition."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class InfeasibleError(HypertrackError):
    """An H-infinity feasibility condition failed.

    ``condition`` names the failing test (e.g. ``"X>=0"``) and ``gamma`` the
    attenuation level at which it failed.
    """

    def __init__(self, message, condition=None, gamma=None):
        super().__init__(message)
        self.condition = condition
        self.gamma = gamma


class NumericalError(HypertrackError):
    """A numerical routine lost accuracy or diverged."""


class SimulationDivergence(NumericalError):
    """Simulation state exceeded the overflow guard.

    The partially computed trajectory is kept on ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
