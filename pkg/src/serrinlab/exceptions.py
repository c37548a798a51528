"""Exception hierarchy shared by the solvers, checkers and the CLI."""


class SerrinLabError(Exception):
    """Base class for every error raised by this package."""


class InadmissibleDomain(SerrinLabError, ValueError):
    pass


class DegenerateSphere(InadmissibleDomain):
    pass


class DegenerateAnnulus(SerrinLabError, ValueError):
    """cos(sqrt(k) R_out) vanishes, so the linear closed form has no solution."""


class NonConvergence(SerrinLabError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class NewtonDivergence(NonConvergence):
    pass


class SingularStiffness(SerrinLabError, RuntimeError):
    pass


class MeshFailure(SerrinLabError, RuntimeError):
    pass


class HypothesisNotMet(SerrinLabError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotAnnular(SerrinLabError, ValueError):
    pass


class MultipleBoundaries(SerrinLabError, ValueError):
    """A single-boundary check was handed a domain with several components."""


class DegenerateDenominator(SerrinLabError, ArithmeticError):
    pass


class ConfigError(SerrinLabError, ValueError):
    pass
