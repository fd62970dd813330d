"""Error types shared by the solvers and the command line."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class NumericalFailure(RuntimeError):
    """A solver diverged, failed to converge, or broke a guaranteed bound."""


class ContractionError(NumericalFailure):
    pass


class ConvergenceError(NumericalFailure):
    def __init__(self, msg, gaps=()):
        super().__init__(msg)
        self.gaps = list(gaps)


class CFLError(NumericalFailure, ValueError):
    pass


class FieldBoundError(NumericalFailure, AssertionError):
    pass
