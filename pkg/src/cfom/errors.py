"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical parameter is out of its admissible range."""


class DegenerateLoopError(RuntimeError):
    """The instantaneous feedback loop has unit gain and cannot be eliminated.

    Happens only for a zero-delay loop with perfect efficiency and a loop
    phase that is an integer multiple of pi.
    """


class UnstableModelError(RuntimeError):
    """An operation that requires a stable steady state got an unstable model."""


class MarginalStabilityError(RuntimeError):
    """The stability test passed within tolerance of a characteristic zero.

    Deliberately an error rather than a boolean: optimizers must not treat a
    numerically ambiguous region as certified-stable.
    """


class QuadratureError(RuntimeError):
    """Adaptive frequency integration failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved_rtol: float | None = None):
        super().__init__(message)
        self.achieved_rtol = achieved_rtol


class ProtocolError(RuntimeError):
    """A stage of the pulsed protocol is unstable or produced an unphysical state."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class ConfigError(ValueError):
    """A scenario configuration failed schema validation."""


class InfeasibleError(RuntimeError):
    """Every optimizer start was infeasible (unstable or unphysical)."""
