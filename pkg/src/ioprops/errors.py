"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Signal or plant dimensions do not match."""


class StabilityError(ValueError):
    """A model violates the stability requirement."""


class SingularOperatorError(ArithmeticError):
    """The plant operator is (numerically) singular for the requested quotient."""


class NoisyDenominatorError(SingularOperatorError):
    """A noisy quadratic form that must be positive came out non-positive.

    Raised only on noisy sessions; re-probing with fresh noise usually cures it.
    """


class DegenerateInputError(ArithmeticError):
    """An iterate collapsed to (numerically) zero; restart from another input."""


class BudgetExhausted(RuntimeError):
    """The probe session's sample budget would be exceeded.

    Estimators attach their partial trace as ``trace`` before re-raising.
    """

    def __init__(self, message, samples_used=0, budget=None, trace=None):
        super().__init__(message)
        self.samples_used = samples_used
        self.budget = budget
        self.trace = trace


class DivergenceError(RuntimeError):
    """An iteration left the region where its local convergence guarantee applies."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class FlowError(RuntimeError):
    """ODE integration failed (evaluation cap or step-size underflow)."""

    def __init__(self, message, tau=None, state=None):
        super().__init__(message)
        self.tau = tau
        self.state = state


class ConfigError(ValueError):
    """Invalid experiment configuration."""
