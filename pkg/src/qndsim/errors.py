"""Exception types shared across the package."""


class TruncationLeakageError(RuntimeError):
    """Population in the top Fock levels exceeded the configured tolerance."""


class GridCoverageError(ValueError):
    """A quadrature or phase-space grid does not cover the state's support."""


class NegligibleHeraldError(RuntimeError):
    """Herald window caught essentially zero probability mass."""


class ApproximationDomainError(ValueError):
    """Inputs lie outside the validity domain of an analytic approximation."""


class StepSizeError(RuntimeError):
    """Adaptive stepper could not satisfy its accuracy ceiling."""


class StiffnessError(RuntimeError):
    """Master-equation integrator failed to converge (step-size underflow)."""


class ConfigError(ValueError):
    """An experiment configuration violates a module precondition."""
