"""Exception types raised by the bound calculators and traffic models."""


class InvalidParamsError(ValueError):
    """A model parameter violates its basic constraints (e.g. a rate <= 0)."""


class UnstableScenarioError(ValueError):
    """Utilization at or above 1: steady-state delay does not exist."""


class TrivialScenarioError(ValueError):
    """Peak rate <= per-flow capacity: the queue never builds, delay is zero."""


class GpsInfeasibleError(ValueError):
    """The GPS-allocated capacity cannot carry the through aggregate."""


class ReducibleChainError(ValueError):
    """The generator matrix is singular or the chain is not irreducible."""


class NonReversibleError(ValueError):
    """The modulating chain fails detailed balance; only reversible chains are supported."""


class DegenerateSourceError(ValueError):
    """The source has no usable eigenstructure (e.g. a single-state chain)."""


class ZeroDriftError(ValueError):
    """A state's arrival rate equals the allocated capacity even after perturbation."""


class EigenvectorError(RuntimeError):
    """No positive eigenvector found; signals a numerical failure."""


class NoFeasibleSplitError(ValueError):
    """No capacity split satisfies both per-class stability conditions."""
