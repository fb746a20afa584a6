class EvalBiasError(Exception):
    """Base class for all toolkit errors."""


class GridError(EvalBiasError, ValueError):
    pass


class GridMismatchError(EvalBiasError, ValueError):
    pass


class DegenerateDensityError(EvalBiasError, ValueError):
    pass


class OutOfRangeError(EvalBiasError, ValueError):
    def __init__(self, count, total):
        super().__init__(f"{count} of {total} samples fall outside the grid range")
        self.count = count
        self.total = total


class DomainError(EvalBiasError, ValueError):
    """A loss was evaluated outside its domain (e.g. log of a non-positive value)."""


class InfeasibleTauError(EvalBiasError, ValueError):
    def __init__(self, tau, h_min, h_max):
        super().__init__(f"tau={float(tau)!r} is infeasible: need {float(h_min)!r} < tau < {float(h_max)!r} (within 1e-9)")
        self.tau = tau
        self.h_min = h_min
        self.h_max = h_max


class BracketError(EvalBiasError, RuntimeError):
    pass


class EmptySearchError(EvalBiasError, ValueError):
    pass


class UnsatisfiableRuleError(EvalBiasError, ValueError):
    pass


class DegenerateArgminWarning(UserWarning):
    """Several grid points share the minimum energy; the Gibbs form is still well-defined."""
