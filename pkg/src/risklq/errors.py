"""Exception types shared across the package."""

from __future__ import annotations


class RiskLQError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(RiskLQError):
    """Matrix or vector dimensions are mutually inconsistent."""


class NotPSD(RiskLQError):
    """A matrix required to be symmetric positive semi-definite is not."""

    def __init__(self, name: str, min_eig: float = float("nan"), detail: str = ""):
        self.name = name
        self.min_eig = min_eig
        msg = detail or f"{name} is not positive semi-definite (min eigenvalue {min_eig:.3e})"
        super().__init__(msg)


class NotPD(RiskLQError):
    """A matrix required to be symmetric positive definite is not."""

    def __init__(self, name: str, min_eig: float = float("nan"), detail: str = ""):
        self.name = name
        self.min_eig = min_eig
        msg = detail or f"{name} is not positive definite (min eigenvalue {min_eig:.3e})"
        super().__init__(msg)


class ProbabilityOutOfRange(RiskLQError):
    """Channel failure probability outside [0, 1]."""


class SingularInnovation(RiskLQError):
    """Innovation covariance is indefinite or non-finite; the filter gain is undefined."""


class NotSolvable(RiskLQError):
    """A gain matrix lost positive definiteness, so no unique optimal policy exists."""

    def __init__(self, k: int, which_matrix: str):
        self.k = k
        self.which_matrix = which_matrix
        super().__init__(f"{which_matrix} is not positive definite at step {k}; no unique solution")


class Diverged(RiskLQError):
    """Fixed-point iteration grew without bound."""


class HorizonMismatch(RiskLQError):
    """Solution and covariance schedule cover different horizons."""


class InfeasibleWithinCap(RiskLQError):
    """Risk target unreachable for any multiplier below the search cap."""

    def __init__(self, mu_cap: float, best_risk: float):
        self.mu_cap = mu_cap
        self.best_risk = best_risk
        super().__init__(
            f"risk target unreachable below mu = {mu_cap:.6g} (best risk {best_risk:.6g})"
        )


class MonotonicityViolation(RiskLQError):
    """Observed risk values increase with the multiplier; bisection premise broken."""


class CertificateFailed(RiskLQError):
    """A duality optimality condition failed."""

    def __init__(self, item: str, detail: str = ""):
        self.item = item
        super().__init__(f"optimality certificate failed: {item}" + (f" ({detail})" if detail else ""))
