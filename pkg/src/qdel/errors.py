"""Exception hierarchy for qdel.

Separate classes (rather than bare ValueError) so callers can distinguish
between invalid inputs and numerical failures discovered at runtime.
"""


class QdelError(Exception):
    """Base class for all qdel errors."""


class DomainViolation(QdelError):
    """An inverse exists but its operator norm exceeds the domain bound.

    Attributes
    ----------
    denominator : the offending denominator expression (or a description)
    norm : estimated operator norm of its inverse
    bound : the domain bound that was exceeded
    """

    def __init__(self, denominator, norm, bound):
        self.denominator = denominator
        self.norm = norm
        self.bound = bound
        super().__init__(
            f"inverse norm {norm:.3e} exceeds domain bound {bound:.3e} "
            f"for denominator {denominator}"
        )


class SingularDenominator(QdelError):
    """A denominator is numerically singular (condition above 1/eps)."""


class NotSelfAdjoint(QdelError):
    """Operation requires a self-adjoint expression."""


class SingularLhat(QdelError):
    """The lower-right pencil block is not invertible within the allowed cap."""


class SingularPencil(QdelError):
    """The z-shifted pencil evaluation is numerically singular."""


class SizeMismatch(QdelError):
    """Matrix argument has the wrong dimension."""


class NonConvergence(QdelError):
    """Iterative solver failed to reach tolerance.

    Carries the best residual seen so the caller can decide what to do.
    """

    def __init__(self, best_residual, message=""):
        self.best_residual = best_residual
        super().__init__(message or f"solver stalled at residual {best_residual:.3e}")


class HerglotzViolation(QdelError):
    """Im M developed a significantly negative eigenvalue (wrong branch)."""

    def __init__(self, min_eig):
        self.min_eig = min_eig
        super().__init__(f"Im M has eigenvalue {min_eig:.3e} < -1e-6")


class SingularStabilityOperator(QdelError):
    """Stability operator is numerically singular (spectral edge)."""


class InvalidParams(QdelError):
    """Model parameters violate their constraints."""


class NoPositiveRoot(QdelError):
    """The edge-coefficient polynomial has no (unique) positive root."""


class OutOfRange(QdelError):
    """Argument outside the validity range of a closed-form expression."""


class NoConvergence(QdelError):
    """Eigenvalue backend failed to converge even after perturbation."""


class ParseError(QdelError):
    """Expression DSL could not be parsed."""
