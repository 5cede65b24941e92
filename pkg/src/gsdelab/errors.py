"""Exception hierarchy shared by every solver in the package."""


class GsdeError(Exception):
    """Base class for all errors raised by gsdelab."""


class NumericalEvaluation(GsdeError):
    """A coefficient or candidate evaluated to a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class InverseMapDivergence(GsdeError):
    """Newton iteration for ``y + g(t, y, mark) = x`` did not converge."""


class SingularJumpMap(GsdeError):
    """The jump transform ``x -> x + g`` has a (near) singular Jacobian."""


class InvalidDiscretization(GsdeError):
    """Step size, horizon or refinement ratio is not admissible."""


class BlowUp(GsdeError):
    """A state or field became non-finite during integration."""

    def __init__(self, message, last_finite_time=None):
        super().__init__(message)
        self.last_finite_time = last_finite_time


class DegenerateJacobian(GsdeError):
    """The propagated Jacobian became singular or non-finite."""


class IllConditionedEstimate(GsdeError):
    """A Monte Carlo estimate has too small an effective sample size."""


class DomainEscape(GsdeError):
    """A trajectory left the truncated grid domain."""

    def __init__(self, message, escape_time=None):
        super().__init__(message)
        self.escape_time = escape_time


class UnstableDiscretization(GsdeError):
    """The explicit grid scheme violates its stability constraint."""


class MassLoss(GsdeError):
    """The evolved density lost (or gained) more mass than allowed."""


class PositivityLoss(GsdeError):
    """A logarithm of a non-positive density value was requested."""


class RatioUndefined(GsdeError):
    """A kernel ratio was requested where the denominator is too small."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points
