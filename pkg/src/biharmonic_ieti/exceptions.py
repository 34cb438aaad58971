"""Exception hierarchy shared by all modules."""


class IetiError(Exception):
    """Base class for every error raised by this package."""


class SingularMatrix(IetiError):
    """A factorization met a (numerically) vanishing pivot."""


class NotSpd(IetiError):
    """A matrix expected to be symmetric positive definite is not."""


class IndefiniteOperator(IetiError):
    """CG encountered a search direction with non-positive curvature."""


class NotConverged(IetiError):
    """An iterative solver hit its iteration limit.

    The partial result is attached as ``result`` when available.
    """

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class DegenerateJacobian(IetiError):
    """The geometry map has a (near) vanishing Jacobian determinant."""


class NotMatching(IetiError):
    """Two patches do not match along a declared interface."""


class TopologyError(IetiError):
    """The patch connectivity is inconsistent."""


class ParseError(IetiError):
    """A multi-patch description could not be parsed."""


class UnknownDomain(IetiError):
    """The requested built-in domain does not exist."""


class InvalidKnotVector(IetiError):
    """A knot vector violates the discretization requirements."""
