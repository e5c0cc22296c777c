"""Exception hierarchy.

Every error carries enough context (node index, operator name, h value)
to locate the failure without re-running.
"""


class BoresError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BoresError):
    """Invalid configuration value or file.

    ``violations`` collects every problem found, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ModelError(BoresError):
    """A model-construction hypothesis failed (gap, floor, ordering)."""


class ContourError(ModelError):
    """Spectrum too close to the projection contour.

    ``node`` is the offending grid-node index (or -1 for the frozen
    boundary sample).
    """

    def __init__(self, msg, node):
        self.node = node
        super().__init__(f"{msg} (node {node})")


class HypothesisError(BoresError):
    """A quantitative operator bound required by the reduction fails.

    ``bound`` names the violated inequality.
    """

    def __init__(self, msg, bound):
        self.bound = bound
        super().__init__(f"{msg} [bound: {bound}]")


class ConditioningError(BoresError):
    """A linear solve is too ill-conditioned to trust."""


class SectorError(BoresError):
    """Curve evaluation requested outside its declared analyticity sector."""


class DistortionError(BoresError):
    """Degenerate distortion: 1 + mu*omega'(r) vanishing at a node."""


class ResolutionError(BoresError):
    """Grid sequence did not converge; carries the convergence table."""

    def __init__(self, msg, table=None):
        self.table = table if table is not None else []
        super().__init__(msg)


class NumericalError(BoresError):
    """Eigen/linear solver failed to converge; carries an iteration log."""

    def __init__(self, msg, log=None):
        self.log = log if log is not None else []
        super().__init__(msg)


class AdmissibilityError(BoresError):
    """Exponential weight violates the admissibility bound.

    ``nodes`` lists violating grid-node indices.
    """

    def __init__(self, msg, nodes):
        self.nodes = list(nodes)
        super().__init__(f"{msg} (nodes {self.nodes[:8]}{'...' if len(self.nodes) > 8 else ''})")


class BarrierError(BoresError):
    """Barrier integral requested on an interval where the curve dips below
    the reference energy."""


class TrackingError(BoresError):
    """Eigenvalue branch lost during a nonlinear solve or parameter sweep."""
