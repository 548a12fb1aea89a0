"""Exception types shared across the toolkit."""


class CoverkitError(Exception):
    """Base class for all toolkit errors."""


class DuplicateSites(CoverkitError):
    """Two generator sites coincide (closer than the geometric tolerance)."""


class SiteOutsideWorkspace(CoverkitError):
    """A generator site lies outside the workspace polygon."""


class EvalOutsideSupport(CoverkitError):
    """Density log-gradient requested where the density underflows to zero."""


class KernelMismatch(CoverkitError):
    """Power cost kernel paired with a plain Voronoi partition of unequal-radius agents."""


class NonMonotoneDescent(CoverkitError):
    """Descent cost increased beyond slack; quadrature is too coarse for this density."""


class NoConvergence(CoverkitError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class SupportViolation(CoverkitError):
    """KL divergence requested against a density that vanishes on significant mass."""


class InfeasibleShape(CoverkitError):
    """Assignment needs at least as many candidate sites as agents."""


class SearchSpaceTooLarge(CoverkitError):
    """Brute-force enumeration would exceed the configured subset budget."""


class SizeLimit(CoverkitError):
    """Transport problem exceeds the m*k size cap."""
