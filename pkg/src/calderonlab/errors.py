"""Exception types shared across the package.

Separate classes keep CLI exit codes honest: configuration problems,
analytic failures (ellipticity, spectral cutting), and numerical
resolution failures (unresolved ranks, under-resolved contours) must be
distinguishable by callers.
"""


class CalderonLabError(Exception):
    """Base class for all package errors."""


class ConfigError(CalderonLabError):
    """Invalid configuration, spec file, or argument."""


class EllipticityError(CalderonLabError):
    """Principal symbol singular at a sampled covector."""


class SpectralCuttingError(CalderonLabError):
    """Tangential symbol has an eigenvalue too close to the imaginary axis."""


class ContourResolutionError(CalderonLabError):
    """Contour invalid or quadrature disagrees with the spectral oracle."""


class RankGapError(CalderonLabError):
    """A rank decision lacks the required singular-value gap."""


class NumericalInconsistencyError(CalderonLabError):
    """Two routes to the same quantity disagree beyond the guard band."""


class GeometryMismatchError(CalderonLabError):
    """Two objects built on different discretizations were combined."""
