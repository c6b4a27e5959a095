"""Exception hierarchy shared across the package.

Configuration problems (bad inputs, bad config files, unsupported scene
settings) and numerical problems (non-converged quadrature, degenerate
fits, detector saturation) are kept on separate branches so the CLI can
map them to distinct exit codes.
"""


class SimulationError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(SimulationError):
    """Invalid configuration value, file, or unsupported combination."""


class UnsupportedSceneError(ConfigurationError):
    """Operation called on a scene it is not defined for."""


class NumericalError(SimulationError):
    """A numerical procedure failed to reach its stated tolerance."""


class SaturationError(NumericalError):
    """Quadrant-detector signal outside its invertible range."""


class FitError(NumericalError):
    """Calibration polynomial fit is underdetermined or ill-conditioned."""


class SymmetrizationError(NumericalError):
    """Two-source curve is not usable (non-monotone near zero)."""
