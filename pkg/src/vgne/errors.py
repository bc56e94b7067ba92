"""Exception types shared across the package."""


class VgneError(Exception):
    """Base class for package-specific failures."""


class DimensionError(VgneError, ValueError):
    """An array has the wrong shape; message names expected vs received."""


class SpecFormatError(VgneError, ValueError):
    """A spec/graph/manifest document is malformed; message names the field."""


class SpecVersionError(SpecFormatError):
    """The document declares an unsupported format version."""


class StepSizeError(VgneError, ValueError):
    """Step sizes violate the convergence or positive-definiteness bounds."""


class DivergenceError(VgneError, RuntimeError):
    """An iterate became non-finite; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class ConstantsUnavailableError(VgneError, ValueError):
    """Strong-monotonicity constants are required but not known."""


class OracleBudgetError(VgneError, RuntimeError):
    """The certified-solution enumeration would exceed its candidate budget."""


class EquilibriumCountError(VgneError, RuntimeError):
    """The certified enumeration found no solution, or several distinct ones."""


class GraphError(VgneError, ValueError):
    """A communication graph is malformed or cannot be sampled as requested."""
