"""Exception hierarchy shared by all modules.

Each failure mode that a caller may want to react to has its own class, so
the CLI can map them onto exit codes without string matching.
"""


class HardyBVPError(Exception):
    """Base class for all package errors."""


class ConfigError(HardyBVPError):
    """Malformed or inconsistent configuration."""


class SingularNormalBlock(HardyBVPError):
    """The normal-normal block of the coefficients is (numerically) singular."""


class NotAccretive(HardyBVPError):
    """Coefficients fail the accretivity gate."""


class ZeroFrequency(HardyBVPError):
    """A symbol was requested at the zero frequency."""


class DegenerateSymbol(HardyBVPError):
    """The symbol has an eigenvalue on the imaginary axis."""


class WellPosednessFailure(HardyBVPError):
    """A restricted boundary map is singular or too ill conditioned."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class ZeroMeanViolation(HardyBVPError):
    """Boundary data on the torus has a nonzero mean."""


class ImaginaryAxisEigenvalue(HardyBVPError):
    """A discrete generator has an eigenvalue on the imaginary axis."""


class UndefinedOnSpectrum(HardyBVPError):
    """A holomorphic function is not defined at some eigenvalue."""


class SeriesDiverges(HardyBVPError):
    """The Neumann series cannot converge because the operator norm is >= 1."""


class NotHermitean(HardyBVPError):
    """A Hermitian-only check was requested for non-Hermitian coefficients."""


class NotBlock(HardyBVPError):
    """A block-only check was requested for non-block coefficients."""


class CoercivityFailure(HardyBVPError):
    """The discrete sesquilinear form is not coercive."""


class DegreeOverflow(HardyBVPError):
    """A form operation left the range of admissible degrees."""


class ConstraintViolation(HardyBVPError):
    """Boundary data for forms violates its differential constraint."""
