"""Exception hierarchy shared by all pipeline stages.

Every error family carries a distinct process exit code so the CLI can map
failures to documented codes (see README). Library users catch the classes;
the CLI translates them via ``exit_code``.
"""


class OxipipeError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1

    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


# --- configuration / IO -----------------------------------------------------

class ConfigInvalid(OxipipeError):
    exit_code = 2


class IoFailure(OxipipeError):
    exit_code = 3


# --- frameio ------------------------------------------------------------------

class BadMagic(OxipipeError):
    exit_code = 10


class TruncatedPayload(OxipipeError):
    exit_code = 11


class ZeroGeometry(OxipipeError):
    exit_code = 12


class TrailingBytes(OxipipeError):
    """Strict parsing: bytes remain after the declared payload."""

    exit_code = 13


# --- synth --------------------------------------------------------------------

class NyquistViolation(OxipipeError):
    exit_code = 20


class RangeOverflow(OxipipeError):
    exit_code = 21


class GeometryTooSmall(OxipipeError):
    exit_code = 22


# --- roi ----------------------------------------------------------------------

class NoSeparation(OxipipeError):
    exit_code = 30


class EmptyMask(OxipipeError):
    exit_code = 31


# --- dsp ----------------------------------------------------------------------

class BadBand(OxipipeError):
    exit_code = 40


class TooShort(OxipipeError):
    exit_code = 41


# --- ror ----------------------------------------------------------------------

class DegenerateDC(OxipipeError):
    exit_code = 50


class RankDeficient(OxipipeError):
    exit_code = 51


# --- cnn ----------------------------------------------------------------------

class ShapeMismatch(OxipipeError):
    exit_code = 60


class DivergenceDetected(OxipipeError):
    exit_code = 61


class LengthMismatch(OxipipeError):
    exit_code = 62


class EmptyInput(OxipipeError):
    exit_code = 63


class SchemaVersionMismatch(OxipipeError):
    exit_code = 64


# --- explain --------------------------------------------------------------------

class NumericalBlowup(OxipipeError):
    exit_code = 70


class WrongFirstLayer(OxipipeError):
    exit_code = 71


# --- harness --------------------------------------------------------------------

class TooFewCycles(OxipipeError):
    exit_code = 80


class EmptyPartition(OxipipeError):
    exit_code = 81


class GridTooLarge(OxipipeError):
    exit_code = 82


class ConfoundedFactors(OxipipeError):
    exit_code = 83


# --- plotting -------------------------------------------------------------------

class UnknownColumns(OxipipeError):
    exit_code = 90
