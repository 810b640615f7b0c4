"""Exception hierarchy shared by all rfimap modules."""


class RfiMapError(Exception):
    """Base class for every error raised by rfimap."""


# -- ingestion ---------------------------------------------------------------

class FrameError(RfiMapError, ValueError):
    pass


class BadSync(FrameError):
    pass


class BadChecksum(FrameError):
    pass


class Truncated(FrameError):
    pass


class LayoutMismatch(RfiMapError, ValueError):
    pass


class PayloadTooShort(RfiMapError, ValueError):
    pass


class SchemaViolation(RfiMapError, ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class Unreadable(RfiMapError, OSError):
    pass


# -- calibration -------------------------------------------------------------

class AlreadyAdjusted(RfiMapError, ValueError):
    pass


class Underdetermined(RfiMapError, ValueError):
    pass


class DegenerateTemps(RfiMapError, ValueError):
    pass


class TempOutOfRange(RfiMapError, ValueError):
    pass


class BandNotCovered(RfiMapError, ValueError):
    pass


class BinMisalignment(RfiMapError, ValueError):
    pass


class Saturated(RfiMapError, ValueError):
    """Input outside the unit-curve bounds; ``clamped`` holds the clamped output."""

    def __init__(self, message, clamped):
        super().__init__(message)
        self.clamped = clamped


# -- nominal model / regions ------------------------------------------------

class TooFewPoints(RfiMapError, ValueError):
    pass


class DegenerateCovariance(RfiMapError, ValueError):
    pass


class EllipseExcludesMean(RfiMapError, ValueError):
    pass


# -- optimizer ----------------------------------------------------------------

class DegenerateProposal(RfiMapError, ValueError):
    pass


class NoFeasiblePoint(RfiMapError, RuntimeError):
    pass


# -- simulator / evaluation / cli --------------------------------------------

class NoRamp(RfiMapError, ValueError):
    pass


class LengthMismatch(RfiMapError, ValueError):
    pass


class WindowOutOfRange(RfiMapError, ValueError):
    pass


class HashMismatch(RfiMapError, ValueError):
    pass


class OutputExists(RfiMapError, FileExistsError):
    pass
