"""Error hierarchy shared by services and the CLI.

Every error carries the process exit status the CLI reports for it:
2 for configuration or input problems, 3 for I/O failures, 4 when the
pipeline cannot produce an estimate from the data.
"""


class CalibrationError(Exception):
    """Base class for all calibration errors"""
    exit_code = 4


# === INPUT / CONFIG (exit 2) ===

class ConfigError(CalibrationError):
    exit_code = 2


class InvalidSpec(ConfigError):
    """Scene or experiment description is not usable"""


class FormatError(CalibrationError):
    """Malformed PGM stream"""
    exit_code = 2

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DimensionMismatch(CalibrationError):
    exit_code = 2


class LengthMismatch(CalibrationError):
    exit_code = 2


# === I/O (exit 3) ===

class DatasetIOError(CalibrationError):
    exit_code = 3


# === GEOMETRY ===

class DegenerateCameras(CalibrationError):
    """Camera centres coincide, no epipolar geometry exists"""


class DegenerateLine(CalibrationError):
    """A homogeneous line has (a, b) = (0, 0)"""


class IllConditioned(CalibrationError):
    """Common intersection of a line set is ambiguous"""


class NotConcurrent(CalibrationError):
    """Lines of one image do not meet in a single point"""


class DegeneratePencil(CalibrationError):
    """Two lines of a pencil coincide or concurrency was lost"""


# === SILHOUETTES ===

class EmptyMask(CalibrationError):
    pass


class DegenerateHull(CalibrationError):
    pass


# === ESTIMATION ===

class NotEnoughFrames(CalibrationError):
    pass


class NotEnoughCandidates(CalibrationError):
    pass


class EpipoleInsideHull(CalibrationError):
    """No tangent to the silhouette passes through the hypothesized epipole"""


class AllDegenerate(CalibrationError):
    """No hypothesis produced a valid fundamental matrix"""


class InsufficientPoints(CalibrationError):
    pass


class NonConvergence(CalibrationError):
    pass


class NoFrontierPoints(CalibrationError):
    pass


class NoData(CalibrationError):
    pass
