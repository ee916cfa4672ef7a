"""Exception types raised across the package."""


class GazeAffectError(Exception):
    """Base class for every error the package raises on purpose."""


# --- ingestion -----------------------------------------------------------

class IngestError(GazeAffectError, ValueError):
    """A file could not be turned into a valid record."""

    def __init__(self, message, path=None, row=None):
        self.path = path
        self.row = row
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EmptyFile(IngestError):
    pass


class MalformedFile(IngestError):
    pass


class MissingColumn(IngestError):
    pass


class MalformedValue(IngestError):
    pass


class NonFiniteValue(IngestError):
    pass


class NonMonotoneTimestamp(IngestError):
    pass


class RaggedRow(IngestError):
    pass


class DuplicateSegmentIndex(IngestError):
    pass


class GapInIndices(IngestError):
    pass


# --- segmentation / features --------------------------------------------

class InvalidWindowing(GazeAffectError, ValueError):
    pass


class CountMismatch(GazeAffectError, ValueError):
    def __init__(self, features, labels):
        self.features = features
        self.labels = labels
        super().__init__(f"feature rows ({features}) != label rows ({labels})")


class TooFewRecordings(GazeAffectError, ValueError):
    pass


class SegmentOutOfRange(GazeAffectError, ValueError):
    pass


# --- learning -------------------------------------------------------------

class EmptyTrainingSet(GazeAffectError, ValueError):
    pass


class TooFewInstances(GazeAffectError, ValueError):
    pass


class DimensionMismatch(GazeAffectError, ValueError):
    pass


class ModelFormatError(GazeAffectError, ValueError):
    pass


# --- fusion ---------------------------------------------------------------

class AlignmentError(GazeAffectError, ValueError):
    pass


class LabelMismatch(GazeAffectError, ValueError):
    pass


class LengthMismatch(GazeAffectError, ValueError):
    pass


class PlanIncomplete(GazeAffectError, ValueError):
    pass


class PlanFormatError(GazeAffectError, ValueError):
    pass


# --- metrics --------------------------------------------------------------

class ZeroVariance(GazeAffectError, ValueError):
    def __init__(self, side):
        self.side = side
        super().__init__(f"{side} sequence has zero variance")


class DegenerateDenominator(GazeAffectError, ValueError):
    pass
