"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`LatentMolError` so the CLI
can map them onto exit codes. ``DataError`` subclasses are problems with the
user's inputs (exit 2); everything else is a runtime failure (exit 3).
"""


class LatentMolError(Exception):
    pass


class DataError(LatentMolError):
    """Bad or unusable input data."""


# molgraph / codec
class InvalidGraph(DataError):
    pass


class UnencodableGraph(DataError):
    pass


class EmptyDictionary(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# tensor engine
class ShapeMismatch(LatentMolError):
    pass


class NotScalar(LatentMolError):
    pass


class TapeConsumed(LatentMolError):
    pass


class MissingGradient(LatentMolError):
    pass


# models
class BadIterationCount(LatentMolError):
    pass


class DivergedLoss(LatentMolError):
    pass


class IncompatibleCheckpoint(DataError):
    pass


# surrogate / oracles / analysis
class DimMismatch(LatentMolError):
    pass


class EmptyTrainingSet(DataError):
    pass


class MissingProperties(DataError):
    pass


class OracleFailure(LatentMolError):
    pass


class OracleUnavailable(LatentMolError):
    pass


class UnknownProperty(DataError):
    pass


class TooFewPoints(DataError):
    pass


class DegenerateSet(DataError):
    pass


class ConfigError(DataError):
    pass
