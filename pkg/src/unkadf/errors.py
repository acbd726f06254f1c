"""Exception hierarchy.

Every error carries a short machine-readable ``error_class`` and the process
exit code the CLI maps it to (2 usage, 3 data, 4 artifact, 5 numerical).
"""


class UnkadfError(Exception):
    error_class = "error"
    exit_code = 1


class ConfigError(UnkadfError, ValueError):
    error_class = "config"
    exit_code = 2


# data problems -------------------------------------------------------------

class DataError(UnkadfError):
    error_class = "data"
    exit_code = 3


class DimensionError(DataError, ValueError):
    error_class = "dimension"


class ParseError(DataError, ValueError):
    error_class = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(DataError):
    error_class = "empty-dataset"


class InsufficientDataError(DataError):
    error_class = "insufficient-data"


class EmptyEvaluationError(DataError):
    error_class = "empty-evaluation"


# artifact problems ---------------------------------------------------------

class ArtifactError(UnkadfError):
    error_class = "artifact"
    exit_code = 4


class CorruptionError(ArtifactError):
    error_class = "corruption"


class VersionError(ArtifactError):
    error_class = "version"


class MalformedArtifactError(ArtifactError):
    error_class = "malformed-artifact"


class IncompatibleArtifactError(ArtifactError):
    error_class = "incompatible-artifact"


class RefuseToSaveError(ArtifactError):
    error_class = "refuse-to-save"


# numerical problems --------------------------------------------------------

class NumericalError(UnkadfError, ArithmeticError):
    error_class = "numerical"
    exit_code = 5


class EvaluationError(NumericalError):
    """A loss evaluated to NaN or Inf."""
    error_class = "evaluation"


class DivergenceError(NumericalError):
    error_class = "divergence"


class UndefinedMetricError(NumericalError):
    error_class = "undefined-metric"


class FrozenParameterError(NumericalError):
    error_class = "frozen-violation"


class GradientCheckError(NumericalError):
    error_class = "gradcheck"
