"""Exception hierarchy for ndmag."""


class NdmagError(Exception):
    """Base class for all errors raised by ndmag."""


class InvalidParameterError(NdmagError, ValueError):
    pass


class UnsupportedGeometryError(NdmagError, ValueError):
    """Field direction the orientation-averaged model cannot describe."""


class QuadratureResolutionError(NdmagError, ValueError):
    pass


class DimensionError(NdmagError, ValueError):
    pass


class EmptyTrainingError(NdmagError, ValueError):
    pass


class IllConditionedKernelError(NdmagError, ArithmeticError):
    pass


class InsufficientDataError(NdmagError, ValueError):
    pass


class FitNonConvergenceError(NdmagError, RuntimeError):
    pass


class UnidentifiableParametersError(NdmagError, ValueError):
    pass


class DatasetFormatError(NdmagError, ValueError):
    """Malformed dataset, manifest or record file.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
