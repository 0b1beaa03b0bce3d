"""Exception hierarchy shared by all modules."""


class VowelHDError(Exception):
    """Base class for every error raised by this package."""


class DataError(VowelHDError):
    """Bad or inconsistent input data (CLI exit code 2)."""


class DegeneracyError(VowelHDError):
    """Statistically degenerate input (CLI exit code 3)."""


# audio_io
class FormatError(DataError):
    pass


class ChannelError(FormatError):
    pass


class CorruptFileError(DataError):
    pass


class EmptyInputError(DataError):
    pass


# dataset
class ValidationError(DataError):
    pass


class SchemaError(DataError):
    pass


class DuplicateError(DataError):
    pass


class BoundsError(DataError):
    pass


class TooShortError(DataError):
    pass


# signal analysis
class DecompositionError(DataError):
    pass


class DegenerateSignalError(DataError):
    pass


# features / stats / model
class EmptyAggregateError(DataError):
    pass


class ConstantInputError(DegeneracyError):
    pass


class SingleClassError(DegeneracyError):
    pass


class DimensionError(DataError):
    pass


class JoinError(DataError):
    pass


class GeneratorError(VowelHDError):
    pass
