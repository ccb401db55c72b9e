"""Exception hierarchy shared by every module."""


class MofsError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(MofsError, ValueError):
    pass


class InvalidGroupsError(InvalidConfigError):
    pass


class DegenerateSplitError(MofsError, ValueError):
    pass


class SchemaMismatchError(MofsError):
    """A saved dataset or run directory does not match its metadata."""


class InvalidKError(MofsError, ValueError):
    pass


class SingleClusterInputError(MofsError, ValueError):
    pass


class ShapeMismatchError(MofsError, ValueError):
    pass


class SingleClassFitError(MofsError, ValueError):
    pass


class EmptyInputError(MofsError, ValueError):
    pass


class EmptySubsetError(MofsError, ValueError):
    pass


class ObjectiveRangeError(MofsError, ArithmeticError):
    """An objective value fell outside its mathematically admissible range."""


class BudgetExceededError(MofsError, RuntimeError):
    pass


class TooFewRecordsError(MofsError, ValueError):
    pass


class InvalidFlagCombinationError(MofsError, ValueError):
    pass


class MissingDatasetError(MofsError, FileNotFoundError):
    pass


class MissingRunError(MofsError, FileNotFoundError):
    pass
