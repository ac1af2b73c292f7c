"""Exception hierarchy shared across the package."""


class BasisProjError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BasisProjError, ValueError):
    pass


class CapacityError(InvalidArgumentError):
    """An initializer cannot supply the requested number of bases."""


class ConfigError(BasisProjError, ValueError):
    pass


class DataError(BasisProjError):
    pass


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class TrainingError(BasisProjError, ArithmeticError):
    """Numerical failure during training (NaN loss or gradient)."""


class StateError(BasisProjError, RuntimeError):
    pass
