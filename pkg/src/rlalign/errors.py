"""Exception hierarchy. Each class maps to one CLI exit code."""


class RLAlignError(Exception):
    exit_code = 1


class ConfigError(RLAlignError, ValueError):
    exit_code = 2


class InputError(RLAlignError, ValueError):
    exit_code = 2


class DimensionError(RLAlignError, ValueError):
    exit_code = 2


class BoundsError(RLAlignError, ValueError):
    exit_code = 2


class DataError(RLAlignError, ValueError):
    exit_code = 2


class StateError(RLAlignError, RuntimeError):
    exit_code = 2


class IOFailure(RLAlignError, OSError):
    exit_code = 3


class NumericError(RLAlignError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class FormatError(RLAlignError, ValueError):
    exit_code = 5
