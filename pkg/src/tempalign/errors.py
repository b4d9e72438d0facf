"""Exception hierarchy.

Each error class carries the process exit code the CLI maps it to:
1 for usage/configuration problems, 2 for bad input data, 3 for numeric
failures.
"""


class TempAlignError(Exception):
    exit_code = 1


class ConfigError(TempAlignError):
    exit_code = 1


class ParameterError(ConfigError, ValueError):
    pass


class DimensionError(TempAlignError, ValueError):
    exit_code = 2


class ContractError(TempAlignError, ValueError):
    exit_code = 1


class DataError(TempAlignError):
    exit_code = 2


class FormatError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class EmptyDictionaryError(DataError):
    pass


class NumericError(TempAlignError, ArithmeticError):
    exit_code = 3
