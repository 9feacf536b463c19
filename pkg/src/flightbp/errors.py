"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures to distinct, stable process exit statuses.
"""


class FlightBPError(Exception):
    exit_code = 1


class DimensionMismatch(FlightBPError, ValueError):
    exit_code = 3


class InvalidArchitecture(FlightBPError, ValueError):
    exit_code = 4


class StaleTrace(FlightBPError, ValueError):
    exit_code = 5


class NonFiniteUpdate(FlightBPError, ArithmeticError):
    exit_code = 6

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class EmptyInput(FlightBPError, ValueError):
    exit_code = 7


class EmptyDataset(EmptyInput):
    exit_code = 7


class MissingHeader(FlightBPError, KeyError):
    exit_code = 8

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"missing column(s) in CSV header: {', '.join(self.columns)}")

    def __str__(self):
        return self.args[0]


class MalformedCsv(FlightBPError, ValueError):
    exit_code = 9


class SchemaMismatch(FlightBPError, ValueError):
    exit_code = 10

    def __init__(self, message, expected=(), found=()):
        super().__init__(message)
        self.expected = list(expected)
        self.found = list(found)


class InsufficientClassSamples(FlightBPError, ValueError):
    exit_code = 11


class IndexOutOfRange(FlightBPError, IndexError):
    exit_code = 12


class EmptyMatrix(FlightBPError, ValueError):
    exit_code = 13


class ConfigError(FlightBPError, ValueError):
    """Aggregated configuration problems; ``problems`` lists each one."""

    exit_code = 2

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
