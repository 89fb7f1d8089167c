"""Exception types. ``exit_code`` is what the CLI returns when one escapes."""


class SipvolError(Exception):
    exit_code = 1


class ConfigError(SipvolError, ValueError):
    exit_code = 2


class DataError(SipvolError, ValueError):
    exit_code = 3


class NumericalError(SipvolError, ArithmeticError):
    exit_code = 4


class NonstationaryHARError(ConfigError):
    pass


class PositivityError(NumericalError):
    pass


class EmptyWindowError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DegenerateTestError(NumericalError):
    pass
