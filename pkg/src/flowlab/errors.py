"""Exception hierarchy. ``exit_code`` is the stable CLI exit status for each class."""


class FlowlabError(Exception):
    exit_code = 1


class ConfigError(FlowlabError, ValueError):
    """Invalid input, configuration, dimension or grid."""

    exit_code = 2


class InvalidDimensionError(ConfigError):
    pass


class InvalidGridError(ConfigError):
    pass


class ConditionDimensionError(ConfigError):
    pass


class TimeMismatchError(ConfigError):
    pass


class SingularTimeError(ConfigError):
    """A velocity was requested at (or too close to) t = 1."""


class DivergenceError(FlowlabError, ArithmeticError):
    """Integration produced non-finite values."""

    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CapabilityError(FlowlabError):
    """The requested operation is not available for this field."""

    exit_code = 4


class SingularInversionError(CapabilityError):
    pass


class DegenerateSplitError(FlowlabError):
    """Transition index collapsed onto 0 or n."""

    exit_code = 5
