class NoisySTError(Exception):
    pass


class ConfigError(NoisySTError, ValueError):
    pass


class UsageError(NoisySTError, ValueError):
    pass


class NumericError(NoisySTError, ArithmeticError):
    def __init__(self, message, array_name=None):
        super().__init__(message)
        self.array_name = array_name


class StageError(NoisySTError):
    """
    Raised by the self-training loop; carries the iteration index and
    stage name of the failure.
    """

    def __init__(self, iteration, stage, cause):
        self.iteration = iteration
        self.stage = stage
        self.cause = cause
        super().__init__(f"iteration {iteration}, stage {stage}: {cause}")
