class B1PredictorError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(B1PredictorError, ValueError):
    pass


class EmptyInputError(B1PredictorError, ValueError):
    pass


class TrainingDivergedError(B1PredictorError, RuntimeError):
    """Loss became non-finite; carries the history up to the abort."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history
