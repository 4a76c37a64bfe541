"""Exception types. Each carries a stable ``code`` used by the CLI and reports."""

from __future__ import annotations


class LiftLabError(ValueError):
    code = "LIFTLAB_ERROR"

    def __init__(self, message: str, *, code: str | None = None, index: int | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.index = index


class ScheduleError(LiftLabError):
    code = "SCHEDULE_ERROR"


class DimensionMismatch(LiftLabError):
    code = "DIMENSION_MISMATCH"


class NonfiniteInput(LiftLabError, ArithmeticError):
    code = "NONFINITE_INPUT"


class InvalidParams(LiftLabError):
    code = "INVALID_PARAMS"


class LevelOutOfRange(LiftLabError):
    code = "LEVEL_OUT_OF_RANGE"


class RankMismatch(LiftLabError):
    code = "RANK_MISMATCH"


class FDStepOutOfRange(LiftLabError):
    code = "FD_STEP_OUT_OF_RANGE"


class SetTooLarge(LiftLabError):
    code = "SET_TOO_LARGE"
