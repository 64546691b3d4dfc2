"""Exception hierarchy shared across the package.

Every error carries a ``kind`` used by the service layer (HTTP status) and the
CLI (exit code): "config" for bad inputs/schemas, "training" for aborted
optimization, "budget" for exhausted sampling budgets.
"""

from __future__ import annotations


class TabsynthError(Exception):
    kind = "config"


# -- data loading / table validation ---------------------------------------

class DataError(TabsynthError):
    pass


class RaggedRowsError(DataError):
    def __init__(self, row_index: int, expected: int, got: int):
        super().__init__(
            f"row {row_index} has {got} cells, expected {expected}"
        )
        self.row_index = row_index


class EmptyTableError(DataError):
    pass


class InvalidFractionError(DataError):
    pass


class SchemaValidationError(DataError):
    pass


# -- textual codec ----------------------------------------------------------

class CodecError(TabsynthError):
    pass


class BadPermutationError(CodecError):
    pass


class UnknownFeatureError(CodecError):
    pass


class DuplicateFeatureError(CodecError):
    pass


# -- tokenizer --------------------------------------------------------------

class TokenizerError(TabsynthError):
    pass


class TargetTooSmallError(TokenizerError):
    pass


class UnknownIdError(TokenizerError):
    pass


# -- language model ---------------------------------------------------------

class LmError(TabsynthError):
    pass


class ContextOverflowError(LmError):
    pass


class ShapeMismatchError(LmError):
    pass


class NonFiniteLossError(LmError):
    kind = "training"

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


class CheckpointIoError(LmError):
    pass


class VersionMismatchError(LmError):
    pass


# -- sampling ---------------------------------------------------------------

class SamplingError(TabsynthError):
    pass


class NonFiniteLogitsError(SamplingError):
    pass


class ConstraintUnsatisfiableError(SamplingError):
    pass


class AttemptBudgetExhaustedError(SamplingError):
    kind = "budget"

    def __init__(self, message: str, invalid_reasons: dict[str, int]):
        super().__init__(f"{message}; invalid reasons: {invalid_reasons}")
        self.invalid_reasons = invalid_reasons


# -- evaluation -------------------------------------------------------------

class EvalError(TabsynthError):
    pass


class SchemaMismatchError(EvalError):
    pass


class TooFewRowsError(EvalError):
    pass


class SingleClassTargetError(EvalError):
    pass


class NonNumericSchemaError(EvalError):
    pass


class NonNumericFeatureError(EvalError):
    pass


class EmDegenerateError(EvalError):
    pass


# -- benchmark generators ---------------------------------------------------

class InvalidSpecError(TabsynthError):
    pass


# -- run configuration (service / cli) --------------------------------------

class ConfigError(TabsynthError):
    pass


class UnknownConfigKeyError(ConfigError):
    pass


class MissingPathError(ConfigError):
    pass
