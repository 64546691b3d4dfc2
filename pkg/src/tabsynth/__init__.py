"""Synthesize tabular data with a small language model.

Rows are rendered as natural-language clauses, a byte-level transformer is
trained on clause permutations, and sampling decodes generated text back
into schema-valid rows, optionally under fixed feature values. The eval
suite scores synthetic tables on ML efficiency, distance to closest
record, discriminator accuracy, and GMM likelihood fitness.
"""

from .codec import Clause, InvalidReason, ParseOutcome, decode, encode_table
from .errors import TabsynthError
from .lm import (
    Checkpoint,
    LmConfig,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .sampling import Mode, SampleReport, SampleSpec, impute, sample
from .tables import (
    Feature,
    FeatureKind,
    Schema,
    Table,
    fit_schema_stats,
    from_rows,
    load_csv,
    save_csv,
    split,
)

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "Clause",
    "Feature",
    "FeatureKind",
    "InvalidReason",
    "LmConfig",
    "Mode",
    "ParseOutcome",
    "SampleReport",
    "SampleSpec",
    "Schema",
    "Table",
    "TabsynthError",
    "TrainConfig",
    "decode",
    "encode_table",
    "fit_schema_stats",
    "from_rows",
    "impute",
    "load_checkpoint",
    "load_csv",
    "sample",
    "save_checkpoint",
    "save_csv",
    "split",
    "train",
    "__version__",
]
