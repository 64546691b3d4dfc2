"""Convert rows to clause text and parse generated text back into rows.

The wire grammar is ``<name> is <value>`` clauses joined by ", " with a bare
trailing comma, e.g. ``Occupation is doctor, Gender is female, Age is 34,``.
This string form is both the training corpus format and the sampling prompt
format. Parsing is total: arbitrary model output yields a ParseOutcome, never
an exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import BadPermutationError, DuplicateFeatureError, UnknownFeatureError
from .tables import MISSING, FeatureKind, Row, Schema, parse_decimal


@dataclass(frozen=True)
class Clause:
    feature: str
    value: str


@dataclass(frozen=True)
class EncodedRecord:
    clauses: tuple[Clause, ...]
    text: str


class InvalidReason(Enum):
    UNKNOWN_FEATURE = "UnknownFeature"
    DUPLICATE_FEATURE = "DuplicateFeature"
    MISSING_FEATURE = "MissingFeature"
    OUT_OF_SUPPORT_CATEGORY = "OutOfSupportCategory"
    UNPARSABLE_NUMBER = "UnparsableNumber"
    MALFORMED_CLAUSE = "MalformedClause"


@dataclass(frozen=True)
class ParseOutcome:
    row: Row | None
    reason: InvalidReason | None

    @property
    def valid(self) -> bool:
        return self.row is not None

    @staticmethod
    def ok(row: Row) -> "ParseOutcome":
        return ParseOutcome(row, None)

    @staticmethod
    def invalid(reason: InvalidReason) -> "ParseOutcome":
        return ParseOutcome(None, reason)


def present_indices(row: Row) -> list[int]:
    """Schema indices of the row's non-missing cells."""
    return [j for j, cell in enumerate(row) if cell != MISSING]


def sample_permutation(m: int, rng: np.random.Generator) -> list[int]:
    """Uniform random permutation of range(m), Fisher-Yates via the generator."""
    if m < 1:
        raise BadPermutationError("permutation length must be >= 1")
    return rng.permutation(m).tolist()


def render_clauses(clauses: Sequence[Clause]) -> str:
    return ", ".join(f"{c.feature} is {c.value}" for c in clauses) + ","


def encode(row: Row, schema: Schema, perm: Sequence[int]) -> EncodedRecord:
    """Render the row's non-missing cells as clauses in permutation order.

    ``perm`` lists schema indices and must be exactly a permutation of the
    row's non-missing feature indices.
    """
    present = present_indices(row)
    if sorted(perm) != present:
        raise BadPermutationError(
            f"permutation {list(perm)} is not a bijection over the non-missing "
            f"feature indices {present}"
        )
    clauses = tuple(Clause(schema.features[j].name, row[j]) for j in perm)
    return EncodedRecord(clauses, render_clauses(clauses))


def render_condition(
    constraints: Sequence[Clause], trailing_feature: str | None, schema: Schema
) -> str:
    """Build a sampling prompt: constraint clauses, then an open ``<name> is``.

    With no constraints and a trailing feature the prompt is the bare
    ``<name> is``. Constraint features must be distinct schema features, and
    the trailing feature must not be constrained.
    """
    seen = set()
    for c in constraints:
        if c.feature not in schema.names:
            raise UnknownFeatureError(f"unknown feature {c.feature!r}")
        if c.feature in seen:
            raise DuplicateFeatureError(f"feature {c.feature!r} constrained twice")
        seen.add(c.feature)
    parts = [f"{c.feature} is {c.value}, " for c in constraints]
    if trailing_feature is not None:
        if trailing_feature not in schema.names:
            raise UnknownFeatureError(f"unknown feature {trailing_feature!r}")
        if trailing_feature in seen:
            raise DuplicateFeatureError(
                f"trailing feature {trailing_feature!r} is already constrained"
            )
        parts.append(f"{trailing_feature} is")
    return "".join(parts)


_PATTERN_CACHE: dict[tuple[str, ...], re.Pattern] = {}


def _anchor_pattern(schema: Schema) -> re.Pattern:
    key = tuple(schema.names)
    pattern = _PATTERN_CACHE.get(key)
    if pattern is None:
        # Longer names first so overlapping names resolve to the longest match.
        names = sorted(schema.names, key=len, reverse=True)
        alternation = "|".join(re.escape(n) for n in names)
        pattern = re.compile(rf"(?:(?<=^)|(?<=, ))(?P<name>{alternation}) is ")
        if len(_PATTERN_CACHE) > 64:
            _PATTERN_CACHE.clear()
        _PATTERN_CACHE[key] = pattern
    return pattern


# Generic clause head, used only to tell UnknownFeature from MalformedClause
# when the text does not start with a known feature clause.
_GENERIC_HEAD = re.compile(r"^(.+?) is ", re.DOTALL)


def decode(text: str, schema: Schema) -> ParseOutcome:
    """Parse clause text back into a schema-ordered row.

    Values are matched non-greedily up to the next ", <known-feature> is"
    boundary, so a value may contain spaces ("Adm clerical" parses, then fails
    support validation). Valid requires every schema feature exactly once,
    categorical values within support, and numeric values parsable. The first
    violated reason in clause order wins.
    """
    stripped = text.rstrip(" \t\r\n")
    anchors = list(_anchor_pattern(schema).finditer(stripped))
    if not anchors or anchors[0].start() != 0:
        head = _GENERIC_HEAD.match(stripped)
        if head and (not anchors or head.end() <= anchors[0].start()):
            return ParseOutcome.invalid(InvalidReason.UNKNOWN_FEATURE)
        return ParseOutcome.invalid(InvalidReason.MALFORMED_CLAUSE)

    pairs: list[tuple[str, str]] = []
    for k, match in enumerate(anchors):
        if k + 1 < len(anchors):
            # The next anchor's lookbehind guarantees the region ends in ", ".
            value = stripped[match.end() : anchors[k + 1].start() - 2]
        else:
            region = stripped[match.end() :]
            if region.endswith(", "):
                value = region[:-2]
            elif region.endswith(","):
                value = region[:-1]
            else:
                return ParseOutcome.invalid(InvalidReason.MALFORMED_CLAUSE)
        if not value:
            return ParseOutcome.invalid(InvalidReason.MALFORMED_CLAUSE)
        pairs.append((match.group("name"), value))

    cells: dict[str, str] = {}
    for name, value in pairs:
        if name in cells:
            return ParseOutcome.invalid(InvalidReason.DUPLICATE_FEATURE)
        if schema.kind_of(name) is FeatureKind.CATEGORICAL:
            if value not in schema.categorical_support.get(name, frozenset()):
                return ParseOutcome.invalid(InvalidReason.OUT_OF_SUPPORT_CATEGORY)
        else:
            if parse_decimal(value) is None:
                return ParseOutcome.invalid(InvalidReason.UNPARSABLE_NUMBER)
        cells[name] = value

    if len(cells) < len(schema):
        return ParseOutcome.invalid(InvalidReason.MISSING_FEATURE)
    return ParseOutcome.ok(tuple(cells[name] for name in schema.names))


def encode_table(
    rows: Iterable[Row],
    schema: Schema,
    rng: np.random.Generator | None,
) -> list[EncodedRecord]:
    """Encode rows, each with a fresh random clause order when rng is given,
    else in fixed schema order."""
    records = []
    for row in rows:
        present = present_indices(row)
        if rng is not None:
            perm = [present[i] for i in sample_permutation(len(present), rng)]
        else:
            perm = present
        records.append(encode(row, schema, perm))
    return records
