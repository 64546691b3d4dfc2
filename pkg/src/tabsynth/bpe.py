"""Byte-level BPE vocabulary trained on the encoded corpus.

The base vocabulary is all 256 byte values plus two specials (PAD for batch
alignment, EOR terminating each record), so any UTF-8 string tokenizes.
Merges are learned within whitespace-delimited pre-tokens only; this keeps a
prompt's tokenization a prefix of the full record's tokenization, which
sampling relies on.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field

from .errors import TargetTooSmallError, TokenizerError, UnknownIdError

N_BYTES = 256
PAD = 256
EOR = 257
FIRST_MERGE_ID = 258

# Space-prefixed words, plus bare space runs so coverage is total.
_PRETOKEN_RE = re.compile(rb" ?[^ ]+| +")


def _pretokens(data: bytes) -> list[bytes]:
    return _PRETOKEN_RE.findall(data)


def _pair_counts(corpus: dict[tuple[int, ...], int]) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for ids, n in corpus.items():
        for pair in zip(ids, ids[1:]):
            counts[pair] = counts.get(pair, 0) + n
    return counts


def _merge_ids(ids: tuple[int, ...], pair: tuple[int, int], new_id: int) -> tuple[int, ...]:
    out = []
    i = 0
    while i < len(ids):
        if i + 1 < len(ids) and ids[i] == pair[0] and ids[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return tuple(out)


@dataclass
class Vocabulary:
    """Token byte-strings indexed by id, plus the ordered merge rules."""

    tokens: list[bytes]
    merges: list[tuple[int, int]]
    _ranks: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)
    _cache: dict[bytes, tuple[int, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._ranks = {pair: FIRST_MERGE_ID + i for i, pair in enumerate(self.merges)}
        self._cache = {}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return PAD

    @property
    def eor_id(self) -> int:
        return EOR

    def _encode_pretoken(self, pretoken: bytes) -> tuple[int, ...]:
        cached = self._cache.get(pretoken)
        if cached is not None:
            return cached
        ids: tuple[int, ...] = tuple(pretoken)
        while len(ids) >= 2:
            # Earliest-trained applicable rule wins, matching rule order.
            best = min(
                (self._ranks.get(p, None) for p in zip(ids, ids[1:])),
                key=lambda r: float("inf") if r is None else r,
            )
            if best is None:
                break
            ids = _merge_ids(ids, self.merges[best - FIRST_MERGE_ID], best)
        if len(self._cache) < 1 << 16:
            self._cache[pretoken] = ids
        return ids

    def tokenize(self, text: str) -> list[int]:
        data = text.encode("utf-8")
        out: list[int] = []
        for pretoken in _pretokens(data):
            out.extend(self._encode_pretoken(pretoken))
        return out

    def detokenize(self, ids: list[int]) -> str:
        """Concatenate token bytes (specials dropped) and decode as UTF-8,
        replacing invalid byte boundaries."""
        parts = []
        for i in ids:
            if i in (PAD, EOR):
                continue
            if not 0 <= i < len(self.tokens):
                raise UnknownIdError(f"token id {i} out of range for vocab of {len(self.tokens)}")
            parts.append(self.tokens[i])
        return b"".join(parts).decode("utf-8", errors="replace")

    def to_json(self) -> dict:
        return {
            "tokens": [base64.b64encode(t).decode("ascii") for t in self.tokens],
            "merges": [list(p) for p in self.merges],
            "special": {"pad": PAD, "eor": EOR},
        }

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        return cls(
            tokens=[base64.b64decode(t) for t in data["tokens"]],
            merges=[(int(l), int(r)) for l, r in data["merges"]],
        )


def train_bpe(corpus: list[str], target_size: int = 512) -> Vocabulary:
    """Greedily merge the most frequent adjacent pair until target_size is
    reached or no pair occurs at least twice. Ties break toward the
    lexicographically smaller pair, so training is deterministic.
    """
    if not corpus:
        raise TokenizerError("corpus must be non-empty")
    if target_size < FIRST_MERGE_ID:
        raise TargetTooSmallError(
            f"target size {target_size} below base vocabulary of {FIRST_MERGE_ID}"
        )
    counts: dict[tuple[int, ...], int] = {}
    for text in corpus:
        for pretoken in _pretokens(text.encode("utf-8")):
            ids = tuple(pretoken)
            counts[ids] = counts.get(ids, 0) + 1

    tokens = [bytes([b]) for b in range(N_BYTES)] + [b"", b""]  # PAD, EOR
    merges: list[tuple[int, int]] = []
    while len(tokens) < target_size:
        pairs = _pair_counts(counts)
        if not pairs:
            break
        best = max(pairs.items(), key=lambda kv: (kv[1], (-kv[0][0], -kv[0][1])))
        pair, n = best
        if n < 2:
            break
        new_id = len(tokens)
        merges.append(pair)
        tokens.append(tokens[pair[0]] + tokens[pair[1]])
        updated: dict[tuple[int, ...], int] = {}
        for ids, c in counts.items():
            merged = _merge_ids(ids, pair, new_id)
            updated[merged] = updated.get(merged, 0) + c
        counts = updated
    return Vocabulary(tokens, merges)
