"""Corpus construction and the training loop.

Each epoch re-encodes every row, drawing a fresh clause order per row when
permutation is enabled; the tokenizer vocabulary itself is trained once on
the schema-order encoding so checkpoints do not depend on the permutation
stream. An optional pretraining phase consumes a raw text corpus before
table fine-tuning, and an optional validation split early-stops on
stalled validation loss.
"""

import dataclasses

import numpy as np

from ..bpe import EOR, train_bpe
from ..codec import encode_table
from ..density import fit_table_density
from ..errors import ContextOverflowError, EmptyTableError, NonFiniteLossError
from ..seeding import rng as derive_rng
from ..tables import Table, fit_schema_stats
from .checkpoint import Checkpoint
from .config import LmConfig, TrainConfig
from .model import _forward_batch, _masked_ce, gradients, init_params, pad_batch
from .optim import AdamW


def _epoch_texts(rows, schema, permute: bool, seed: int, epoch: int) -> list[str]:
    """Encoded record texts for one epoch, in row order."""
    rng = derive_rng(seed, "permute", epoch) if permute else None
    return [rec.text for rec in encode_table(rows, schema, rng)]


def _to_sequences(texts, vocab, context_len: int) -> list[list[int]]:
    seqs = []
    for i, text in enumerate(texts):
        ids = vocab.tokenize(text)
        if len(ids) > context_len:
            raise ContextOverflowError(
                f"row {i} encodes to {len(ids)} tokens, over context_len {context_len}"
            )
        seqs.append(ids + [EOR])
    return seqs


def _eval_loss(params, config, seqs, batch_size: int) -> float:
    total, count = 0.0, 0
    for lo in range(0, len(seqs), batch_size):
        x, y = pad_batch(seqs[lo : lo + batch_size], config.context_len)
        logits, _ = _forward_batch(params, config, x)
        loss, _, n = _masked_ce(logits, y)
        total += loss * n
        count += n
    return total / count


def _run_epoch(params, config, opt, seqs, order, dropout_rng, tc, state, phase):
    """One optimization pass over ``seqs`` in ``order``; returns mean loss."""
    total, count = 0.0, 0
    for lo in range(0, len(order), tc.batch_size):
        batch = [seqs[j] for j in order[lo : lo + tc.batch_size]]
        try:
            loss, grads = gradients(params, config, batch, dropout_rng)
        except NonFiniteLossError:
            raise NonFiniteLossError(step=state["step"]) from None
        opt.step(params, grads)
        state["step"] += 1
        state["log"].append(
            {"step": state["step"], "epoch": state["epoch"], "phase": phase, "loss": loss}
        )
        total += loss * len(batch)
        count += len(batch)
    return total / count


def train(
    table: Table,
    lm_config: LmConfig | None = None,
    train_config: TrainConfig | None = None,
    pretrain_corpus: str | None = None,
) -> Checkpoint:
    lm_config = lm_config or LmConfig()
    tc = train_config or TrainConfig()
    if not table.rows:
        raise EmptyTableError("cannot train on a table with no rows")

    schema = fit_schema_stats(table)
    base_texts = _epoch_texts(table.rows, schema, permute=False, seed=tc.seed, epoch=0)
    vocab = train_bpe(base_texts, lm_config.vocab_size)
    config = dataclasses.replace(lm_config, vocab_size=len(vocab))
    params = init_params(config)
    _to_sequences(base_texts, vocab, config.context_len)  # fail fast on overlong rows

    state = {"step": 0, "epoch": 0, "log": []}
    dropout_rng = derive_rng(tc.seed, "dropout") if config.dropout > 0 else None

    if pretrain_corpus is not None:
        ids = vocab.tokenize(pretrain_corpus)
        stride = config.context_len
        chunks = [ids[i : i + stride + 1] for i in range(0, len(ids), stride)]
        chunks = [c for c in chunks if len(c) >= 2]
        if chunks:
            pre_opt = AdamW(params, tc)
            for epoch in range(tc.pretrain_epochs):
                state["epoch"] = epoch
                order = derive_rng(tc.seed, "pretrain-shuffle", epoch).permutation(
                    len(chunks)
                )
                _run_epoch(
                    params, config, pre_opt, chunks, order, dropout_rng, tc, state, "pretrain"
                )

    rows = list(table.rows)
    val_rows: list = []
    if tc.val_fraction > 0 and len(rows) >= 2:
        perm = derive_rng(tc.seed, "val-split").permutation(len(rows))
        n_val = max(1, int(round(tc.val_fraction * len(rows))))
        val_idx = set(perm[:n_val].tolist())
        val_rows = [rows[i] for i in sorted(val_idx)]
        rows = [rows[i] for i in range(len(rows)) if i not in val_idx]
    val_seqs = (
        _to_sequences(
            _epoch_texts(val_rows, schema, False, tc.seed, 0), vocab, config.context_len
        )
        if val_rows
        else []
    )

    opt = AdamW(params, tc)
    best_val = np.inf
    best_params = None
    stale = 0
    for epoch in range(tc.epochs):
        state["epoch"] = epoch
        texts = _epoch_texts(rows, schema, tc.permute, tc.seed, epoch)
        seqs = _to_sequences(texts, vocab, config.context_len)
        order = derive_rng(tc.seed, "shuffle", epoch).permutation(len(seqs))
        mean_loss = _run_epoch(
            params, config, opt, seqs, order, dropout_rng, tc, state, "train"
        )
        entry = {"epoch": epoch, "phase": "epoch", "loss": mean_loss}
        if val_seqs:
            val_loss = _eval_loss(params, config, val_seqs, tc.batch_size)
            entry["val_loss"] = val_loss
            if val_loss < best_val - 1e-9:
                best_val = val_loss
                best_params = {k: v.copy() for k, v in params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= tc.patience:
                    state["log"].append(entry)
                    break
        state["log"].append(entry)
    if best_params is not None:
        params = best_params

    density = fit_table_density(table, seed=tc.seed)
    return Checkpoint(
        config=config,
        params=params,
        vocab=vocab,
        schema=schema,
        train_log=state["log"],
        density=density,
    )
