"""Causal transformer decoder with hand-written forward and backward passes.

Parameters live in a flat name -> array dict so the optimizer, checkpoint
writer, and finite-difference checks can treat every tensor uniformly.
Compute happens in the dtype of the parameter arrays: float32 for training,
float64 when a caller casts the dict for high-precision gradient checks.

Layout per block (pre-layer-norm residuals):
    h <- h + W_o(attn(LN1(h)))
    h <- h + W2(gelu(W1(LN2(h))))
followed by a final layer norm and the output projection (tied to the
token embedding when configured).
"""

import math
from dataclasses import dataclass

import numpy as np

from ..bpe import PAD
from ..errors import ContextOverflowError, NonFiniteLossError, ShapeMismatchError
from ..seeding import rng as derive_rng
from .config import LmConfig

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_MASK_NEG = -1e9


def init_params(config: LmConfig) -> dict[str, np.ndarray]:
    g = derive_rng(config.seed, "lm-init")
    d, f, v, c = config.d_model, config.d_ff, config.vocab_size, config.context_len

    def normal(*shape):
        return g.normal(0.0, 0.02, size=shape).astype(np.float32)

    def zeros(*shape):
        return np.zeros(shape, dtype=np.float32)

    def ones(*shape):
        return np.ones(shape, dtype=np.float32)

    p = {"tok_emb": normal(v, d), "pos_emb": normal(c, d)}
    for i in range(config.n_layers):
        p[f"h{i}.ln1.g"] = ones(d)
        p[f"h{i}.ln1.b"] = zeros(d)
        p[f"h{i}.attn.w_qkv"] = normal(d, 3 * d)
        p[f"h{i}.attn.b_qkv"] = zeros(3 * d)
        p[f"h{i}.attn.w_o"] = normal(d, d)
        p[f"h{i}.attn.b_o"] = zeros(d)
        p[f"h{i}.ln2.g"] = ones(d)
        p[f"h{i}.ln2.b"] = zeros(d)
        p[f"h{i}.ffn.w1"] = normal(d, f)
        p[f"h{i}.ffn.b1"] = zeros(f)
        p[f"h{i}.ffn.w2"] = normal(f, d)
        p[f"h{i}.ffn.b2"] = zeros(d)
    p["ln_f.g"] = ones(d)
    p["ln_f.b"] = zeros(d)
    if not config.tied_output:
        p["w_out"] = normal(d, v)
        p["b_out"] = zeros(v)
    return p


def _gelu(x):
    u = _GELU_C * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + np.tanh(u))


def _gelu_grad(x):
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du


def _ln_forward(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _ln_backward(dy, g, cache):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axes)
    db = dy.sum(axes)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x, n_heads):
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def _validate_ids(x, config: LmConfig):
    if x.ndim != 2:
        raise ShapeMismatchError(f"expected a [batch, seq] id array, got shape {x.shape}")
    if x.shape[1] > config.context_len:
        raise ContextOverflowError(
            f"sequence length {x.shape[1]} exceeds context_len {config.context_len}"
        )
    if x.size and (x.min() < 0 or x.max() >= config.vocab_size):
        raise ShapeMismatchError(
            f"token ids must lie in [0, {config.vocab_size}), got range "
            f"[{x.min()}, {x.max()}]"
        )


def _dropout_mask(rng, p, shape, dtype):
    return (rng.random(shape) >= p).astype(dtype) / dtype.type(1.0 - p)


def _forward_batch(params, config: LmConfig, x, dropout_rng=None):
    """Full-sequence forward. Returns (logits [B,L,V], cache for backward)."""
    x = np.asarray(x, dtype=np.int64)
    _validate_ids(x, config)
    b, l = x.shape
    nh = config.n_heads
    dh = config.d_model // nh
    scale = 1.0 / math.sqrt(dh)
    dtype = params["tok_emb"].dtype
    use_drop = dropout_rng is not None and config.dropout > 0.0

    h = params["tok_emb"][x] + params["pos_emb"][:l][None, :, :]
    emb_mask = None
    if use_drop:
        emb_mask = _dropout_mask(dropout_rng, config.dropout, h.shape, h.dtype)
        h = h * emb_mask

    causal = np.triu(np.ones((l, l), dtype=bool), k=1)
    layer_caches = []
    for i in range(config.n_layers):
        a, ln1_cache = _ln_forward(h, params[f"h{i}.ln1.g"], params[f"h{i}.ln1.b"])
        qkv = a @ params[f"h{i}.attn.w_qkv"] + params[f"h{i}.attn.b_qkv"]
        q, k, v = np.split(qkv, 3, axis=-1)
        q, k, v = (_split_heads(t, nh) for t in (q, k, v))
        scores = (q @ k.swapaxes(-1, -2)) * scale
        scores = np.where(causal, dtype.type(_MASK_NEG), scores)
        scores = scores - scores.max(-1, keepdims=True)
        e = np.exp(scores)
        probs = e / e.sum(-1, keepdims=True)
        ctx = _merge_heads(probs @ v)
        att = ctx @ params[f"h{i}.attn.w_o"] + params[f"h{i}.attn.b_o"]
        att_mask = None
        if use_drop:
            att_mask = _dropout_mask(dropout_rng, config.dropout, att.shape, att.dtype)
            att = att * att_mask
        h1 = h + att

        a2, ln2_cache = _ln_forward(h1, params[f"h{i}.ln2.g"], params[f"h{i}.ln2.b"])
        u = a2 @ params[f"h{i}.ffn.w1"] + params[f"h{i}.ffn.b1"]
        act = _gelu(u)
        ff = act @ params[f"h{i}.ffn.w2"] + params[f"h{i}.ffn.b2"]
        ff_mask = None
        if use_drop:
            ff_mask = _dropout_mask(dropout_rng, config.dropout, ff.shape, ff.dtype)
            ff = ff * ff_mask
        h2 = h1 + ff

        layer_caches.append(
            {
                "h_in": h,
                "a": a,
                "ln1": ln1_cache,
                "q": q,
                "k": k,
                "v": v,
                "probs": probs,
                "ctx": ctx,
                "att_mask": att_mask,
                "h1": h1,
                "a2": a2,
                "ln2": ln2_cache,
                "u": u,
                "act": act,
                "ff_mask": ff_mask,
            }
        )
        h = h2

    hf, ln_f_cache = _ln_forward(h, params["ln_f.g"], params["ln_f.b"])
    w_out = params["tok_emb"].T if config.tied_output else params["w_out"]
    logits = hf @ w_out
    if not config.tied_output:
        logits = logits + params["b_out"]
    cache = {
        "x": x,
        "scale": scale,
        "layers": layer_caches,
        "hf": hf,
        "ln_f": ln_f_cache,
        "emb_mask": emb_mask,
    }
    return logits, cache


def _backward_batch(params, config: LmConfig, d_logits, cache):
    """Backward through _forward_batch; returns grads keyed like params."""
    x = cache["x"]
    b, l = x.shape
    scale = cache["scale"]
    grads = {}
    hf = cache["hf"]
    hf_flat = hf.reshape(-1, config.d_model)
    dl_flat = d_logits.reshape(-1, config.vocab_size)

    if config.tied_output:
        grads["tok_emb"] = dl_flat.T @ hf_flat
        d_hf = d_logits @ params["tok_emb"]
    else:
        grads["w_out"] = hf_flat.T @ dl_flat
        grads["b_out"] = dl_flat.sum(0)
        d_hf = d_logits @ params["w_out"].T

    d_h, grads["ln_f.g"], grads["ln_f.b"] = _ln_backward(
        d_hf, params["ln_f.g"], cache["ln_f"]
    )

    for i in reversed(range(config.n_layers)):
        c = cache["layers"][i]
        d_ff = d_h if c["ff_mask"] is None else d_h * c["ff_mask"]
        d_ff_flat = d_ff.reshape(-1, config.d_model)
        act_flat = c["act"].reshape(-1, config.d_ff)
        grads[f"h{i}.ffn.w2"] = act_flat.T @ d_ff_flat
        grads[f"h{i}.ffn.b2"] = d_ff_flat.sum(0)
        d_act = d_ff @ params[f"h{i}.ffn.w2"].T
        d_u = d_act * _gelu_grad(c["u"])
        d_u_flat = d_u.reshape(-1, config.d_ff)
        a2_flat = c["a2"].reshape(-1, config.d_model)
        grads[f"h{i}.ffn.w1"] = a2_flat.T @ d_u_flat
        grads[f"h{i}.ffn.b1"] = d_u_flat.sum(0)
        d_a2 = d_u @ params[f"h{i}.ffn.w1"].T
        d_h1_ln, grads[f"h{i}.ln2.g"], grads[f"h{i}.ln2.b"] = _ln_backward(
            d_a2, params[f"h{i}.ln2.g"], c["ln2"]
        )
        d_h1 = d_h + d_h1_ln

        d_att = d_h1 if c["att_mask"] is None else d_h1 * c["att_mask"]
        d_att_flat = d_att.reshape(-1, config.d_model)
        ctx_flat = c["ctx"].reshape(-1, config.d_model)
        grads[f"h{i}.attn.w_o"] = ctx_flat.T @ d_att_flat
        grads[f"h{i}.attn.b_o"] = d_att_flat.sum(0)
        d_ctx = _split_heads(d_att @ params[f"h{i}.attn.w_o"].T, config.n_heads)
        probs = c["probs"]
        d_probs = d_ctx @ c["v"].swapaxes(-1, -2)
        d_v = probs.swapaxes(-1, -2) @ d_ctx
        d_scores = probs * (d_probs - (d_probs * probs).sum(-1, keepdims=True))
        d_q = (d_scores @ c["k"]) * scale
        d_k = (d_scores.swapaxes(-1, -2) @ c["q"]) * scale
        d_qkv = np.concatenate(
            [_merge_heads(t) for t in (d_q, d_k, d_v)], axis=-1
        )
        d_qkv_flat = d_qkv.reshape(-1, 3 * config.d_model)
        a_flat = c["a"].reshape(-1, config.d_model)
        grads[f"h{i}.attn.w_qkv"] = a_flat.T @ d_qkv_flat
        grads[f"h{i}.attn.b_qkv"] = d_qkv_flat.sum(0)
        d_a = d_qkv @ params[f"h{i}.attn.w_qkv"].T
        d_h_ln, grads[f"h{i}.ln1.g"], grads[f"h{i}.ln1.b"] = _ln_backward(
            d_a, params[f"h{i}.ln1.g"], c["ln1"]
        )
        d_h = d_h1 + d_h_ln

    if cache["emb_mask"] is not None:
        d_h = d_h * cache["emb_mask"]
    d_tok = grads.get("tok_emb")
    if d_tok is None:
        d_tok = np.zeros_like(params["tok_emb"])
        grads["tok_emb"] = d_tok
    np.add.at(d_tok, x, d_h)
    grads["pos_emb"] = np.zeros_like(params["pos_emb"])
    grads["pos_emb"][:l] = d_h.sum(0)
    return grads


def _masked_ce(logits, y):
    """Mean cross-entropy over non-PAD targets; returns (loss, d_logits, n)."""
    mask = y != PAD
    n = int(mask.sum())
    if n == 0:
        raise ShapeMismatchError("batch contains no unmasked target positions")
    m = logits.max(-1, keepdims=True)
    z = logits - m
    e = np.exp(z)
    se = e.sum(-1, keepdims=True)
    log_probs = z - np.log(se)
    rows = np.arange(y.shape[0])[:, None]
    cols = np.arange(y.shape[1])[None, :]
    tgt_logp = log_probs[rows, cols, y]
    loss = float(-(tgt_logp * mask).sum() / n)
    d_logits = e / se
    d_logits[rows, cols, y] -= 1.0
    d_logits *= (mask / n)[:, :, None]
    return loss, d_logits, n


def forward(params, config: LmConfig, tokens) -> np.ndarray:
    """Logits [seq_len, vocab] for one sequence."""
    x = np.asarray(tokens, dtype=np.int64)[None, :]
    logits, _ = _forward_batch(params, config, x)
    return logits[0]


def nll(params, config: LmConfig, tokens) -> float:
    """Mean next-token negative log-likelihood over non-PAD targets."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or len(tokens) < 2:
        raise ShapeMismatchError("nll needs a 1-D sequence of length >= 2")
    logits, _ = _forward_batch(params, config, tokens[None, :-1])
    loss, _, _ = _masked_ce(logits, tokens[None, 1:])
    return loss


def pad_batch(seqs: list, context_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-PAD sequences and split into (inputs, shifted targets)."""
    if not seqs:
        raise ShapeMismatchError("batch must be non-empty")
    longest = max(len(s) for s in seqs)
    if longest - 1 > context_len:
        raise ContextOverflowError(
            f"record of {longest - 1} input tokens exceeds context_len {context_len}"
        )
    if min(len(s) for s in seqs) < 2:
        raise ShapeMismatchError("every sequence needs length >= 2")
    arr = np.full((len(seqs), longest), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        arr[i, : len(s)] = s
    return arr[:, :-1], arr[:, 1:]


def gradients(params, config: LmConfig, batch: list, dropout_rng=None):
    """(loss, grads) of the mean nll over a batch of token sequences."""
    x, y = pad_batch(batch, config.context_len)
    logits, cache = _forward_batch(params, config, x, dropout_rng)
    loss, d_logits, _ = _masked_ce(logits, y)
    if not np.isfinite(loss):
        raise NonFiniteLossError(step=-1)
    grads = _backward_batch(params, config, d_logits, cache)
    return loss, grads


@dataclass
class KvCache:
    k: list  # per layer [B, H, context_len, d_head]
    v: list
    lengths: np.ndarray  # [B] filled positions per row


def _ln_apply(x, g, b):
    out, _ = _ln_forward(x, g, b)
    return out


def prefill(params, config: LmConfig, prompts: list) -> tuple[KvCache, np.ndarray]:
    """Run the prompt batch once; returns the cache and each row's last logits.

    Prompts may have different lengths; rows are right-padded and the causal
    mask keeps shorter rows independent of their padding.
    """
    if not prompts or any(len(p) < 1 for p in prompts):
        raise ShapeMismatchError("every prompt must hold at least one token")
    nb = len(prompts)
    lengths = np.array([len(p) for p in prompts], dtype=np.int64)
    lmax = int(lengths.max())
    x = np.full((nb, lmax), PAD, dtype=np.int64)
    for i, p in enumerate(prompts):
        x[i, : len(p)] = p
    logits, cache = _forward_batch(params, config, x)

    nh = config.n_heads
    dh = config.d_model // nh
    c = config.context_len
    ks, vs = [], []
    dtype = params["tok_emb"].dtype
    for i in range(config.n_layers):
        kbuf = np.zeros((nb, nh, c, dh), dtype=dtype)
        vbuf = np.zeros((nb, nh, c, dh), dtype=dtype)
        kbuf[:, :, :lmax, :] = cache["layers"][i]["k"]
        vbuf[:, :, :lmax, :] = cache["layers"][i]["v"]
        ks.append(kbuf)
        vs.append(vbuf)
    last = logits[np.arange(nb), lengths - 1]
    return KvCache(k=ks, v=vs, lengths=lengths), last


def decode_step(params, config: LmConfig, kv: KvCache, new_ids) -> np.ndarray:
    """Append one token per row and return each row's next-token logits.

    Rows whose length already reached context_len are clamped onto the last
    slot; callers must treat such rows as finished and ignore their logits.
    """
    new_ids = np.asarray(new_ids, dtype=np.int64)
    nb = len(new_ids)
    nh = config.n_heads
    dh = config.d_model // nh
    scale = 1.0 / math.sqrt(dh)
    c = config.context_len
    pos = np.minimum(kv.lengths, c - 1)
    rows = np.arange(nb)

    h = params["tok_emb"][new_ids] + params["pos_emb"][pos]
    col = np.arange(c)[None, None, :]
    reach = col <= pos[:, None, None]  # [B, 1, C]
    for i in range(config.n_layers):
        a = _ln_apply(h, params[f"h{i}.ln1.g"], params[f"h{i}.ln1.b"])
        qkv = a @ params[f"h{i}.attn.w_qkv"] + params[f"h{i}.attn.b_qkv"]
        q, k, v = np.split(qkv, 3, axis=-1)
        q = q.reshape(nb, nh, dh)
        kv.k[i][rows, :, pos, :] = k.reshape(nb, nh, dh)
        kv.v[i][rows, :, pos, :] = v.reshape(nb, nh, dh)
        scores = np.einsum("bhd,bhcd->bhc", q, kv.k[i]) * scale
        scores = np.where(reach, scores, scores.dtype.type(_MASK_NEG))
        scores = scores - scores.max(-1, keepdims=True)
        e = np.exp(scores)
        probs = e / e.sum(-1, keepdims=True)
        ctx = np.einsum("bhc,bhcd->bhd", probs, kv.v[i]).reshape(nb, config.d_model)
        h = h + ctx @ params[f"h{i}.attn.w_o"] + params[f"h{i}.attn.b_o"]
        a2 = _ln_apply(h, params[f"h{i}.ln2.g"], params[f"h{i}.ln2.b"])
        h = h + _gelu(a2 @ params[f"h{i}.ffn.w1"] + params[f"h{i}.ffn.b1"]) @ params[
            f"h{i}.ffn.w2"
        ] + params[f"h{i}.ffn.b2"]

    hf = _ln_apply(h, params["ln_f.g"], params["ln_f.b"])
    w_out = params["tok_emb"].T if config.tied_output else params["w_out"]
    logits = hf @ w_out
    if not config.tied_output:
        logits = logits + params["b_out"]
    kv.lengths = np.minimum(kv.lengths + 1, c)
    return logits
