"""Independent reference implementations used as test oracles.

Everything here is written against the standard formulas directly, with
per-position loops, so agreement with the package's vectorized code is
meaningful evidence rather than a tautology.
"""

import math

import numpy as np

from tabsynth.bpe import PAD
from tabsynth.lm import gradients, pad_batch
from tabsynth.lm.model import _forward_batch, _masked_ce


def _ref_ln(x, g, b, eps=1e-5):
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    return g * (x - mu) / math.sqrt(var + eps) + b


def _ref_gelu(x):
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


def _ref_softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def reference_forward(params, config, tokens):
    """Per-position transformer forward, plain loops over positions and heads."""
    tokens = list(tokens)
    n = len(tokens)
    d = config.d_model
    nh = config.n_heads
    dh = d // nh
    h = [params["tok_emb"][t].astype(np.float64) + params["pos_emb"][i] for i, t in enumerate(tokens)]

    for li in range(config.n_layers):
        a = [_ref_ln(h[i], params[f"h{li}.ln1.g"], params[f"h{li}.ln1.b"]) for i in range(n)]
        qkv = [a[i] @ params[f"h{li}.attn.w_qkv"] + params[f"h{li}.attn.b_qkv"] for i in range(n)]
        att_out = []
        for i in range(n):
            heads = []
            for hd in range(nh):
                sl = slice(hd * dh, (hd + 1) * dh)
                q = qkv[i][:d][sl]
                scores = np.array(
                    [q @ qkv[j][d : 2 * d][sl] / math.sqrt(dh) for j in range(i + 1)]
                )
                w = _ref_softmax(scores)
                heads.append(sum(w[j] * qkv[j][2 * d :][sl] for j in range(i + 1)))
            ctx = np.concatenate(heads)
            att_out.append(ctx @ params[f"h{li}.attn.w_o"] + params[f"h{li}.attn.b_o"])
        h = [h[i] + att_out[i] for i in range(n)]
        a2 = [_ref_ln(h[i], params[f"h{li}.ln2.g"], params[f"h{li}.ln2.b"]) for i in range(n)]
        ff = [
            _ref_gelu(a2[i] @ params[f"h{li}.ffn.w1"] + params[f"h{li}.ffn.b1"])
            @ params[f"h{li}.ffn.w2"]
            + params[f"h{li}.ffn.b2"]
            for i in range(n)
        ]
        h = [h[i] + ff[i] for i in range(n)]

    out = []
    for i in range(n):
        hf = _ref_ln(h[i], params["ln_f.g"], params["ln_f.b"])
        if config.tied_output:
            out.append(hf @ params["tok_emb"].T)
        else:
            out.append(hf @ params["w_out"] + params["b_out"])
    return np.stack(out)


def batch_nll(params, config, batch) -> float:
    x, y = pad_batch(batch, config.context_len)
    logits, _ = _forward_batch(params, config, x)
    loss, _, _ = _masked_ce(logits, y)
    return loss


def finite_difference_report(params, config, batch, coords_per_tensor, seed, h=1e-4):
    """Max relative error between analytic and central-difference gradients,
    per tensor name. Runs in float64 regardless of the input dtype."""
    p64 = {k: v.astype(np.float64) for k, v in params.items()}
    _, grads = gradients(p64, config, batch)
    rng = np.random.default_rng(seed)
    report = {}
    for name in sorted(p64):
        flat = p64[name].reshape(-1)
        g = grads[name].reshape(-1)
        n_coords = min(coords_per_tensor, flat.size)
        idxs = rng.choice(flat.size, size=n_coords, replace=False)
        worst = 0.0
        for j in idxs:
            keep = flat[j]
            flat[j] = keep + h
            up = batch_nll(p64, config, batch)
            flat[j] = keep - h
            down = batch_nll(p64, config, batch)
            flat[j] = keep
            fd = (up - down) / (2.0 * h)
            rel = abs(fd - g[j]) / max(abs(fd), abs(g[j]), 1e-8)
            worst = max(worst, rel)
        report[name] = worst
    return report


def empirical_bigram(seqs, a: int, b: int) -> float:
    """Corpus-empirical P(next == b | current == a)."""
    num = den = 0
    for s in seqs:
        for cur, nxt in zip(s, s[1:]):
            if cur == a:
                den += 1
                num += nxt == b
    return num / den


def naive_dcr(synth_rows, train_rows, kinds):
    """O(n*m) double-loop distance-to-closest-record.

    ``kinds`` is a per-feature list of "num" or "cat"; rows are raw string
    tuples as stored in tables.
    """
    out = []
    for s in synth_rows:
        best = math.inf
        for t in train_rows:
            dist = 0.0
            for j, kind in enumerate(kinds):
                if kind == "num":
                    dist += abs(float(s[j]) - float(t[j]))
                else:
                    dist += 0.0 if s[j] == t[j] else 1.0
            best = min(best, dist)
        out.append(best)
    return out


__all__ = [
    "PAD",
    "batch_nll",
    "empirical_bigram",
    "finite_difference_report",
    "naive_dcr",
    "reference_forward",
]
