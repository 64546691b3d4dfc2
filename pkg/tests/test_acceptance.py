"""Acceptance gate: nine end-to-end guarantees, one verdict line each.

Every test prints "[acceptance] criterion N: PASS/FAIL - detail" past
pytest's capture and then asserts, so a plain pytest run shows both the gate
lines and the usual outcomes. Statistical checks use frozen seeds; the two
model-training criteria (4 and 5) take minutes on one CPU, everything else
runs in seconds.
"""

import contextlib
import io
import itertools
import json
import re
import string
import sys
import time

import numpy as np
import pytest
from scipy import stats

from tabsynth.benchdata import (
    exact_joint,
    generate,
    gmm_benchmark_spec,
    markov_benchmark_spec,
)
from tabsynth.cli import main as cli_main
from tabsynth.codec import Clause, decode, encode
from tabsynth.evalsuite import dcr, discriminator, likelihood_fitness, mle
from tabsynth.lm import LmConfig, TrainConfig, train
from tabsynth.lm.model import gradients, init_params
from tabsynth.sampling import Mode, SampleSpec, next_token, sample, sample_tokens
from tabsynth.seeding import rng as derive_rng
from tabsynth.tables import Table, from_rows, split

from _oracles import batch_nll


_CAPSYS = None


@pytest.fixture(autouse=True)
def _verdict_passthrough(capsys):
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def _report(num: int, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    line = f"[acceptance] criterion {num}: {verdict} - {detail}"
    if _CAPSYS is not None:
        with _CAPSYS.disabled():
            print(f"\n{line}", flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)
    assert ok, f"criterion {num}: {detail}"


def run_cli(argv):
    """Invoke the CLI in-process; returns (exit code, stdout events, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            rc = cli_main(argv)
        except SystemExit as exc:
            rc = int(exc.code or 0)
    events = [json.loads(line) for line in out.getvalue().splitlines() if line.strip()]
    return rc, events, err.getvalue()


def _tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# -- criterion 1: codec roundtrip and decoder fuzz ---------------------------

_NAME_CHARS = string.ascii_letters + string.digits
_VALUE_CHARS = string.ascii_letters + string.digits + ">-#?._/+%"


def _random_name(rng, taken):
    while True:
        words = []
        for _ in range(2 if rng.random() < 0.3 else 1):
            k = int(rng.integers(1, 8))
            words.append("".join(rng.choice(list(_NAME_CHARS), size=k)))
        name = " ".join(words)
        if " is " not in name and name not in taken:
            return name


def _random_cell(rng, numeric: bool) -> str:
    if numeric:
        scale = 10.0 ** int(rng.integers(0, 4))
        return f"{rng.normal() * scale:.{int(rng.integers(0, 5))}f}"
    k = int(rng.integers(1, 11))
    return "".join(rng.choice(list(_VALUE_CHARS), size=k))


def test_criterion_1_codec_roundtrip_and_fuzz():
    t0 = time.time()
    rng = np.random.default_rng(101)
    trials = 0
    for _ in range(200):
        n_features = int(rng.integers(2, 7))
        taken: set[str] = set()
        header = []
        for _ in range(n_features):
            name = _random_name(rng, taken)
            taken.add(name)
            header.append(name)
        numeric = [rng.random() < 0.4 for _ in range(n_features)]
        rows = [
            [_random_cell(rng, numeric[j]) for j in range(n_features)]
            for _ in range(50)
        ]
        table = from_rows(header, rows)
        for row in table.rows:
            perm = tuple(int(i) for i in rng.permutation(n_features))
            out = decode(encode(row, table.schema, perm).text, table.schema)
            assert out.valid, f"{out.reason} on {row!r} perm {perm}"
            assert out.row == row
            trials += 1
    fuzz_rng = np.random.default_rng(202)
    toy = from_rows(["A", "B c"], [["x", "1.5"], ["y", "2.0"]])
    for _ in range(10000):
        blob = bytes(fuzz_rng.integers(0, 256, size=int(fuzz_rng.integers(0, 80))))
        outcome = decode(blob.decode("latin-1"), toy.schema)
        assert outcome.valid or outcome.reason is not None
    elapsed = time.time() - t0
    ok = trials == 10000 and elapsed < 10
    _report(
        1,
        ok,
        f"{trials} roundtrips exact, 10000 fuzz strings decoded, {elapsed:.1f}s",
    )


# -- criterion 2: temperature softmax matches sampled frequencies ------------


def test_criterion_2_temperature_softmax_frequencies():
    t0 = time.time()
    temps = (0.5, 0.7, 1.0)
    worst_p = 1.0
    n = 100_000
    for vec in range(20):
        logits = derive_rng(0, "eq4-logits", vec).normal(0.0, 2.0, size=32)
        for ti, temp in enumerate(temps):
            z = logits / temp
            z = z - z.max()
            probs = np.exp(z)
            probs /= probs.sum()
            draws = sample_tokens(logits, temp, derive_rng(0, "eq4-draw", vec, ti), n)
            observed = np.bincount(draws, minlength=32).astype(float)
            expected = probs * n
            keep = expected >= 5
            if (~keep).any():
                observed = np.append(observed[keep], observed[~keep].sum())
                expected = np.append(expected[keep], expected[~keep].sum())
            worst_p = min(worst_p, stats.chisquare(observed, expected).pvalue)
    # the bulk draws above use the vectorized path; pin it to next_token
    logits = derive_rng(0, "eq4-logits", 0).normal(0.0, 2.0, size=32)
    for i in range(100):
        one = next_token(logits, 0.7, derive_rng(0, "eq4-pin", i))
        vec_one = sample_tokens(logits, 0.7, derive_rng(0, "eq4-pin", i), 1)[0]
        assert one == vec_one
    elapsed = time.time() - t0
    ok = worst_p > 0.01 and elapsed < 30
    _report(2, ok, f"60 chi-square tests, min p={worst_p:.4f} (> 0.01), {elapsed:.1f}s")


# -- criterion 3: analytic gradients against central differences -------------


def test_criterion_3_gradient_finite_difference():
    t0 = time.time()
    config = LmConfig(
        vocab_size=258, context_len=16, n_layers=2, n_heads=2, d_model=16,
        d_ff=48, seed=3,
    )
    params = init_params(config)
    batch = [[9, 1, 255, 3, 70, 11], [2, 200, 2], [101, 57, 33, 4]]
    p64 = {k: v.astype(np.float64) for k, v in params.items()}
    _, grads = gradients(p64, config, batch)

    families: dict[str, list[str]] = {}
    for name in sorted(p64):
        families.setdefault(re.sub(r"^h\d+\.", "block.", name), []).append(name)

    rng = derive_rng(0, "fd-coords")
    h = 1e-4
    worst = 0.0
    checked = 0
    for fam in sorted(families):
        names = families[fam]
        sizes = [p64[n].size for n in names]
        spans = np.cumsum([0] + sizes)
        total = spans[-1]
        for flat_idx in rng.choice(total, size=min(200, total), replace=False):
            which = int(np.searchsorted(spans, flat_idx, side="right") - 1)
            name, offset = names[which], int(flat_idx - spans[which])
            flat = p64[name].reshape(-1)
            keep = flat[offset]
            flat[offset] = keep + h
            up = batch_nll(p64, config, batch)
            flat[offset] = keep - h
            down = batch_nll(p64, config, batch)
            flat[offset] = keep
            fd = (up - down) / (2.0 * h)
            g = grads[name].reshape(-1)[offset]
            worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-8))
            checked += 1
    elapsed = time.time() - t0
    ok = worst < 1e-3 and elapsed < 120
    _report(
        3,
        ok,
        f"{checked} coords over {len(families)} tensor families, "
        f"max rel err {worst:.2e} (< 1e-3), {elapsed:.0f}s",
    )


# -- criteria 4 and 6 share one trained model --------------------------------

MARKOV_SPEC = markov_benchmark_spec(n_rows=5000, seed=0)
C4_LM = dict(
    vocab_size=512, context_len=32, n_layers=2, n_heads=4, d_model=64,
    d_ff=256, seed=0,
)
# long low-lr run: constant-rate Adam needs the extra passes to settle close
# enough to the empirical joint for the 0.05 TV bound
C4_TRAIN = dict(
    epochs=90, batch_size=64, learning_rate=3e-4, weight_decay=0.0, seed=0
)


@pytest.fixture(scope="session")
def markov_model():
    table = generate(MARKOV_SPEC)
    t0 = time.time()
    ckpt = train(table, LmConfig(**C4_LM), TrainConfig(**C4_TRAIN))
    return table, ckpt, time.time() - t0


def test_criterion_4_distribution_recovery(markov_model):
    _, ckpt, train_seconds = markov_model
    t0 = time.time()
    report = sample(
        ckpt,
        SampleSpec(count=20000, temperature=1.0, seed=42),
        chunk_size=512,
    )
    joint = exact_joint(MARKOV_SPEC)
    counts: dict[tuple, int] = {}
    for row in report.rows.rows:
        counts[row] = counts.get(row, 0) + 1
    sampled = {k: v / len(report.rows.rows) for k, v in counts.items()}
    tv = _tv(sampled, joint)
    elapsed = train_seconds + (time.time() - t0)
    ok = tv < 0.05 and report.invalid_rate < 0.05 and elapsed < 900
    _report(
        4,
        ok,
        f"TV(sampled, true joint)={tv:.4f} (< 0.05), "
        f"invalid_rate={report.invalid_rate:.4f} (< 0.05), {elapsed:.0f}s",
    )


def test_criterion_6_arbitrary_conditioning(markov_model):
    table, ckpt, _ = markov_model
    t0 = time.time()
    joint = exact_joint(MARKOV_SPEC)
    combos = sorted({(state[0], state[1]) for state in joint})
    shape_idx = table.schema.names.index("Shape")
    color_idx = table.schema.names.index("Color")
    drawn = exact = 0
    per_combo = [112 if i < 1000 % 9 else 111 for i in range(9)]
    for i, ((shape, color), count) in enumerate(zip(combos, per_combo)):
        report = sample(
            ckpt,
            SampleSpec(
                count=count,
                temperature=0.7,
                seed=600 + i,
                constraints=(Clause("Shape", shape), Clause("Color", color)),
                mode=Mode.MULTI_NAME_VALUE,
            ),
            chunk_size=128,
        )
        for row in report.rows.rows:
            drawn += 1
            exact += row[shape_idx] == shape and row[color_idx] == color
    elapsed = time.time() - t0
    ok = drawn == 1000 and exact == drawn and elapsed < 300
    _report(
        6,
        ok,
        f"{exact}/{drawn} two-constraint draws byte-exact across all 9 "
        f"(Shape, Color) pairs, {elapsed:.0f}s",
    )


# -- criterion 5: GMM likelihood fitness, identity anchor --------------------

C5_LM = dict(
    vocab_size=512, context_len=32, n_layers=2, n_heads=4, d_model=64,
    d_ff=256, seed=0,
)
C5_TRAIN = dict(
    epochs=40, batch_size=64, learning_rate=1e-3, weight_decay=0.0, seed=0
)


def test_criterion_5_gmm_likelihood_fitness():
    t0 = time.time()
    table = generate(gmm_benchmark_spec(n_rows=6000, seed=0))
    ident = likelihood_fitness(table, table, table)
    identity_exact = ident.l_syn == ident.l_test
    tr, te = split(table, 0.2, seed=1)
    ckpt = train(tr, LmConfig(**C5_LM), TrainConfig(**C5_TRAIN))
    report = sample(
        ckpt, SampleSpec(count=6000, temperature=1.0, seed=11), chunk_size=512
    )
    fitted = likelihood_fitness(tr, te, report.rows)
    gap = abs(fitted.l_test - ident.l_test)
    elapsed = time.time() - t0
    ok = identity_exact and gap < 0.5 and elapsed < 1200
    _report(
        5,
        ok,
        f"identity l_syn == l_test ({ident.l_test:.3f}), trained model "
        f"l_test={fitted.l_test:.3f}, gap {gap:.3f} nats (< 0.5), {elapsed:.0f}s",
    )


# -- criterion 7: metric sanity on known-answer inputs -----------------------


def test_criterion_7_metric_sanity():
    t0 = time.time()
    gmm_table = generate(gmm_benchmark_spec(n_rows=1600, seed=1))
    order = derive_rng(0, "halves").permutation(len(gmm_table.rows))
    rows = [gmm_table.rows[i] for i in order]
    header = list(gmm_table.schema.names)
    side_a, side_b = rows[:800], rows[800:]
    disc = discriminator(
        from_rows(header, side_a[:640]),
        from_rows(header, side_b[:640]),
        from_rows(header, side_a[640:]),
        from_rows(header, side_b[640:]),
        seeds=(0, 1, 2),
    )
    disc_ok = 0.40 <= disc.accuracy_mean <= 0.60

    markov_table = generate(MARKOV_SPEC)
    self_dcr = dcr(markov_table, markov_table)
    dcr_ok = self_dcr.zero_fraction == 1.0 and self_dcr.mean == 0.0

    labeled = Table(markov_table.schema, markov_table.rows, "Size")
    tr, te = split(labeled, 0.2, seed=3)
    synth_res, real_res = mle(tr, tr, te, target="Size", seeds=(0, 1, 2, 3, 4))
    gap = max(
        abs(synth_res.scores[m][metric][0] - real_res.scores[m][metric][0])
        for m in synth_res.scores
        for metric in synth_res.scores[m]
    )
    mle_ok = gap < 0.01
    elapsed = time.time() - t0
    ok = disc_ok and dcr_ok and mle_ok and elapsed < 300
    _report(
        7,
        ok,
        f"iid-halves discriminator {disc.accuracy_mean:.3f} in [0.40, 0.60]; "
        f"self-DCR zero_fraction {self_dcr.zero_fraction:.2f}; "
        f"identical-train MLE gap {gap:.4f} (< 0.01); {elapsed:.0f}s",
    )


# -- criterion 8: ablation axes produce distinct, working models -------------

C8_LM = {"vocab_size": 512, "context_len": 48, "n_layers": 2, "n_heads": 4,
         "d_model": 48, "d_ff": 192}
C8_TRAIN = {"epochs": 8, "batch_size": 32, "learning_rate": 1e-3}


def test_criterion_8_ablation_axes(tmp_path):
    t0 = time.time()
    data = tmp_path / "train.csv"
    rc, _, _ = run_cli([
        "bench-gen", "--preset", "markov", "--out", str(data),
        "--n-rows", "1000", "--seed", "5",
    ])
    assert rc == 0
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"lm": C8_LM, "train": C8_TRAIN}))
    corpus = tmp_path / "corpus.txt"
    corpus.write_text(
        "Shapes come in many colors and sizes. A circle can be red or green "
        "or blue, and squares are often large. Stars are usually small.\n" * 40
    )

    variants = {
        "base": [],
        "nopermute": ["--no-permute"],
        "pretrain": ["--pretrain-corpus", str(corpus)],
    }
    ckpts = {}
    for name, extra in variants.items():
        out = tmp_path / f"{name}.ckpt"
        rc, _, _ = run_cli([
            "train", "--config", str(config), "--data", str(data),
            "--out", str(out), "--seed", "0", *extra,
        ])
        assert rc == 0, name
        ckpts[name] = out.read_bytes()
    pairwise_distinct = (
        ckpts["base"] != ckpts["nopermute"]
        and ckpts["base"] != ckpts["pretrain"]
        and ckpts["nopermute"] != ckpts["pretrain"]
    )

    reports = {}
    synths = {}
    for name in variants:
        synth = tmp_path / f"{name}.csv"
        rc, _, _ = run_cli([
            "sample", "--ckpt", str(tmp_path / f"{name}.ckpt"),
            "--out", str(synth), "--n", "60", "--seed", "9",
        ])
        assert rc == 0, name
        synths[name] = synth.read_bytes()
        report_path = tmp_path / f"{name}.report.json"
        rc, _, _ = run_cli([
            "evaluate", "--real-train", str(data), "--real-test", str(data),
            "--synthetic", str(synth), "--metrics", "dcr,mle",
            "--target", "Size", "--out", str(report_path),
        ])
        assert rc == 0, name
        full = json.loads(report_path.read_text())
        reports[name] = {"dcr": full["dcr"], "mle": full["mle"]}
    reports_distinct = (
        synths["base"] != synths["nopermute"]
        and synths["base"] != synths["pretrain"]
        and reports["base"] != reports["nopermute"]
        and reports["base"] != reports["pretrain"]
    )

    # conditioning in reversed schema order: permutation training handles it,
    # schema-order-only training starves the attempt budget (expected failure)
    reversed_args = [
        "--condition", "Color=blue", "--condition", "Shape=circle",
        "--n", "20", "--max-attempts-factor", "2", "--seed", "13",
    ]
    rc_base, _, _ = run_cli([
        "sample", "--ckpt", str(tmp_path / "base.ckpt"),
        "--out", str(tmp_path / "cond_base.csv"), *reversed_args,
    ])
    rc_noperm, _, _ = run_cli([
        "sample", "--ckpt", str(tmp_path / "nopermute.ckpt"),
        "--out", str(tmp_path / "cond_noperm.csv"), *reversed_args,
    ])
    elapsed = time.time() - t0
    ok = (
        pairwise_distinct
        and reports_distinct
        and rc_base == 0
        and rc_noperm == 4
    )
    _report(
        8,
        ok,
        f"checkpoints pairwise distinct={pairwise_distinct}, samples and "
        f"metric reports distinct={reports_distinct}, reversed-order "
        f"conditioning exits base={rc_base} nopermute={rc_noperm} "
        f"(expected 0/4), {elapsed:.0f}s",
    )


# -- criterion 9: byte-level determinism through the CLI ---------------------


def test_criterion_9_determinism(tmp_path):
    t0 = time.time()
    data = tmp_path / "train.csv"
    rc, _, _ = run_cli([
        "bench-gen", "--preset", "toy", "--out", str(data),
        "--n-rows", "200", "--seed", "1",
    ])
    assert rc == 0
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "lm": {"vocab_size": 300, "context_len": 48, "n_layers": 1,
               "n_heads": 2, "d_model": 32, "d_ff": 64},
        "train": {"epochs": 20, "batch_size": 32, "learning_rate": 3e-3},
    }))
    ckpt_bytes = {}
    for tag in ("a", "b"):
        out = tmp_path / f"model_{tag}.ckpt"
        rc, _, _ = run_cli([
            "train", "--config", str(config), "--data", str(data),
            "--out", str(out), "--seed", "7",
        ])
        assert rc == 0
        ckpt_bytes[tag] = out.read_bytes()
    csv_bytes = {}
    for tag in ("a", "b"):
        out = tmp_path / f"synth_{tag}.csv"
        rc, _, _ = run_cli([
            "sample", "--ckpt", str(tmp_path / "model_a.ckpt"),
            "--out", str(out), "--n", "25", "--seed", "3",
        ])
        assert rc == 0
        csv_bytes[tag] = out.read_bytes()
    elapsed = time.time() - t0
    ok = ckpt_bytes["a"] == ckpt_bytes["b"] and csv_bytes["a"] == csv_bytes["b"]
    _report(
        9,
        ok,
        f"retrain checkpoints byte-identical={ckpt_bytes['a'] == ckpt_bytes['b']}, "
        f"resample CSVs identical={csv_bytes['a'] == csv_bytes['b']}, {elapsed:.0f}s",
    )
