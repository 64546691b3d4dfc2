"""Batch front door for the pipeline.

Subcommands: train, sample, impute, evaluate, bench-gen, serve. Each one
builds a request body, posts it to the service (in-process by default, or a
remote instance via --server), and maps failures to exit codes: 0 ok,
2 config or schema error, 3 training abort, 4 sampling budget exhausted.

Option precedence is CLI flag > config file > built-in default, and the
merged result is printed as a {"event": "config"} header before the run.
Structured records go to standard output as JSON lines; human-readable
summaries and diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    MissingPathError,
    TabsynthError,
    UnknownConfigKeyError,
)
from .lm import LmConfig, TrainConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_BUDGET = 4

_KIND_EXIT = {"config": EXIT_CONFIG, "training": EXIT_TRAINING, "budget": EXIT_BUDGET}

_SECTION_KEYS = {
    "lm": {f.name for f in dataclasses.fields(LmConfig)},
    "train": {f.name for f in dataclasses.fields(TrainConfig)},
    "sample": {"temperature", "max_new_tokens", "max_attempts_factor", "workers", "mode"},
    "eval": {"metrics", "seeds", "gmm_components", "normalized_dcr"},
}


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True), flush=True)


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def load_run_config(path: str | None) -> dict:
    """Parse the JSON run config, rejecting unknown sections and keys."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise MissingPathError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(_SECTION_KEYS))
    if unknown:
        raise UnknownConfigKeyError(
            f"unknown config sections: {', '.join(unknown)}; "
            f"expected {', '.join(sorted(_SECTION_KEYS))}"
        )
    for section, allowed in _SECTION_KEYS.items():
        sub = data.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        bad = sorted(set(sub) - allowed)
        if bad:
            raise UnknownConfigKeyError(
                f"unknown keys in config section {section!r}: {', '.join(bad)}"
            )
    return data


def _merged(file_section: dict, cli_overrides: dict) -> dict:
    """File values first, then every CLI value that was actually given."""
    out = dict(file_section)
    for key, value in cli_overrides.items():
        if value is not None:
            out[key] = value
    return out


def _drop_none(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if v is not None}


def _parse_condition(text: str) -> list[str]:
    feature, sep, value = text.partition("=")
    if not sep or not feature:
        raise ConfigError(f"condition {text!r} must look like Feature=Value")
    return [feature, value]


def _parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"seeds {text!r} must be comma-separated integers")


def _parse_metrics(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [part.strip() for part in text.split(",") if part.strip()]


class ServiceClient:
    """Posts to an in-process app by default, or to --server when given."""

    def __init__(self, server: str | None):
        if server is None:
            import warnings

            with warnings.catch_warnings():
                # the bundled test client warns about its httpx backend; the
                # in-process call path works fine and needs no extra package
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())
        else:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)

    def post(self, route: str, payload: dict):
        response = self._client.post(route, json=payload)
        try:
            body = response.json()
        except ValueError:
            body = {"detail": response.text}
        return response.status_code, body


def _call(args, command: str, route: str, payload: dict):
    """Print the effective config, post the request, map errors to exits."""
    _emit({"event": "config", "command": command, "effective": payload})
    status, body = ServiceClient(args.server).post(route, payload)
    if status == 200:
        _emit({"event": command, **body})
        return EXIT_OK, body
    record = body if isinstance(body, dict) else {"detail": str(body)}
    _emit({"event": "error", "status": status, **record})
    detail = record.get("detail", record)
    _note(f"error: {detail}")
    if "invalid_reasons" in record:
        _note(f"invalid reasons: {record['invalid_reasons']}")
    if status in (400, 404, 422):
        return EXIT_CONFIG, None
    return _KIND_EXIT.get(record.get("kind"), 1), None


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    lm = _merged(cfg.get("lm", {}), {"seed": args.seed})
    train = _merged(
        cfg.get("train", {}),
        {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "weight_decay": args.weight_decay,
            "val_fraction": args.val_fraction,
            "seed": args.seed,
            "permute": False if args.no_permute else None,
        },
    )
    payload = _drop_none(
        {
            "data": args.data,
            "out": args.out,
            "target": args.target,
            "pretrain_corpus": args.pretrain_corpus,
            "log_path": args.log,
        }
    )
    payload.update({"lm": lm, "train": train})
    code, body = _call(args, "train", "/train", payload)
    if body is not None:
        _note(
            f"trained on {body['rows']} rows; final loss {body['final_loss']:.4f} "
            f"after {body['steps']} steps; checkpoint at {body['out']}"
        )
    return code


def cmd_sample(args) -> int:
    cfg = load_run_config(args.config)
    opts = _merged(
        cfg.get("sample", {}),
        {
            "temperature": args.temperature,
            "max_new_tokens": args.max_new_tokens,
            "max_attempts_factor": args.max_attempts_factor,
            "workers": args.workers,
            "mode": args.mode,
        },
    )
    payload = _drop_none(
        {
            "ckpt": args.ckpt,
            "out": args.out,
            "n": args.n,
            "seed": args.seed,
            "start_feature": args.start_feature,
            "report_path": args.report,
        }
    )
    payload["conditions"] = [_parse_condition(c) for c in (args.condition or [])]
    payload.update(opts)
    code, body = _call(args, "sample", "/sample", payload)
    if body is not None:
        _note(
            f"wrote {body['rows']} rows to {body['out']} "
            f"({body['attempts']} attempts, invalid rate {body['invalid_rate']:.3f})"
        )
    return code


def cmd_impute(args) -> int:
    cfg = load_run_config(args.config)
    opts = _merged(
        cfg.get("sample", {}),
        {
            "temperature": args.temperature,
            "max_new_tokens": args.max_new_tokens,
            "max_attempts_factor": args.max_attempts_factor,
        },
    )
    opts.pop("workers", None)
    opts.pop("mode", None)
    payload = _drop_none(
        {"ckpt": args.ckpt, "data": args.data, "out": args.out, "seed": args.seed}
    )
    payload.update(opts)
    code, body = _call(args, "impute", "/impute", payload)
    if body is not None:
        _note(
            f"imputed {body['filled_cells']} cells across {body['rows']} rows "
            f"into {body['out']}"
        )
    return code


def _summary_lines(report: dict) -> list[str]:
    lines = []
    dcr = report.get("dcr")
    if dcr:
        lines.append(
            f"dcr            min {dcr['min']:.4g}  median {dcr['median']:.4g}  "
            f"zero_fraction {dcr['zero_fraction']:.3f}"
        )
    disc = report.get("discriminator")
    if disc:
        lines.append(
            f"discriminator  accuracy {disc['accuracy_mean']:.3f} "
            f"± {disc['accuracy_std']:.3f}"
        )
    mle = report.get("mle")
    if mle:
        for side in ("synthetic", "real_baseline"):
            for model, metrics in mle[side]["models"].items():
                cells = "  ".join(
                    f"{name} {value['mean']:.3f}±{value['std']:.3f}"
                    for name, value in metrics.items()
                )
                lines.append(f"mle[{side}] {model}: {cells}")
    lik = report.get("likelihood")
    if lik:
        lines.append(
            f"likelihood     l_syn {lik['l_syn']:.4f}  l_test {lik['l_test']:.4f}"
        )
    return lines


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    opts = _merged(
        cfg.get("eval", {}),
        {
            "metrics": _parse_metrics(args.metrics),
            "seeds": _parse_seeds(args.seeds),
            "gmm_components": args.gmm_components,
            "normalized_dcr": True if args.normalized_dcr else None,
        },
    )
    joint_x = joint_y = None
    if args.joint_features is not None:
        parts = [p.strip() for p in args.joint_features.split(",")]
        if len(parts) != 2 or not all(parts):
            raise ConfigError(
                f"joint-features {args.joint_features!r} must name two features, "
                "like X,Y"
            )
        joint_x, joint_y = parts
    payload = _drop_none(
        {
            "real_train": args.real_train,
            "real_test": args.real_test,
            "synthetic": args.synthetic,
            "target": args.target,
            "out": args.out,
            "histogram": args.histogram,
            "joint_histogram": args.joint_histogram,
            "joint_x": joint_x,
            "joint_y": joint_y,
        }
    )
    payload.update(opts)
    code, body = _call(args, "evaluate", "/evaluate", payload)
    if body is not None:
        for line in _summary_lines(body["report"]):
            _note(line)
    return code


def cmd_bench_gen(args) -> int:
    payload = _drop_none(
        {
            "out": args.out,
            "spec_path": args.spec,
            "preset": args.preset,
            "n_rows": args.n_rows,
            "seed": args.seed,
        }
    )
    code, body = _call(args, "bench-gen", "/bench-gen", payload)
    if body is not None:
        _note(
            f"generated {body['rows']} rows of kind {body['kind']} "
            f"(true mean log-likelihood {body['true_loglik']:.4f}) into {body['out']}"
        )
    return code


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabsynth",
        description="Train a tabular language model, sample and impute rows, "
        "evaluate synthetic data, and generate benchmark tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config file")
        p.add_argument("--server", help="post to a running service instead of in-process")
        p.add_argument("--seed", type=int, help="master seed (default 0)")

    p = sub.add_parser("train", help="fit a model on a CSV table")
    common(p)
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--target", help="target feature name for later evaluation")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--val-fraction", type=float)
    p.add_argument(
        "--no-permute",
        action="store_true",
        default=None,
        help="encode rows in fixed schema order instead of per-epoch permutations",
    )
    p.add_argument("--pretrain-corpus", help="plain-text warm-start corpus")
    p.add_argument("--log", help="JSON-lines loss log output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw synthetic rows from a checkpoint")
    common(p)
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--n", type=int, default=1, help="number of rows")
    p.add_argument("--temperature", type=float)
    p.add_argument(
        "--condition",
        action="append",
        metavar="FEATURE=VALUE",
        help="fix a feature value; repeatable",
    )
    p.add_argument("--start-feature", help="feature name to open every record")
    p.add_argument(
        "--mode",
        choices=["feature-name", "name-value", "multi-name-value"],
        help="preconditioning mode (default: multi-name-value when conditions "
        "are given, else feature-name)",
    )
    p.add_argument("--max-new-tokens", type=int)
    p.add_argument("--max-attempts-factor", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--report", help="write the sample report JSON here")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("impute", help="fill missing cells in a CSV")
    common(p)
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="CSV with empty cells")
    p.add_argument("--out", required=True, help="completed CSV path")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-new-tokens", type=int)
    p.add_argument("--max-attempts-factor", type=int)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("evaluate", help="score synthetic data against real data")
    common(p)
    p.add_argument("--real-train", required=True)
    p.add_argument("--real-test", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--target", help="target feature for ML-efficiency scoring")
    p.add_argument(
        "--metrics",
        help="comma-separated subset of mle,dcr,discriminator,likelihood",
    )
    p.add_argument("--seeds", help="comma-separated seeds (default 0,1,2,3,4)")
    p.add_argument("--gmm-components", type=int)
    p.add_argument("--normalized-dcr", action="store_true", default=None)
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument(
        "--histogram",
        help="write per-row distance-to-closest-record values here (CSV)",
    )
    p.add_argument("--joint-histogram", help="write a 2-D histogram CSV here")
    p.add_argument(
        "--joint-features",
        metavar="X,Y",
        help="the two numeric features for --joint-histogram",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-gen", help="generate a benchmark table")
    common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="generator spec JSON file")
    group.add_argument(
        "--preset", choices=["gmm", "markov", "toy"], help="built-in benchmark"
    )
    p.add_argument("--n-rows", type=int, help="override the generator's row count")
    p.set_defaults(func=cmd_bench_gen)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TabsynthError as exc:
        _emit(
            {
                "event": "error",
                "error": type(exc).__name__,
                "kind": exc.kind,
                "detail": str(exc),
            }
        )
        _note(f"error: {exc}")
        return _KIND_EXIT[exc.kind]


if __name__ == "__main__":
    sys.exit(main())
