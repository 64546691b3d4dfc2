"""HTTP front end over the training, sampling, and evaluation pipeline.

Every route reads and writes server-local files named in the request body.
Domain failures map onto status codes by their error kind: bad inputs or
schemas give 400, an aborted optimization gives 500, an exhausted sampling
budget gives 409. The response body always carries the error class name,
its kind, and the message, so callers can react without parsing prose.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..benchdata import (
    GeneratorSpec,
    generate,
    gmm_benchmark_spec,
    markov_benchmark_spec,
    toy_benchmark_spec,
    true_loglik,
)
from ..codec import Clause
from ..errors import (
    AttemptBudgetExhaustedError,
    ConfigError,
    MissingPathError,
    TabsynthError,
    UnknownConfigKeyError,
)
from ..evalsuite import export_joint_histogram, run_eval, union_range
from ..lm import LmConfig, TrainConfig, load_checkpoint, save_checkpoint, train
from ..sampling import Mode, SampleSpec, impute, sample
from ..tables import MISSING, load_csv, save_csv
from . import schemas

_STATUS_BY_KIND = {"config": 400, "training": 500, "budget": 409}

_PRESETS = {
    "gmm": gmm_benchmark_spec,
    "markov": markov_benchmark_spec,
    "toy": toy_benchmark_spec,
}


def _build_config(cls, overrides: dict):
    """Instantiate a config dataclass, rejecting keys it does not define."""
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise UnknownConfigKeyError(
            f"unknown {cls.__name__} keys: {', '.join(unknown)}"
        )
    return cls(**overrides)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingPathError(f"{what} file not found: {path}")
    return p


def _require_out(path: str, what: str) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise MissingPathError(f"{what} directory not found: {p.parent}")
    return p


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _parse_mode(name: str | None, has_conditions: bool) -> Mode:
    if name is None:
        return Mode.MULTI_NAME_VALUE if has_conditions else Mode.FEATURE_NAME
    try:
        return Mode(name)
    except ValueError:
        valid = ", ".join(m.value for m in Mode)
        raise ConfigError(f"unknown sampling mode {name!r}; expected one of {valid}")


def create_app() -> FastAPI:
    app = FastAPI(title="tabsynth", version="0.1.0")

    @app.exception_handler(TabsynthError)
    async def _domain_error(request, exc: TabsynthError):
        payload = {
            "error": type(exc).__name__,
            "kind": exc.kind,
            "detail": str(exc),
        }
        if isinstance(exc, AttemptBudgetExhaustedError):
            payload["invalid_reasons"] = exc.invalid_reasons
        return JSONResponse(status_code=_STATUS_BY_KIND[exc.kind], content=payload)

    @app.get("/health")
    def health():
        return {"status": "ok", "service": "tabsynth"}

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_route(req: schemas.TrainRequest):
        _require_file(req.data, "data")
        out = _require_out(req.out, "checkpoint output")
        corpus = None
        if req.pretrain_corpus is not None:
            corpus = _require_file(req.pretrain_corpus, "pretrain corpus").read_text(
                encoding="utf-8"
            )
        lm_config = _build_config(LmConfig, req.lm)
        train_config = _build_config(TrainConfig, req.train)
        table = load_csv(req.data, target_feature=req.target)
        ckpt = train(table, lm_config, train_config, corpus)
        save_checkpoint(ckpt, out)
        if req.log_path is not None:
            header = {
                "event": "config",
                "lm": ckpt.config.to_json(),
                "train": train_config.to_json(),
            }
            _write_jsonl(
                _require_out(req.log_path, "loss log"), [header, *ckpt.train_log]
            )
        epoch_losses = [e["loss"] for e in ckpt.train_log if e.get("phase") == "epoch"]
        steps = max((e.get("step", 0) for e in ckpt.train_log), default=0)
        return schemas.TrainResponse(
            out=str(out),
            final_loss=float(epoch_losses[-1]),
            steps=int(steps),
            vocab_size=len(ckpt.vocab),
            rows=len(table.rows),
        )

    @app.post("/sample", response_model=schemas.SampleResponse)
    def sample_route(req: schemas.SampleRequest):
        _require_file(req.ckpt, "checkpoint")
        out = _require_out(req.out, "sample output")
        ckpt = load_checkpoint(req.ckpt)
        constraints = tuple(Clause(f, v) for f, v in req.conditions)
        spec = SampleSpec(
            count=req.n,
            temperature=req.temperature,
            constraints=constraints,
            mode=_parse_mode(req.mode, bool(constraints)),
            start_feature=req.start_feature,
            max_new_tokens=req.max_new_tokens,
            max_attempts_factor=req.max_attempts_factor,
            seed=req.seed,
        )
        report = sample(ckpt, spec, workers=req.workers)
        save_csv(report.rows, out)
        if req.report_path is not None:
            _require_out(req.report_path, "sample report").write_text(
                json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
        return schemas.SampleResponse(
            out=str(out),
            rows=len(report.rows.rows),
            attempts=report.attempts,
            invalid=report.invalid,
            invalid_rate=report.invalid_rate,
            invalid_reasons=dict(report.invalid_reasons),
        )

    @app.post("/impute", response_model=schemas.ImputeResponse)
    def impute_route(req: schemas.ImputeRequest):
        _require_file(req.ckpt, "checkpoint")
        _require_file(req.data, "data")
        out = _require_out(req.out, "imputed output")
        ckpt = load_checkpoint(req.ckpt)
        partial = load_csv(req.data)
        completed = impute(
            ckpt,
            partial,
            temperature=req.temperature,
            seed=req.seed,
            max_new_tokens=req.max_new_tokens,
            max_attempts_factor=req.max_attempts_factor,
        )
        save_csv(completed, out)
        filled = sum(
            1
            for before, after in zip(partial.rows, completed.rows)
            for b, a in zip(before, after)
            if b == MISSING and a != MISSING
        )
        return schemas.ImputeResponse(
            out=str(out), rows=len(completed.rows), filled_cells=filled
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_route(req: schemas.EvaluateRequest):
        _require_file(req.real_train, "real train")
        _require_file(req.real_test, "real test")
        _require_file(req.synthetic, "synthetic")
        real_train = load_csv(req.real_train, target_feature=req.target)
        real_test = load_csv(req.real_test, target_feature=req.target)
        synthetic = load_csv(req.synthetic, target_feature=req.target)
        metrics = tuple(req.metrics) if req.metrics is not None else None
        if req.histogram is not None and metrics is not None and "dcr" not in metrics:
            raise ConfigError("distance histogram export needs the dcr metric")
        if req.joint_histogram is not None and not (req.joint_x and req.joint_y):
            raise ConfigError("joint histogram export needs joint_x and joint_y")
        report = run_eval(
            real_train,
            real_test,
            synthetic,
            target=req.target,
            metrics=metrics,
            seeds=tuple(req.seeds),
            gmm_components=req.gmm_components,
            normalized_dcr=req.normalized_dcr,
        )
        payload = report.to_json()
        if req.out is not None:
            _require_out(req.out, "report").write_text(
                json.dumps(payload, sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
        if req.histogram is not None and report.dcr is not None:
            path = _require_out(req.histogram, "distance histogram")
            lines = ["distance"]
            lines += [repr(float(d)) for d in report.dcr.distances]
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        if req.joint_histogram is not None:
            frame = union_range(
                [real_train, real_test, synthetic], req.joint_x, req.joint_y
            )
            export_joint_histogram(
                synthetic,
                req.joint_x,
                req.joint_y,
                path=_require_out(req.joint_histogram, "joint histogram"),
                value_range=frame,
            )
        return schemas.EvaluateResponse(report=payload)

    @app.post("/bench-gen", response_model=schemas.BenchGenResponse)
    def bench_gen_route(req: schemas.BenchGenRequest):
        out = _require_out(req.out, "benchmark output")
        given = [
            name
            for name, value in (
                ("preset", req.preset),
                ("spec", req.spec),
                ("spec_path", req.spec_path),
            )
            if value is not None
        ]
        if len(given) != 1:
            raise ConfigError(
                "bench-gen needs exactly one of preset, spec, or spec_path; "
                f"got {given or 'none'}"
            )
        if req.preset is not None:
            if req.preset not in _PRESETS:
                raise ConfigError(
                    f"unknown preset {req.preset!r}; expected one of "
                    + ", ".join(sorted(_PRESETS))
                )
            spec = _PRESETS[req.preset]()
        elif req.spec is not None:
            spec = GeneratorSpec.from_json(req.spec)
        else:
            _require_file(req.spec_path, "generator spec")
            spec = GeneratorSpec.load(req.spec_path)
        if req.n_rows is not None:
            spec = dataclasses.replace(spec, n_rows=req.n_rows)
        if req.seed is not None:
            spec = dataclasses.replace(spec, seed=req.seed)
        spec.validate()
        table = generate(spec)
        save_csv(table, out)
        return schemas.BenchGenResponse(
            out=str(out),
            rows=len(table.rows),
            kind=spec.to_json()["kind"],
            true_loglik=float(true_loglik(spec, table)),
        )

    return app
