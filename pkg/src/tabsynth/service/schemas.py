"""Request/response bodies for the HTTP service.

All file fields are paths on the machine running the service; the service
reads and writes them directly rather than streaming table payloads over
the wire. Unknown request keys are rejected so a typoed option cannot
silently fall back to a default.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrainRequest(_Strict):
    data: str
    out: str
    target: str | None = None
    lm: dict = Field(default_factory=dict)
    train: dict = Field(default_factory=dict)
    pretrain_corpus: str | None = None
    log_path: str | None = None


class TrainResponse(_Strict):
    out: str
    final_loss: float
    steps: int
    vocab_size: int
    rows: int


class SampleRequest(_Strict):
    ckpt: str
    out: str
    n: int = 1
    temperature: float = 0.7
    seed: int = 0
    # pairs, not a mapping: duplicate features must reach SampleSpec's check
    conditions: list[tuple[str, str]] = Field(default_factory=list)
    mode: str | None = None
    start_feature: str | None = None
    max_new_tokens: int = 128
    max_attempts_factor: int = 10
    workers: int = 1
    report_path: str | None = None


class SampleResponse(_Strict):
    out: str
    rows: int
    attempts: int
    invalid: int
    invalid_rate: float
    invalid_reasons: dict[str, int]


class ImputeRequest(_Strict):
    ckpt: str
    data: str
    out: str
    temperature: float = 0.7
    seed: int = 0
    max_new_tokens: int = 128
    max_attempts_factor: int = 10


class ImputeResponse(_Strict):
    out: str
    rows: int
    filled_cells: int


class EvaluateRequest(_Strict):
    real_train: str
    real_test: str
    synthetic: str
    target: str | None = None
    metrics: list[str] | None = None
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    gmm_components: int = 2
    normalized_dcr: bool = False
    out: str | None = None
    histogram: str | None = None
    joint_histogram: str | None = None
    joint_x: str | None = None
    joint_y: str | None = None


class EvaluateResponse(_Strict):
    report: dict


class BenchGenRequest(_Strict):
    out: str
    spec: dict | None = None
    spec_path: str | None = None
    preset: str | None = None
    n_rows: int | None = None
    seed: int | None = None


class BenchGenResponse(_Strict):
    out: str
    rows: int
    kind: str
    true_loglik: float
