"""Model and optimizer hyperparameter bundles."""

from dataclasses import asdict, dataclass

from ..errors import LmError


@dataclass(frozen=True)
class LmConfig:
    vocab_size: int = 512
    context_len: int = 256
    n_layers: int = 4
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 512
    dropout: float = 0.0
    seed: int = 0
    tied_output: bool = False

    def __post_init__(self):
        if self.vocab_size < 258:
            raise LmError("vocab_size must cover 256 bytes plus PAD and EOR (>= 258)")
        if min(self.context_len, self.n_layers, self.n_heads, self.d_model, self.d_ff) < 1:
            raise LmError("all size fields must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise LmError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise LmError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "LmConfig":
        return cls(**data)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    grad_clip: float | None = 1.0
    permute: bool = True
    seed: int = 0
    val_fraction: float = 0.0
    patience: int = 5
    pretrain_epochs: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise LmError("epochs must be >= 1")
        if self.batch_size < 1:
            raise LmError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise LmError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise LmError("weight_decay must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise LmError("adam betas must lie in [0, 1)")
        if self.adam_epsilon <= 0:
            raise LmError("adam_epsilon must be > 0")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise LmError("grad_clip must be positive when set")
        if not 0.0 <= self.val_fraction < 1.0:
            raise LmError("val_fraction must lie in [0, 1)")
        if self.patience < 1:
            raise LmError("patience must be >= 1")
        if self.pretrain_epochs < 1:
            raise LmError("pretrain_epochs must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**data)
