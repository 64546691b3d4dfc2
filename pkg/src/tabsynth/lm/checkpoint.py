"""Single-file checkpoint format.

Layout: 8-byte magic, little-endian u64 manifest length, JSON manifest,
then a raw tensor blob. The manifest carries the format version, model
config, schema, vocabulary, feature densities, the training log, and a
name/shape/offset index into the blob. Tensors are little-endian float32,
so save -> load roundtrips are bit-exact.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..bpe import Vocabulary
from ..density import FeatureDensity
from ..errors import CheckpointIoError, VersionMismatchError
from ..tables import Schema
from .config import LmConfig

MAGIC = b"TSYNCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: LmConfig
    params: dict[str, np.ndarray]
    vocab: Vocabulary
    schema: Schema
    train_log: list = field(default_factory=list)
    density: FeatureDensity | None = None


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    tensors = []
    chunks = []
    offset = 0
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
        raw = arr.tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_json(),
        "schema": ckpt.schema.to_json(),
        "vocab": ckpt.vocab.to_json(),
        "density": None if ckpt.density is None else ckpt.density.to_json(),
        "train_log": ckpt.train_log,
        "tensors": tensors,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for raw in chunks:
                fh.write(raw)
    except OSError as exc:
        raise CheckpointIoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointIoError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointIoError(f"{path} is not a checkpoint file")
    (manifest_len,) = struct.unpack("<Q", data[len(MAGIC) : len(MAGIC) + 8])
    head = len(MAGIC) + 8
    if len(data) < head + manifest_len:
        raise CheckpointIoError(f"{path} is truncated inside the manifest")
    try:
        manifest = json.loads(data[head : head + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIoError(f"{path} has a corrupt manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format {version!r} unsupported (expected {FORMAT_VERSION})"
        )
    blob = data[head + manifest_len :]
    params = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise CheckpointIoError(f"{path} is truncated inside tensor {entry['name']!r}")
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f4")
        params[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(
        config=LmConfig.from_json(manifest["config"]),
        params=params,
        vocab=Vocabulary.from_json(manifest["vocab"]),
        schema=Schema.from_json(manifest["schema"]),
        train_log=manifest["train_log"],
        density=None
        if manifest.get("density") is None
        else FeatureDensity.from_json(manifest["density"]),
    )
