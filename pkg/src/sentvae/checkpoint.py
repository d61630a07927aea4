"""Binary checkpoint persistence.

Layout (all little-endian): magic ``SVCP``, u32 format version, payload,
u32 CRC32 of the payload. The payload holds a flat ``key = value`` config
snapshot, the sha256 of the vocab file the model was trained against, every
tensor (embeddings included) as shape-prefixed float64, optional Adam state
and the training rng state as JSON. A checkpoint plus the corpus and vocab
file reproduces any evaluation number exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .models import Model, ModelConfig
from .neural import AdamState, DenseParams, GruParams, GRU_FIELDS

MAGIC = b"SVCP"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class VersionMismatch(CheckpointError):
    pass


class VocabMismatch(CheckpointError):
    pass


class ChecksumFailure(CheckpointError):
    pass


def vocab_hash_of(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class CheckpointData:
    model: Model
    config: dict          # flat RunConfig snapshot (strings/numbers/bools)
    vocab_hash: str
    adam: AdamState | None
    rng_state: dict | None


def _write_bytes(buf: io.BytesIO, data: bytes) -> None:
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def _write_str(buf: io.BytesIO, s: str) -> None:
    _write_bytes(buf, s.encode("utf-8"))


def _write_tensor(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    _write_str(buf, name)
    arr = np.ascontiguousarray(arr, dtype="<f8")
    buf.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        buf.write(struct.pack("<Q", d))
    buf.write(arr.tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ChecksumFailure("checkpoint payload truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def bytes_(self) -> bytes:
        return self.take(self.u32())

    def str_(self) -> str:
        return self.bytes_().decode("utf-8")

    def tensor(self) -> tuple[str, np.ndarray]:
        name = self.str_()
        ndim = self.u32()
        shape = tuple(self.u64() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(self.take(count * 8), dtype="<f8").reshape(shape)
        return name, arr.astype(float)


def config_to_text(config: dict) -> str:
    lines = []
    for key in sorted(config):
        value = config[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = f"{value:.17g}"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _parse_value(s: str):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def model_tensors(model: Model) -> dict[str, np.ndarray]:
    tensors = {"emb": model.embeddings}
    tensors.update(model.named_params())
    return tensors


def save_blob(path, config: dict, vocab_hash: str,
              tensors: dict[str, np.ndarray], adam: AdamState | None = None,
              rng_state: dict | None = None) -> None:
    """Write the framed binary container shared by all checkpoint kinds."""
    payload = io.BytesIO()
    _write_str(payload, config_to_text(config))
    _write_str(payload, vocab_hash)

    payload.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        _write_tensor(payload, name, arr)

    if adam is None:
        payload.write(struct.pack("<B", 0))
    else:
        payload.write(struct.pack("<B", 1))
        payload.write(struct.pack("<Q", adam.t))
        payload.write(struct.pack("<d", adam.lr))
        for moments in (adam.m, adam.v):
            payload.write(struct.pack("<I", len(moments)))
            for name, arr in moments.items():
                _write_tensor(payload, name, arr)

    _write_str(payload, json.dumps(rng_state) if rng_state is not None else "")

    body = payload.getvalue()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def load_blob(path, expect_vocab_hash: str | None = None):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"checkpoint format v{version}, this build reads v{FORMAT_VERSION}")
    body, stored = raw[8:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise ChecksumFailure("checkpoint payload corrupt (bad checksum)")

    r = _Reader(body)
    config = parse_config_text(r.str_())
    vocab_hash = r.str_()
    if expect_vocab_hash is not None and vocab_hash != expect_vocab_hash:
        raise VocabMismatch(
            "checkpoint was built against a different vocabulary")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name, arr = r.tensor()
        tensors[name] = arr

    adam = None
    if r.take(1)[0] == 1:
        adam = AdamState(lr=0.0)
        adam.t = r.u64()
        adam.lr = r.f64()
        for moments in (adam.m, adam.v):
            for _ in range(r.u32()):
                name, arr = r.tensor()
                moments[name] = arr.copy()
    rng_json = r.str_()
    rng_state = json.loads(rng_json) if rng_json else None
    return config, vocab_hash, tensors, adam, rng_state


def save_checkpoint(path, model: Model, config: dict, vocab_hash: str,
                    adam: AdamState | None = None,
                    rng_state: dict | None = None) -> None:
    full_config = dict(config)
    for key in ("variant", "vocab_size", "d_word", "d_h", "d_z", "max_len",
                "kl_anneal_steps", "word_dropout"):
        full_config[f"model.{key}"] = getattr(model.config, key)
    save_blob(path, full_config, vocab_hash, model_tensors(model), adam,
              rng_state)


def load_checkpoint(path, expect_vocab_hash: str | None = None) -> CheckpointData:
    config, vocab_hash, tensors, adam, rng_state = load_blob(
        path, expect_vocab_hash)
    if "model.variant" not in config:
        raise CheckpointError(f"{path} does not hold a sequence model")
    model = _model_from_tensors(config, tensors)
    return CheckpointData(model, config, vocab_hash, adam, rng_state)


def _model_from_tensors(config: dict, tensors: dict[str, np.ndarray]) -> Model:
    model_cfg = ModelConfig(
        variant=config["model.variant"],
        vocab_size=config["model.vocab_size"],
        d_word=config["model.d_word"],
        d_h=config["model.d_h"],
        d_z=config["model.d_z"],
        max_len=config["model.max_len"],
        kl_anneal_steps=config["model.kl_anneal_steps"],
        word_dropout=float(config.get("model.word_dropout", 0.0)),
    )

    def gru(prefix: str) -> GruParams:
        return GruParams(*(tensors[f"{prefix}.{f}"].copy() for f in GRU_FIELDS))

    def densep(prefix: str) -> DenseParams:
        return DenseParams(tensors[f"{prefix}.w"].copy(),
                           tensors[f"{prefix}.b"].copy())

    mu_head = densep("mu") if "mu.w" in tensors else None
    logvar_head = densep("logvar") if "logvar.w" in tensors else None
    return Model(model_cfg, tensors["emb"].copy(), gru("enc_fwd"),
                 gru("enc_bwd"), mu_head, logvar_head, densep("dec_init"),
                 gru("dec"), densep("out"))
