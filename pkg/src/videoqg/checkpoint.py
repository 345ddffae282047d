"""Checkpoint files.

Layout: magic ``SRCK``, u16 format version, u32 header length, a UTF-8 JSON
header (sorted keys, no whitespace), then every tensor listed in the header
as little-endian float64 in header order. The header holds the model spec,
the step counter, the optimizer kind and step, the RNG state and the
name/shape of each tensor. Parameters come first in name order, then
optimizer moments.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetFormatError, MagicError, TruncationError, VersionError
from .models import ModelSpec, QGModel, build_model

MAGIC = b"SRCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    optimizer_kind: str = "adam"
    optimizer_step: int = 0
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)

    def model(self) -> QGModel:
        model = build_model(self.spec)
        model.load_state_dict(self.params)
        return model


def capture(model: QGModel, optimizer=None, step: int = 0, rng: np.random.Generator | None = None,
            extra: dict | None = None) -> Checkpoint:
    return Checkpoint(
        spec=model.spec,
        params=model.state_dict(),
        optimizer_kind=getattr(optimizer, "kind", "adam"),
        optimizer_step=getattr(optimizer, "t", 0),
        optimizer_state=dict(optimizer.state()) if optimizer is not None else {},
        step=step,
        rng_state=rng.bit_generator.state if rng is not None else None,
        extra=dict(extra or {}),
    )


def to_bytes(ckpt: Checkpoint) -> bytes:
    names = sorted(ckpt.params)
    opt_names = sorted(ckpt.optimizer_state)
    tensors = [("param", n, np.asarray(ckpt.params[n], dtype=np.float64)) for n in names]
    tensors += [("optim", n, np.asarray(ckpt.optimizer_state[n], dtype=np.float64)) for n in opt_names]
    header = {
        "format_version": FORMAT_VERSION,
        "model_spec": ckpt.spec.to_dict(),
        "step": ckpt.step,
        "optimizer": {"kind": ckpt.optimizer_kind, "step": ckpt.optimizer_step},
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
        "tensors": [{"group": g, "name": n, "shape": list(a.shape)} for g, n, a in tensors],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(head)), head]
    parts += [a.astype("<f8").tobytes() for _, _, a in tensors]
    return b"".join(parts)


def from_bytes(buf: bytes) -> Checkpoint:
    if buf[:4] != MAGIC:
        raise MagicError(f"not a checkpoint: magic {buf[:4]!r}")
    if len(buf) < 10:
        raise TruncationError("checkpoint header is truncated")
    version, head_len = struct.unpack_from("<HI", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    if len(buf) < 10 + head_len:
        raise TruncationError("checkpoint header is truncated")
    try:
        header = json.loads(buf[10:10 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"corrupt checkpoint header: {exc}") from exc
    offset = 10 + head_len
    params, optim = {}, {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(buf):
            raise TruncationError(f"checkpoint payload truncated in tensor {entry['name']}")
        arr = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=offset).astype(np.float64).reshape(shape)
        (params if entry["group"] == "param" else optim)[entry["name"]] = arr
        offset += nbytes
    if offset != len(buf):
        raise DatasetFormatError(f"{len(buf) - offset} trailing bytes after checkpoint payload")
    return Checkpoint(
        spec=ModelSpec.from_dict(header["model_spec"]),
        params=params,
        optimizer_kind=header["optimizer"]["kind"],
        optimizer_step=header["optimizer"]["step"],
        optimizer_state=optim,
        step=header["step"],
        rng_state=header["rng_state"],
        extra=header.get("extra", {}),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def restore_rng(state: dict | None, fallback_seed: int = 0) -> np.random.Generator:
    rng = np.random.default_rng(fallback_seed)
    if state is not None:
        rng.bit_generator.state = state
    return rng
