"""Binary checkpoint files.

Layout (little-endian): magic ``RMCK``, u32 version (1), u32 length + UTF-8
``key=value`` config text, then records of [u16 name length, name, u8 dtype tag
(0 = 32-bit real, 1 = 64-bit real), u8 rank, u32 dims..., raw payload].
Model tensors use their parameter names; optimizer moments are stored as
``adamw.m/<name>`` and ``adamw.v/<name>``.
"""

from __future__ import annotations

import io
import math
import struct
from pathlib import Path

import numpy as np

from .. import config as cfgio
from ..data.io import parse_key_values
from ..data.sample import DataError
from ..nn import Module
from ..unet import ModelConfig
from .optim import TrainState

MAGIC = b"RMCK"
VERSION = 1
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_STATE_KEYS = ("step", "total_steps", "lr_max", "lr_min", "weight_decay", "seed", "best_val")


class CheckpointError(Exception):
    """Unreadable, corrupt or incompatible checkpoint."""


def _config_text(model_cfg: ModelConfig, state: TrainState | None, extra: dict | None) -> str:
    kv = cfgio.to_strings(model_cfg, "model.")
    if state is not None:
        kv.update({f"state.{k}": cfgio.format_value(getattr(state, k)) for k in _STATE_KEYS})
    kv.update({k: cfgio.format_value(v) for k, v in (extra or {}).items()})
    return cfgio.dump(kv)


def _record(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    if arr.dtype not in _TAGS:
        raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)) + raw)
    buf.write(struct.pack("<BB", _TAGS[arr.dtype], arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[_TAGS[arr.dtype]]).tobytes())


def save_checkpoint(path: Path, model: Module, state: TrainState | None = None, extra: dict | None = None) -> None:
    buf = io.BytesIO()
    text = _config_text(model.config, state, extra).encode("utf-8")
    buf.write(MAGIC + struct.pack("<II", VERSION, len(text)) + text)
    for name, p in model.named_parameters():
        _record(buf, name, p.data)
    if state is not None:
        for name, _ in model.named_parameters():
            if name in state.m:
                _record(buf, f"adamw.m/{name}", state.m[name])
                _record(buf, f"adamw.v/{name}", state.v[name])
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def read_checkpoint(path: Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"{path}: checkpoint not found") from None
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, not a checkpoint file")
    try:
        version, n = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: version {version} found, expected {VERSION}")
        pos = 12 + n
        kv = parse_key_values(raw[12:pos].decode("utf-8"), str(path))
        tensors = {}
        while pos < len(raw):
            (ln,) = struct.unpack_from("<H", raw, pos)
            name = raw[pos + 2:pos + 2 + ln].decode("utf-8")
            pos += 2 + ln
            tag, rank = struct.unpack_from("<BB", raw, pos)
            pos += 2
            shape = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            dtype = _DTYPES[tag]
            size = dtype.itemsize * math.prod(shape)
            if pos + size > len(raw):
                raise CheckpointError(f"{path}: truncated record {name!r}")
            tensors[name] = np.frombuffer(raw, dtype=dtype, count=math.prod(shape), offset=pos).reshape(shape).copy()
            pos += size
    except (struct.error, KeyError, UnicodeDecodeError, DataError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    return kv, tensors


def model_config_from(kv: dict[str, str]) -> ModelConfig:
    return cfgio.from_strings(ModelConfig, kv, prefix="model.")


def load_checkpoint(path: Path, model: Module, with_state: bool = True) -> TrainState | None:
    """Copy tensors into ``model`` (whose config must match) and rebuild the optimizer state."""
    kv, tensors = read_checkpoint(path)
    expected = cfgio.to_strings(model.config, "model.")
    found = {k: v for k, v in kv.items() if k.startswith("model.")}
    if expected != found:
        diff = [f"{k}: expected {expected.get(k)!r}, found {found.get(k)!r}"
                for k in sorted(set(expected) | set(found)) if expected.get(k) != found.get(k)]
        raise CheckpointError(f"{path}: model configuration mismatch ({'; '.join(diff)})")
    for name, p in model.named_parameters():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {tensors[name].shape}, expected {p.shape}")
        p.data = tensors[name].astype(p.data.dtype)
        p.grad = None
    if not with_state or "state.step" not in kv:
        return None
    state = TrainState(
        total_steps=int(kv["state.total_steps"]), lr_max=float(kv["state.lr_max"]),
        lr_min=float(kv["state.lr_min"]), weight_decay=float(kv["state.weight_decay"]),
        seed=int(kv["state.seed"]), step=int(kv["state.step"]), best_val=float(kv["state.best_val"]))
    for name, _ in model.named_parameters():
        if f"adamw.m/{name}" in tensors:
            state.m[name] = tensors[f"adamw.m/{name}"]
            state.v[name] = tensors[f"adamw.v/{name}"]
    return state


def build_from_checkpoint(path: Path):
    """Reconstruct the model described by a checkpoint's config block and load its weights."""
    from ..unet import build_model

    kv, _ = read_checkpoint(path)
    model = build_model(model_config_from(kv))
    load_checkpoint(path, model, with_state=False)
    return model, kv
