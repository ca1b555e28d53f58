"""On-disk dataset layout, 8-bit PNG and lossless .f32grid map files, and the manifest.

Layout: ``<root>/<split>/<map_id>/{buildings.png, vehicles.png (DRM), tx_<k>.png,
gain_<k>.png}`` with an optional ``gain_<k>.f32grid`` that the loader prefers when
present. ``<root>/manifest.txt`` holds ``key=value`` lines (mode, grid, split counts).
"""

from __future__ import annotations

import re
import struct
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .sample import DataError, EnvironmentSample, normalize_mode

SPLITS = ("train", "val", "test")
MANIFEST = "manifest.txt"
F32_MAGIC = b"F32G"
_TX = re.compile(r"tx_(\d+)\.png$")


# -- single maps -------------------------------------------------------------

def write_png(path: Path, values: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(values, dtype=np.uint8), mode="L").save(path)


def read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise DataError(f"{path}: expected an 8-bit single-channel image, got mode {img.mode}")
            return np.array(img, dtype=np.uint8)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except OSError as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from None


def to_gray(p: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(p, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_f32grid(path: Path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise DataError(f"{path}: .f32grid holds 2-D maps, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(F32_MAGIC + struct.pack("<II", *arr.shape) + arr.tobytes(order="C"))


def read_f32grid(path: Path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    if raw[:4] != F32_MAGIC or len(raw) < 12:
        raise DataError(f"{path}: not a .f32grid file (bad magic)")
    rows, cols = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + 4 * rows * cols:
        raise DataError(f"{path}: payload size does not match {rows}x{cols}")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols).astype(np.float32)


# -- manifest ----------------------------------------------------------------

def parse_key_values(text: str, source: str = "") -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_manifest(root: Path, mode: str, grid: int, counts: dict[str, int], extra: dict | None = None) -> None:
    lines = [f"mode={normalize_mode(mode)}", f"grid={grid}"]
    lines += [f"{s}={counts.get(s, 0)}" for s in SPLITS]
    lines += [f"{k}={v}" for k, v in (extra or {}).items()]
    (Path(root) / MANIFEST).write_text("\n".join(lines) + "\n")


def read_manifest(root: Path) -> dict:
    path = Path(root) / MANIFEST
    if not path.is_file():
        raise DataError(f"{path}: manifest not found")
    kv = parse_key_values(path.read_text(), str(path))
    try:
        manifest = {"mode": normalize_mode(kv["mode"]), "grid": int(kv["grid"])}
        for s in SPLITS:
            manifest[s] = int(kv.get(s, 0))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: missing or invalid entry ({exc})") from None
    manifest["extra"] = {k: v for k, v in kv.items() if k not in ("mode", "grid", *SPLITS)}
    return manifest


# -- samples -----------------------------------------------------------------

def save_map(directory: Path, sample: EnvironmentSample, mode: str, lossless: bool = True) -> None:
    """Write one map with a single transmitter (index 0)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_png(directory / "buildings.png", sample.h_s * 255)
    if normalize_mode(mode) == "DRM":
        write_png(directory / "vehicles.png", sample.h_d * 255)
    write_png(directory / "tx_0.png", sample.r * 255)
    write_png(directory / "gain_0.png", to_gray(sample.p))
    if lossless:
        write_f32grid(directory / "gain_0.f32grid", sample.p)


def _binary(path: Path, grid: int) -> np.ndarray:
    img = read_png(path)
    if img.shape != (grid, grid):
        raise DataError(f"{path}: expected {grid}x{grid}, got {img.shape[0]}x{img.shape[1]}")
    return (img >= 128).astype(np.uint8)


def _gain(directory: Path, k: int, grid: int) -> np.ndarray:
    lossless = directory / f"gain_{k}.f32grid"
    if lossless.is_file():
        p, path = read_f32grid(lossless).astype(np.float64), lossless
    else:
        path = directory / f"gain_{k}.png"
        p = read_png(path).astype(np.float64) / 255.0
    if p.shape != (grid, grid):
        raise DataError(f"{path}: expected {grid}x{grid}, got {p.shape[0]}x{p.shape[1]}")
    return p


def iter_samples(root: Path, split: str) -> Iterator[EnvironmentSample]:
    """Yield every (map, transmitter) sample of ``split`` in sorted order, validated."""
    root = Path(root)
    if split not in SPLITS:
        raise DataError(f"split must be one of {SPLITS}, got {split!r}")
    manifest = read_manifest(root)
    grid, mode = manifest["grid"], manifest["mode"]
    split_dir = root / split
    if not split_dir.is_dir():
        if manifest[split] == 0:
            return
        raise DataError(f"{split_dir}: split directory not found")
    for map_dir in sorted(d for d in split_dir.iterdir() if d.is_dir()):
        h_s = _binary(map_dir / "buildings.png", grid)
        h_d = _binary(map_dir / "vehicles.png", grid) if mode == "DRM" else np.zeros_like(h_s)
        tx_files = sorted((int(m.group(1)), f) for f in map_dir.iterdir() if (m := _TX.match(f.name)))
        if not tx_files:
            raise DataError(f"{map_dir}: no tx_<k>.png files")
        for k, tx_path in tx_files:
            r = _binary(tx_path, grid)
            if int(r.sum()) != 1:
                raise DataError(f"{tx_path}: transmitter map must have exactly one hot pixel, found {int(r.sum())}")
            sample = EnvironmentSample(h_s, h_d, r, _gain(map_dir, k, grid), name=f"{split}/{map_dir.name}/{k}")
            try:
                yield sample.validate()
            except DataError as exc:
                raise DataError(f"{tx_path}: {exc}") from None


def load_dataset(root: Path, split: str) -> list[EnvironmentSample]:
    samples = list(iter_samples(root, split))
    expected = read_manifest(root)[split]
    if len(samples) != expected:
        raise DataError(f"{Path(root) / split}: manifest declares {expected} samples, found {len(samples)}")
    return samples
