"""On-disk formats: f32 matrix files, f64 checkpoints with CRC, key=value
configuration text, WAV input, and dataset directories.

MatrixFile ("F32M"): magic, version u32, rows u32, cols u32, then rows*cols
little-endian float32 values in row-major order.

Checkpoint ("FFCK"): magic, version u32, entry count u32, then per entry
name length u16 + UTF-8 name + rows u32 + cols u32 + little-endian float64
payload, and a trailing CRC32 of all preceding bytes. The model configuration
rides along as a reserved "__config__" entry (a 1x18 numeric vector, field
order in _CONFIG_FIELDS; pe_mode/output_space as indices into their
enumerations).

All writers go through a temp file + atomic rename, so failures never leave
partial files behind.
"""

from __future__ import annotations

import os
import struct
import tempfile
import wave
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Var
from .config import OUTPUT_SPACES, PE_MODES, ModelConfig
from .errors import ConfigError, FormatError
from .params import Params, validate_shapes

MATRIX_MAGIC = b"F32M"
CHECKPOINT_MAGIC = b"FFCK"
FORMAT_VERSION = 1
CONFIG_ENTRY = "__config__"

_CONFIG_FIELDS = (
    "dim", "heads", "period", "feature_rate", "motion_rate",
    "encoder_layers", "decoder_layers", "ff_dim", "vertices", "identities",
    "feature_dim", "encoder_dim", "encoder_heads",
)  # + pe_mode code, output_space code, and 3 reserved slots = 18 values


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# MatrixFile


def save_matrix(path, matrix) -> None:
    m = np.asarray(matrix.data if isinstance(matrix, Var) else matrix, dtype=np.float64)
    if m.ndim != 2:
        raise FormatError(f"matrix files hold 2-D data, got shape {m.shape}")
    header = MATRIX_MAGIC + struct.pack("<III", FORMAT_VERSION, m.shape[0], m.shape[1])
    atomic_write_bytes(path, header + m.astype("<f4").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != MATRIX_MAGIC:
        raise FormatError(f"{path}: not a matrix file (bad magic)")
    version, rows, cols = struct.unpack("<III", blob[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported matrix file version {version}")
    expected = 16 + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size {len(blob)} does not match header "
            f"({rows}x{cols} needs {expected})"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=16).astype(np.float64)
    return data.reshape(rows, cols)


def matrix_header(path) -> tuple[int, int, int]:
    """(version, rows, cols) without loading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(16)
    if len(head) < 16 or head[:4] != MATRIX_MAGIC:
        raise FormatError(f"{path}: not a matrix file (bad magic)")
    return struct.unpack("<III", head[4:16])


# ---------------------------------------------------------------------------
# Checkpoint


def _config_vector(cfg: ModelConfig) -> np.ndarray:
    values = [float(getattr(cfg, name)) for name in _CONFIG_FIELDS]
    values.append(float(PE_MODES.index(cfg.pe_mode)))
    values.append(float(OUTPUT_SPACES.index(cfg.output_space)))
    values.extend([0.0, 0.0, 0.0])  # reserved
    return np.asarray([values])


def _config_from_vector(vec: np.ndarray) -> ModelConfig:
    flat = vec.ravel()
    if flat.size != 18:
        raise FormatError(f"config entry has {flat.size} values, expected 18")
    kwargs = {}
    for i, name in enumerate(_CONFIG_FIELDS):
        value = flat[i]
        kwargs[name] = float(value) if name.endswith("_rate") else int(value)
    n = len(_CONFIG_FIELDS)
    pe_idx, out_idx = int(flat[n]), int(flat[n + 1])
    try:
        kwargs["pe_mode"] = PE_MODES[pe_idx]
        kwargs["output_space"] = OUTPUT_SPACES[out_idx]
    except IndexError:
        raise FormatError(f"config entry has bad enum codes {pe_idx}/{out_idx}")
    try:
        return ModelConfig(**kwargs).validate()
    except ConfigError as exc:
        raise FormatError(f"checkpoint config is invalid: {exc}")


def save_checkpoint(path, params: Params, cfg: ModelConfig) -> None:
    entries = dict(sorted((name, p.data) for name, p in params.items()))
    if CONFIG_ENTRY in entries:
        raise FormatError(f"parameter name {CONFIG_ENTRY!r} is reserved")
    entries[CONFIG_ENTRY] = _config_vector(cfg)
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<II", FORMAT_VERSION, len(entries))
    for name, data in entries.items():
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded)) + encoded
        body += struct.pack("<II", data.shape[0], data.shape[1])
        body += np.asarray(data, dtype="<f8").tobytes(order="C")
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    atomic_write_bytes(path, bytes(body))


def _read_checkpoint_entries(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    stored = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored:
        raise FormatError(f"{path}: CRC mismatch, file is corrupt")
    version, count = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    end = len(blob) - 4
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > end:
            raise FormatError(f"{path}: truncated entry header")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        if offset + 8 > end:
            raise FormatError(f"{path}: truncated entry shape")
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        nbytes = 8 * rows * cols
        if offset + nbytes > end:
            raise FormatError(f"{path}: truncated payload for {name!r}")
        data = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset)
        offset += nbytes
        if name in entries:
            raise FormatError(f"{path}: duplicate entry {name!r}")
        entries[name] = data.astype(np.float64).reshape(rows, cols)
    if offset != end:
        raise FormatError(f"{path}: {end - offset} stray bytes after entries")
    return entries


def load_checkpoint(path) -> tuple[Params, ModelConfig]:
    entries = _read_checkpoint_entries(path)
    if CONFIG_ENTRY not in entries:
        raise FormatError(f"{path}: missing {CONFIG_ENTRY!r} entry")
    cfg = _config_from_vector(entries.pop(CONFIG_ENTRY))
    params = {name: Var(data) for name, data in entries.items()}
    try:
        validate_shapes(params, cfg)
    except Exception as exc:
        raise FormatError(f"{path}: {exc}")
    return params, cfg


def checkpoint_summary(path) -> list[str]:
    entries = _read_checkpoint_entries(path)
    lines = []
    if CONFIG_ENTRY in entries:
        cfg = _config_from_vector(entries.pop(CONFIG_ENTRY))
        lines.append(f"config: {cfg}")
    lines.append(f"entries: {len(entries)}")
    for name, data in entries.items():
        lines.append(f"  {name}  {data.shape[0]}x{data.shape[1]}")
    return lines


# ---------------------------------------------------------------------------
# key = value configuration text


def parse_config_lines(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


# ---------------------------------------------------------------------------
# WAV input


def read_wav(path) -> tuple[np.ndarray, int]:
    """16-bit mono PCM WAV -> (samples in [-1, 1), sample rate)."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            frames = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})")
    if channels != 1 or width != 2:
        raise FormatError(
            f"{path}: expected 16-bit mono PCM, got {channels} channel(s) "
            f"at {8 * width} bits"
        )
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


# ---------------------------------------------------------------------------
# dataset directories

DATASET_META = "dataset.cfg"
DATASET_SAMPLES = "samples.tsv"
DATASET_LIPS = "lips.txt"

_META_KEYS = {
    "identities": int,
    "sequences": int,
    "frames": int,
    "vertices": int,
    "feature_dim": int,
    "feature_rate": float,
    "motion_rate": float,
    "seed": int,
}


def write_dataset_meta(directory, meta: dict) -> None:
    lines = [f"{key} = {meta[key]}" for key in _META_KEYS]
    atomic_write_text(Path(directory) / DATASET_META, "\n".join(lines) + "\n")


def read_dataset_meta(directory) -> dict:
    path = Path(directory) / DATASET_META
    if not path.exists():
        raise FormatError(f"{directory}: missing {DATASET_META}")
    values = parse_config_lines(path.read_text())
    unknown = sorted(set(values) - set(_META_KEYS))
    if unknown:
        raise FormatError(f"{path}: unknown keys {unknown}")
    missing = sorted(set(_META_KEYS) - set(values))
    if missing:
        raise FormatError(f"{path}: missing keys {missing}")
    return {key: _META_KEYS[key](values[key]) for key in _META_KEYS}


def read_lip_indices(path) -> list[int]:
    lines = Path(path).read_text().split()
    try:
        return [int(tok) for tok in lines]
    except ValueError as exc:
        raise FormatError(f"{path}: lip index file must hold integers ({exc})")
