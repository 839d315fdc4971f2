"""Deterministic file formats.

All floating-point text output goes through a fixed 17-significant-digit
format so that identical values always serialize to identical bytes, and
binary formats are explicitly little-endian float64 with versioned headers.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeMismatchError
from .etf_geometry import EtfPrototypes

DUMP_MAGIC = b"NCFD"
MODEL_MAGIC = b"NCFM"
FORMAT_VERSION = 1


def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips any float64 exactly."""
    return format(float(x), ".17g")


def _dump_json(obj, out: list, level: int, indent: int) -> None:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {type(key)}")
            out.append(pad + json.dumps(key) + ": ")
            _dump_json(val, out, level + 1, indent)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(close_pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n")
        for i, val in enumerate(items):
            out.append(pad)
            _dump_json(val, out, level + 1, indent)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(close_pad + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj)} to JSON")


def dumps_json(obj, indent: int = 2) -> str:
    out: list = []
    _dump_json(obj, out, 0, indent)
    out.append("\n")
    return "".join(out)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(csv_cell(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_etf_json(path, protos: EtfPrototypes) -> None:
    """ETF interchange format: dim/num_classes/seed plus row-major columns."""
    write_json(
        path,
        {
            "dim": protos.dim,
            "num_classes": protos.num_classes,
            "seed": protos.seed,
            "columns": protos.columns.reshape(-1),
        },
    )


def read_etf_json(path) -> EtfPrototypes:
    obj = read_json(path)
    dim, num_classes = int(obj["dim"]), int(obj["num_classes"])
    columns = np.asarray(obj["columns"], dtype=np.float64)
    if columns.size != dim * num_classes:
        raise ShapeMismatchError(
            f"expected {dim * num_classes} column values, got {columns.size}"
        )
    columns = columns.reshape(dim, num_classes)
    columns.flags.writeable = False
    return EtfPrototypes(
        dim=dim, num_classes=num_classes, columns=columns, seed=int(obj["seed"])
    )


def write_feature_records(path, vectors, labels, sessions, splits) -> None:
    """Binary feature-dump: NCFD header, then {label, session, split, vector} records."""
    vectors = np.ascontiguousarray(vectors, dtype="<f8")
    n, dim = vectors.shape
    labels = np.asarray(labels)
    sessions = np.asarray(sessions)
    splits = np.asarray(splits)
    if not (len(labels) == len(sessions) == len(splits) == n):
        raise ShapeMismatchError("record arrays must share their leading dimension")
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, dim, n))
        for i in range(n):
            fh.write(struct.pack("<IIB", int(labels[i]), int(sessions[i]), int(splits[i])))
            fh.write(vectors[i].tobytes())


def read_feature_records(path):
    """Inverse of write_feature_records; returns (vectors, labels, sessions, splits)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DUMP_MAGIC:
            raise ValueError(f"not a feature dump (magic {magic!r})")
        version, dim, n = struct.unpack("<IIQ", fh.read(16))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        vectors = np.empty((n, dim), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        sessions = np.empty(n, dtype=np.int64)
        splits = np.empty(n, dtype=np.uint8)
        rec = struct.Struct("<IIB")
        for i in range(n):
            labels[i], sessions[i], splits[i] = rec.unpack(fh.read(rec.size))
            vectors[i] = np.frombuffer(fh.read(8 * dim), dtype="<f8")
    return vectors, labels, sessions, splits


def write_arrays(path, arrays: dict) -> None:
    """Checkpoint format: NCFM header, then named little-endian float64 arrays."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_arrays(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        version, count = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            arrays[name] = data.astype(np.float64)
    return arrays
