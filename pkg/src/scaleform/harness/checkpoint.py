"""FFCK checkpoint container.

Layout (little-endian)::

    b"FFCK" | u32 version | u64 iteration | u32 meta_len | meta (UTF-8 JSON)
    | u32 n_entries | n x (u16 name_len | name | u64 blob_len | FTNS blob)

Entry names are ``param/<name>``, ``adam.m/<name>`` and ``adam.v/<name>``.
The JSON metadata carries the configs, the Adam step count and the RNG
state (the seed and the next iteration index).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scaleform.errors import FormatError
from scaleform.numerics import ftns

MAGIC = b"FFCK"
VERSION = 1


@dataclass
class Checkpoint:
    iteration: int
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def dumps(ck: Checkpoint) -> bytes:
    buf = io.BytesIO()
    meta = json.dumps(ck.meta, sort_keys=True).encode()
    buf.write(MAGIC + struct.pack("<IQI", VERSION, ck.iteration, len(meta)) + meta)
    entries = [(f"param/{k}", v) for k, v in ck.params.items()]
    entries += [(f"adam.m/{k}", v) for k, v in ck.adam_m.items()]
    entries += [(f"adam.v/{k}", v) for k, v in ck.adam_v.items()]
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        raw = name.encode()
        blob = ftns.dumps(arr)
        buf.write(struct.pack("<H", len(raw)) + raw + struct.pack("<Q", len(blob)) + blob)
    return buf.getvalue()


def loads(data: bytes) -> Checkpoint:
    stream = io.BytesIO(data)
    if stream.read(4) != MAGIC:
        raise FormatError("not an FFCK checkpoint")
    version, iteration, meta_len = struct.unpack("<IQI", stream.read(16))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    meta = json.loads(stream.read(meta_len).decode())
    (count,) = struct.unpack("<I", stream.read(4))
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam.m": {}, "adam.v": {}}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", stream.read(2))
        name = stream.read(name_len).decode()
        (blob_len,) = struct.unpack("<Q", stream.read(8))
        kind, _, key = name.partition("/")
        if kind not in groups:
            raise FormatError(f"unknown checkpoint entry {name!r}")
        groups[kind][key] = ftns.loads(stream.read(blob_len))
    return Checkpoint(iteration, groups["param"], groups["adam.m"], groups["adam.v"], meta)


def save(path, ck: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(ck))
    tmp.replace(path)


def load(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
