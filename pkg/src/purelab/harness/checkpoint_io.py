"""Binary checkpoint format for model parameters.

Layout (all little-endian):

    magic "DPUR" | version u16 | record count u32
    per record: name_len u16 | name utf-8 | rank u8 | dims u32[rank]
                | payload float32[] | crc32 u32 (of the payload bytes)
    trailer: sha256 of every preceding byte

Loading verifies magic, version, each record's crc (naming the failing
record) and the trailing content hash.  Round trips are value-exact in
narrow precision.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import IntegrityError
from ..models.nets import ClassifierParams, DenoiserParams

MAGIC = b"DPUR"
VERSION = 1

_ACTIVATION_CODES = {"tanh": 0, "silu": 1}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}


def save_tensors(records: dict[str, np.ndarray], path) -> str:
    """Write named tensors; returns the trailing content hash (hex)."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HI", VERSION, len(records))
    for name, arr in records.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        out += struct.pack("<H", len(name_b))
        out += name_b
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload = arr.tobytes()
        out += payload
        out += struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    digest = hashlib.sha256(bytes(out)).digest()
    out += digest
    Path(path).write_bytes(bytes(out))
    return digest.hex()


def file_hash(path) -> str:
    """The stored trailing content hash of a checkpoint file."""
    data = Path(path).read_bytes()
    if len(data) < 32:
        raise IntegrityError(f"{path}: truncated checkpoint")
    return data[-32:].hex()


def load_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 6 + 32:
        raise IntegrityError(f"{path}: truncated checkpoint")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError(f"{path}: content hash mismatch")
    if body[:4] != MAGIC:
        raise IntegrityError(f"{path}: bad magic {body[:4]!r}")
    version, count = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise IntegrityError(f"{path}: unsupported version {version}")
    offset = 10
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, offset)
        offset += 2
        name = body[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", body, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", body, offset)
        offset += 4 * rank
        n_bytes = 4 * int(np.prod(dims)) if rank else 4
        payload = body[offset : offset + n_bytes]
        offset += n_bytes
        (crc,) = struct.unpack_from("<I", body, offset)
        offset += 4
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise IntegrityError(f"{path}: crc mismatch in record {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims if rank else ())
        records[name] = arr.copy()
    return records


def _scalar(records: dict, name: str) -> float:
    return float(records[name].reshape(-1)[0])


def _layers_to_records(arrays) -> dict[str, np.ndarray]:
    out = {}
    for i in range(len(arrays) // 2):
        out[f"layer{i}.weight"] = arrays[2 * i]
        out[f"layer{i}.bias"] = arrays[2 * i + 1]
    return out


def _records_to_layers(records) -> list[np.ndarray]:
    arrays = []
    i = 0
    while f"layer{i}.weight" in records:
        arrays.append(records[f"layer{i}.weight"])
        arrays.append(records[f"layer{i}.bias"])
        i += 1
    return arrays


def save_denoiser(params: DenoiserParams, path) -> str:
    records = {
        "meta.kind": np.array(0.0),
        "meta.image_dim": np.array(float(params.image_dim)),
        "meta.hidden": np.asarray(params.hidden, dtype=np.float32),
        "meta.t_max": np.array(float(params.t_max)),
        "meta.time_dim": np.array(float(params.time_dim)),
        "meta.activation": np.array(float(_ACTIVATION_CODES[params.activation])),
    }
    records.update(_layers_to_records(params.arrays))
    return save_tensors(records, path)


def load_denoiser(path) -> DenoiserParams:
    records = load_tensors(path)
    if int(_scalar(records, "meta.kind")) != 0:
        raise IntegrityError(f"{path}: not a denoiser checkpoint")
    params = DenoiserParams(
        image_dim=int(_scalar(records, "meta.image_dim")),
        hidden=tuple(int(h) for h in records["meta.hidden"]),
        t_max=int(_scalar(records, "meta.t_max")),
        time_dim=int(_scalar(records, "meta.time_dim")),
        activation=_ACTIVATION_NAMES[int(_scalar(records, "meta.activation"))],
    )
    params.arrays = _records_to_layers(records)
    return params


def save_classifier(params: ClassifierParams, path) -> str:
    records = {
        "meta.kind": np.array(1.0),
        "meta.image_dim": np.array(float(params.image_dim)),
        "meta.hidden": np.asarray(params.hidden, dtype=np.float32),
        "meta.classes": np.array(float(params.classes)),
    }
    records.update(_layers_to_records(params.arrays))
    return save_tensors(records, path)


def load_classifier(path) -> ClassifierParams:
    records = load_tensors(path)
    if int(_scalar(records, "meta.kind")) != 1:
        raise IntegrityError(f"{path}: not a classifier checkpoint")
    params = ClassifierParams(
        image_dim=int(_scalar(records, "meta.image_dim")),
        hidden=tuple(int(h) for h in records["meta.hidden"]),
        classes=int(_scalar(records, "meta.classes")),
    )
    params.arrays = _records_to_layers(records)
    return params
