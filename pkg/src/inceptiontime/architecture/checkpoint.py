"""Single-file model checkpoints.

Layout::

    b"INCTCKPT"                 8-byte magic
    uint64 little-endian        header length H
    H bytes                     UTF-8 JSON header
    payload                     raw little-endian IEEE-754 values in header order

The header carries the schema version, the full network config, the tensor
table (name, kind, shape, offset in elements) and a SHA-256 of the payload.
Payload values are float32 unless the network was built in float64, in which
case the header says ``"dtype": "float64"`` and values are 8 bytes wide.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..numerics import BatchNormState
from .config import NetworkConfig
from .network import Network, norm_layer_names, parameter_shapes

MAGIC = b"INCTCKPT"
SCHEMA_VERSION = 1
_WIRE = {"float32": "<f4", "float64": "<f8"}


def _tensor_table(net: Network):
    for name, arr in net.params.items():
        yield name, "param", arr
    for name in norm_layer_names(net.config):
        st = net.norm_states[name]
        yield f"{name}.running_mean", "buffer", st.running_mean
        yield f"{name}.running_var", "buffer", st.running_var


def to_bytes(net: Network) -> bytes:
    dtype = net.dtype.name
    if dtype not in _WIRE:
        raise CheckpointError(f"unsupported dtype {dtype}")
    wire = np.dtype(_WIRE[dtype])
    table, chunks, offset = [], [], 0
    for name, kind, arr in _tensor_table(net):
        table.append({"name": name, "kind": kind, "shape": list(arr.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(arr, dtype=wire).tobytes())
        offset += arr.size
    payload = b"".join(chunks)
    norm = next(iter(net.norm_states.values()))
    header = {
        "schema_version": SCHEMA_VERSION,
        "config": net.config.to_dict(),
        "dtype": dtype,
        "norm": {"momentum": norm.momentum, "eps": norm.eps},
        "tensors": table,
        "payload_bytes": len(payload),
        "checksum": "sha256:" + hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(blob)) + blob + payload


def read_header(data: bytes) -> tuple[dict, bytes]:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + hlen:
        raise CheckpointError("checkpoint truncated inside header")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"checkpoint schema version {version} is not supported "
                              f"(expected {SCHEMA_VERSION})")
    return header, data[16 + hlen:]


def from_bytes(data: bytes) -> Network:
    header, payload = read_header(data)
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"payload is {len(payload)} bytes, header says "
                              f"{header['payload_bytes']} (truncated file?)")
    digest = "sha256:" + hashlib.sha256(payload).hexdigest()
    if digest != header["checksum"]:
        raise CheckpointError("checkpoint checksum mismatch")
    dtype = header["dtype"]
    if dtype not in _WIRE:
        raise CheckpointError(f"unsupported payload dtype {dtype!r}")
    values = np.frombuffer(payload, dtype=_WIRE[dtype]).astype(dtype)
    config = NetworkConfig.from_dict(header["config"])
    expected = parameter_shapes(config)
    tensors = {}
    for entry in header["tensors"]:
        size = int(np.prod(entry["shape"]))
        start = entry["offset"]
        tensors[entry["name"]] = values[start:start + size].reshape(entry["shape"]).copy()
    params: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape in expected.items():
        arr = tensors.get(name)
        if arr is None or arr.shape != tuple(shape):
            raise CheckpointError(f"parameter {name} missing or misshapen in checkpoint")
        params[name] = arr
    norm = header.get("norm", {})
    states = {}
    for name in norm_layer_names(config):
        try:
            states[name] = BatchNormState(tensors[f"{name}.running_mean"],
                                          tensors[f"{name}.running_var"],
                                          norm.get("momentum", 0.9), norm.get("eps", 1e-3))
        except KeyError as exc:
            raise CheckpointError(f"normalization statistics missing: {exc}") from exc
    return Network(config, params, states, dtype)


def save_model(net: Network, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(net))
    return path


def load_model(path) -> Network:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"model file not found: {path}")
    return from_bytes(path.read_bytes())


def read_model_header(path) -> dict:
    return read_header(Path(path).read_bytes())[0]
