"""Compact binary model container with a hard on-disk size budget.

Layout, all little-endian:

    header   magic "DMLP", format_version u16, flags u16 (0),
             input_dim u32, layer_count u32
    layers   per layer: out_dim u32, activation u8 (0 rectifier, 1 softmax),
             dropout_milli u16, reserved u8
    scaler   input_dim float32 minima, then input_dim float32 maxima
    params   per layer: row-major float32 weights, then float32 biases
    crc      CRC-32 (IEEE) over every preceding byte
    trailer  u32 length + UTF-8 JSON metadata, excluded from the checksum

Parameters are stored as float32: half the size of the training precision
and what makes the canonical network fit the 102,400-byte budget with
margin. Saving is atomic (temp file + rename) so a failed write never
leaves a partial model behind.
"""

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    BudgetError,
    DmlpError,
    ModelCorruptError,
    ModelFormatError,
    ModelStructureError,
    StorageError,
)
from .mlp import ActivationKind, DenseLayer, MlpTopology
from .scaling import MinMaxScaler
from .training import LABEL_ORDER, MlpModel, ModelMetadata

MAGIC = b"DMLP"
FORMAT_VERSION = 1
SIZE_BUDGET = 102_400

_HEADER = struct.Struct("<4sHHII")
_LAYER = struct.Struct("<IBHB")
_U32 = struct.Struct("<I")

_ACT_TO_CODE = {ActivationKind.RECTIFIER: 0, ActivationKind.SOFTMAX: 1}
_CODE_TO_ACT = {code: act for act, code in _ACT_TO_CODE.items()}


def encode(model: MlpModel) -> bytes:
    """Serialize a model to its canonical byte string."""
    topology = model.topology
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, 0, topology.input_dim, len(topology.layers))]
    for layer in topology.layers:
        code = _ACT_TO_CODE.get(layer.activation)
        if code is None:
            raise ModelStructureError(f"activation {layer.activation.value} has no wire code")
        parts.append(_LAYER.pack(layer.out_dim, code, round(layer.dropout_rate * 1000.0), 0))
    parts.append(np.asarray(model.scaler.mins, dtype="<f4").tobytes())
    parts.append(np.asarray(model.scaler.maxs, dtype="<f4").tobytes())
    for layer in topology.layers:
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    payload = b"".join(parts)
    meta = json.dumps(
        {"config_digest": model.metadata.config_digest, "labels": list(model.metadata.label_order)},
        separators=(",", ":"),
    ).encode("utf-8")
    return payload + _U32.pack(zlib.crc32(payload)) + _U32.pack(len(meta)) + meta


def save(model: MlpModel, path) -> int:
    """Write the model atomically; returns bytes written.

    Raises BudgetError before touching the filesystem when the encoding
    exceeds SIZE_BUDGET.
    """
    blob = encode(model)
    if len(blob) > SIZE_BUDGET:
        raise BudgetError(
            f"encoded model is {len(blob)} bytes, over the {SIZE_BUDGET}-byte budget"
        )
    path = Path(path)
    tmp_name = None
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp_name, path)
        tmp_name = None
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    finally:
        if tmp_name is not None and os.path.exists(tmp_name):
            os.unlink(tmp_name)
    return len(blob)


def decode(data: bytes, name: str = "<bytes>") -> MlpModel:
    """Parse and validate one model byte string."""
    if len(data) < _HEADER.size:
        raise ModelCorruptError(f"{name}: truncated header")
    magic, version, flags, input_dim, layer_count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"{name}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{name}: unsupported format version {version}")
    if flags != 0:
        raise ModelFormatError(f"{name}: unknown flags 0x{flags:04x}")

    descriptors_end = _HEADER.size + layer_count * _LAYER.size
    if len(data) < descriptors_end:
        raise ModelCorruptError(f"{name}: truncated layer descriptors")
    descriptors = [
        _LAYER.unpack_from(data, _HEADER.size + i * _LAYER.size) for i in range(layer_count)
    ]
    param_bytes = 0
    in_dim = input_dim
    for out_dim, _code, _milli, _reserved in descriptors:
        param_bytes += 4 * (out_dim * in_dim + out_dim)
        in_dim = out_dim
    payload_len = descriptors_end + 8 * input_dim + param_bytes
    if len(data) < payload_len + _U32.size:
        raise ModelCorruptError(f"{name}: truncated payload")
    (stored_crc,) = _U32.unpack_from(data, payload_len)
    if zlib.crc32(data[:payload_len]) != stored_crc:
        raise ModelCorruptError(f"{name}: checksum mismatch")

    trailer_off = payload_len + _U32.size
    if len(data) < trailer_off + _U32.size:
        raise ModelCorruptError(f"{name}: truncated metadata trailer")
    (meta_len,) = _U32.unpack_from(data, trailer_off)
    end = trailer_off + _U32.size + meta_len
    if len(data) < end:
        raise ModelCorruptError(f"{name}: truncated metadata trailer")
    if len(data) > end:
        raise ModelFormatError(f"{name}: {len(data) - end} unexpected bytes after the trailer")
    try:
        meta = json.loads(data[trailer_off + _U32.size : end].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise ModelFormatError(f"{name}: unreadable metadata trailer: {exc}") from exc
    if not isinstance(meta, dict) or not isinstance(meta.get("config_digest"), str):
        raise ModelFormatError(f"{name}: metadata trailer missing config_digest")
    if tuple(meta.get("labels", ())) != LABEL_ORDER:
        raise ModelStructureError(f"{name}: label order must be {list(LABEL_ORDER)}")

    offset = descriptors_end
    mins = np.frombuffer(data, dtype="<f4", count=input_dim, offset=offset).astype(np.float64)
    offset += 4 * input_dim
    maxs = np.frombuffer(data, dtype="<f4", count=input_dim, offset=offset).astype(np.float64)
    offset += 4 * input_dim
    try:
        scaler = MinMaxScaler(mins=mins, maxs=maxs)
        layers = []
        in_dim = input_dim
        for out_dim, code, milli, _reserved in descriptors:
            activation = _CODE_TO_ACT.get(code)
            if activation is None:
                raise ModelStructureError(f"unknown activation code {code}")
            if milli >= 1000:
                raise ModelStructureError(f"dropout {milli} out of range")
            weights = np.frombuffer(data, dtype="<f4", count=out_dim * in_dim, offset=offset)
            offset += 4 * out_dim * in_dim
            bias = np.frombuffer(data, dtype="<f4", count=out_dim, offset=offset)
            offset += 4 * out_dim
            layers.append(
                DenseLayer(
                    in_dim=in_dim,
                    out_dim=out_dim,
                    weights=weights.astype(np.float64).reshape(out_dim, in_dim),
                    bias=bias.astype(np.float64),
                    activation=activation,
                    dropout_rate=milli / 1000.0,
                )
            )
            in_dim = out_dim
        topology = MlpTopology(input_dim=input_dim, layers=layers)
        metadata = ModelMetadata(config_digest=meta["config_digest"])
        return MlpModel(topology=topology, scaler=scaler, metadata=metadata)
    except ModelStructureError:
        raise
    except DmlpError as exc:
        raise ModelStructureError(f"{name}: {exc}") from exc


def load(path) -> MlpModel:
    """Read and validate a model file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    return decode(data, name=str(path))


def inspect(path) -> str:
    """Human-readable summary of a model file."""
    model = load(path)
    size = Path(path).stat().st_size
    topology = model.topology
    arch = " -> ".join([str(topology.input_dim)] + [str(l.out_dim) for l in topology.layers])
    lines = [
        f"model file: {path}",
        f"file size: {size} bytes",
        f"size budget: {SIZE_BUDGET} bytes (headroom {SIZE_BUDGET - size})",
        f"format version: {FORMAT_VERSION}",
        f"architecture: {arch}",
        f"parameters: {topology.parameter_count}",
    ]
    for i, layer in enumerate(topology.layers):
        lines.append(
            f"  layer {i}: {layer.in_dim} -> {layer.out_dim}"
            f" {layer.activation.value}, dropout {layer.dropout_rate:.2f}"
        )
    lines.append("label order: notsleepy=0, sleepy=1")
    lines.append(f"config digest: {model.metadata.config_digest}")
    return "\n".join(lines)
