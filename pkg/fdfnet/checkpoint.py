"""
Versioned checkpoint container.

Layout (all integers little-endian)::

    magic    8 bytes   b"FDFCKPT\\0"
    version  u32       1
    hlen     u32       length of the JSON header in bytes
    header   hlen      UTF-8 JSON: stage, fingerprint, config, metadata and a
                       tensor table of {name, kind, shape, offset}
    payload            float32 tensors back to back, offsets relative to here

Tensor names are the parameter names prefixed with the owning network
(``fme.enc1.conv.weight``). ``kind`` is ``param``, ``buffer`` or ``optimizer``.
"""
import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import CheckpointError
from .fileio import atomic_write_bytes
from .optim import RmspropState
from .params import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"FDFCKPT\0"
VERSION = 1
STAGES = ("fme", "dsr", "full")
_PREAMBLE = struct.Struct("<8sII")
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    stage: str
    fingerprint: str
    params: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    buffers: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    optimizer: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    metadata: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: int = VERSION

    def __post_init__(self):
        if self.stage not in STAGES:
            raise CheckpointError(f"unknown checkpoint stage {self.stage!r}")

    def nets(self):
        return sorted({name.split(".", 1)[0] for name in self.params})

    def parameter_count(self, net: str = "") -> int:
        prefix = f"{net}." if net else ""
        return sum(v.size for n, v in self.params.items() if n.startswith(prefix))


def add_store(ckpt: Checkpoint, net: str, store: ParamStore) -> None:
    params, buffers = store.state()
    ckpt.params.update((f"{net}.{n}", v) for n, v in params.items())
    ckpt.buffers.update((f"{net}.{n}", v) for n, v in buffers.items())


def add_optimizer(ckpt: Checkpoint, net: str, state: RmspropState) -> None:
    ckpt.optimizer.update((f"{net}.{n}", v) for n, v in state.square_avg.items())
    ckpt.metadata["optimizer"] = {
        "net": net,
        "learning_rate": state.learning_rate,
        "rho": state.rho,
        "eps": state.eps,
        "steps": state.steps,
    }


def restore_store(ckpt: Checkpoint, net: str, store: ParamStore) -> ParamStore:
    prefix = f"{net}."
    params = OrderedDict((n[len(prefix):], v) for n, v in ckpt.params.items() if n.startswith(prefix))
    buffers = OrderedDict((n[len(prefix):], v) for n, v in ckpt.buffers.items() if n.startswith(prefix))
    if not params:
        raise CheckpointError(f"checkpoint (stage {ckpt.stage}) holds no {net} parameters")
    try:
        store.load_state(params, buffers)
    except Exception as e:
        raise CheckpointError(f"{net} parameters do not fit the configured network: {e}")
    return store


def restore_optimizer(ckpt: Checkpoint) -> Optional[RmspropState]:
    info = ckpt.metadata.get("optimizer")
    if info is None:
        return None
    prefix = f"{info['net']}."
    state = RmspropState(info["learning_rate"], info["rho"], info["eps"], steps=info["steps"])
    state.square_avg = OrderedDict(
        (n[len(prefix):], v.copy()) for n, v in ckpt.optimizer.items() if n.startswith(prefix)
    )
    return state


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    table = []
    chunks = []
    offset = 0
    for kind, tensors in (("param", ckpt.params), ("buffer", ckpt.buffers), ("optimizer", ckpt.optimizer)):
        for name, value in tensors.items():
            payload = np.ascontiguousarray(value, dtype=_DTYPE).tobytes()
            table.append({"name": name, "kind": kind, "shape": list(np.shape(value)), "offset": offset})
            chunks.append(payload)
            offset += len(payload)
    header = json.dumps({
        "stage": ckpt.stage,
        "fingerprint": ckpt.fingerprint,
        "config": ckpt.config,
        "metadata": ckpt.metadata,
        "tensors": table,
    }, sort_keys=True).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, ckpt.version, len(header)) + header + b"".join(chunks)


_HEADER_FIELDS = {"stage": str, "fingerprint": str, "metadata": dict, "config": dict, "tensors": list}
_KINDS = ("param", "buffer", "optimizer")


def _check_header(header, source):
    if not isinstance(header, dict):
        raise CheckpointError(f"{source}: header is not a JSON object")
    for key, kind in _HEADER_FIELDS.items():
        if key not in header:
            raise CheckpointError(f"{source}: header is missing {key!r}")
        if not isinstance(header[key], kind):
            raise CheckpointError(f"{source}: header field {key!r} must be a {kind.__name__}")
    for i, entry in enumerate(header["tensors"]):
        if not isinstance(entry, dict) or not {"name", "kind", "shape", "offset"} <= entry.keys():
            raise CheckpointError(f"{source}: tensor entry {i} needs name, kind, shape and offset")
        if not isinstance(entry["name"], str) or entry["kind"] not in _KINDS:
            raise CheckpointError(f"{source}: tensor entry {i} has a bad name or kind {entry['kind']!r}")
        shape, offset = entry["shape"], entry["offset"]
        if not isinstance(shape, list) or not all(type(d) is int and d >= 0 for d in shape):
            raise CheckpointError(f"{source}: tensor {entry['name']} has a bad shape {shape!r}")
        if type(offset) is not int or offset < 0:
            raise CheckpointError(f"{source}: tensor {entry['name']} has a bad offset {offset!r}")


def decode_checkpoint(raw: bytes, source="<bytes>") -> Checkpoint:
    if len(raw) < _PREAMBLE.size:
        raise CheckpointError(f"{source}: truncated preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{source}: not an fdfnet checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version} (expected {VERSION})")
    start = _PREAMBLE.size
    if start + hlen > len(raw):
        raise CheckpointError(f"{source}: truncated header")
    try:
        header = json.loads(raw[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: corrupt header ({e})")
    _check_header(header, source)

    payload = memoryview(raw)[start + hlen :]
    groups = {"param": OrderedDict(), "buffer": OrderedDict(), "optimizer": OrderedDict()}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = entry["offset"] + count * _DTYPE.itemsize
        if end > len(payload):
            raise CheckpointError(f"{source}: payload of {entry['name']} is truncated")
        value = np.frombuffer(payload[entry["offset"] : end], dtype=_DTYPE).reshape(shape)
        groups[entry["kind"]][entry["name"]] = value.astype(np.float32)
    return Checkpoint(header["stage"], header["fingerprint"], groups["param"], groups["buffer"],
                      groups["optimizer"], header["metadata"], header["config"], version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(path, encode_checkpoint(ckpt))
    logger.info("wrote %s checkpoint %s (%d parameters)", ckpt.stage, path, ckpt.parameter_count())


def load_checkpoint(path, expected_fingerprint: Optional[str] = None,
                    allow_mismatch: bool = False) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")
    ckpt = decode_checkpoint(raw, path)
    if expected_fingerprint:
        check_fingerprint(ckpt, expected_fingerprint, allow_mismatch, path)
    return ckpt


def check_fingerprint(ckpt: Checkpoint, expected: str, allow_mismatch: bool = False, source="<checkpoint>") -> None:
    if ckpt.fingerprint == expected:
        return
    if not allow_mismatch:
        raise CheckpointError(f"{source}: config fingerprint {ckpt.fingerprint} does not match {expected}")
    logger.warning("%s: fingerprint mismatch ignored", source)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
