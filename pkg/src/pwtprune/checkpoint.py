"""Checkpoint files: a JSON header followed by raw little-endian arrays.

Layout::

    b"PWTCKPT1" | uint64 LE header length | UTF-8 JSON header | array bytes

The header lists every array with its name, dtype, shape, byte offset
(relative to the start of the array section) and byte count.
"""
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PWTCKPT1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, network, meta=None):
    entries, chunks, offset = [], [], 0
    for name, arr in network.named_arrays():
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = le.tobytes()
        entries.append({
            "name": name,
            "dtype": le.dtype.str,
            "shape": list(le.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": "pwtprune-checkpoint",
        "version": 1,
        "step": network.step_count,
        "input_shape": list(network.input_shape),
        "num_classes": network.num_classes,
        "arrays": entries,
        **(meta or {}),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for raw in chunks:
            f.write(raw)
    tmp.replace(path)


def load_checkpoint(path):
    """Returns ``(header, {name: array})``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    base = 16 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(data):
            raise CheckpointError(f"{path}: array {e['name']} is truncated")
        arr = np.frombuffer(data, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=start)
        arrays[e["name"]] = arr.reshape(e["shape"])
    return header, arrays


def restore_checkpoint(path, network):
    """Copy a checkpoint's arrays into a network built with the same architecture."""
    header, arrays = load_checkpoint(path)
    for name, arr in network.named_arrays():
        if name not in arrays or arrays[name].shape != arr.shape:
            raise CheckpointError(f"{path}: array {name} missing or mis-shaped")
        arr[...] = arrays[name]
    network.step_count = header["step"]
    return header
