"""Versioned binary checkpoint.

Layout: ``MAGIC | u32 version | u64 manifest length | manifest JSON |
float64 little-endian payload``. The manifest lists every tensor with its
shape and payload offset and carries the config, iteration counter, optimizer
step and generator state. Encoding is canonical, so save -> load -> save
reproduces the file byte for byte.
"""

import json
import struct

import numpy as np

MAGIC = b"GLSTMCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(manifest, tensors):
    entries, payload, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        payload.append(data)
        offset += len(data)
    body = dict(manifest, tensors=entries)
    header = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return b"".join([MAGIC, struct.pack("<IQ", VERSION, len(header)), header, *payload])


def decode(blob):
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    pos = len(MAGIC)
    version, n = struct.unpack_from("<IQ", blob, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 12
    manifest = json.loads(blob[pos:pos + n])
    base = pos + n
    tensors = {}
    for e in manifest.pop("tensors"):
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        if start + 8 * count > len(blob):
            raise CheckpointError(f"tensor {e['name']} runs past the end of the file")
        tensors[e["name"]] = np.frombuffer(blob, dtype="<f8", count=count,
                                           offset=start).reshape(e["shape"]).astype(np.float64)
    return manifest, tensors


def save(path, manifest, tensors):
    with open(path, "wb") as f:
        f.write(encode(manifest, tensors))


def load(path):
    with open(path, "rb") as f:
        return decode(f.read())
