"""Versioned binary weights container.

Layout: 8-byte magic, uint32 format version, uint32 descriptor length, UTF-8
JSON architecture descriptor, then every tensor in descriptor order as
row-major little-endian float32.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import Arch, RefinerModel

MAGIC = b"TSDMREF\x00"
VERSION = 1


class WeightsFormatError(ValueError):
    pass


def save_weights(model, path):
    desc = json.dumps(model.arch.descriptor(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(desc)))
        fh.write(desc)
        for name in model.arch.param_shapes():
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())


def _arch_from_descriptor(desc):
    fields = {k: desc[k] for k in ("input_size", "fuse_channels", "pool_grid", "hidden", "outputs")}
    return Arch(widths=tuple(desc["widths"]), **fields)


def load_weights(path, expected_arch=None):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise WeightsFormatError("not a refiner weights file (bad magic)")
    version, n = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    try:
        desc = json.loads(blob[16:16 + n].decode("utf-8"))
        arch = _arch_from_descriptor(desc)
    except (ValueError, KeyError, TypeError) as exc:
        raise WeightsFormatError(f"bad architecture descriptor: {exc}") from None
    shapes = arch.param_shapes()
    if desc.get("layers") != [[k, list(v)] for k, v in shapes.items()]:
        raise WeightsFormatError("layer list does not match the architecture descriptor")
    if expected_arch is not None and expected_arch.descriptor() != arch.descriptor():
        raise WeightsFormatError("weights were saved for a different architecture")
    offset = 16 + n
    params = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        chunk = blob[offset:offset + 4 * count]
        if len(chunk) != 4 * count:
            raise WeightsFormatError(f"truncated tensor {name}")
        params[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(shape)
        offset += 4 * count
    if offset != len(blob):
        raise WeightsFormatError("trailing bytes after the last tensor")
    return RefinerModel(arch, params)
