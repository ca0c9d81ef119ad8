"""Binary containers for cached operators and checkpoints.

File layout (all integers little-endian, all array data little-endian float64)::

    magic      4 bytes   b"VPLB"
    version    uint32    FORMAT_VERSION
    kind_len   uint32    length of the kind tag
    kind       bytes     ASCII tag, e.g. "collision" or "checkpoint"
    meta_len   uint32    length of the metadata block
    meta       bytes     UTF-8 JSON object (sorted keys)
    n_arrays   uint32
    then per array:
        name_len uint32, name bytes (ASCII)
        ndim     uint32, shape ndim x uint64
        data     prod(shape) x float64

Complex arrays are stored as two real arrays ``<name>.re`` / ``<name>.im``.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VPLB"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _w32(fh, x: int) -> None:
    fh.write(struct.pack("<I", x))


def _r32(fh) -> int:
    b = fh.read(4)
    if len(b) != 4:
        raise FormatError("truncated file")
    return struct.unpack("<I", b)[0]


def write_container(path, kind: str, meta: dict, arrays: dict) -> None:
    """Write ``arrays`` (name -> ndarray) atomically to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            flat[name + ".re"] = arr.real
            flat[name + ".im"] = arr.imag
        else:
            flat[name] = arr
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        _w32(fh, FORMAT_VERSION)
        k = kind.encode("ascii")
        _w32(fh, len(k))
        fh.write(k)
        m = json.dumps(meta, sort_keys=True).encode("utf-8")
        _w32(fh, len(m))
        fh.write(m)
        _w32(fh, len(flat))
        for name, arr in flat.items():
            nb = name.encode("ascii")
            _w32(fh, len(nb))
            fh.write(nb)
            _w32(fh, arr.ndim)
            fh.write(struct.pack("<" + "Q" * arr.ndim, *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_container(path, kind: str | None = None) -> tuple[dict, dict]:
    """Return ``(meta, arrays)``; complex arrays are reassembled."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FormatError(f"{path}: bad magic")
        version = _r32(fh)
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        tag = fh.read(_r32(fh)).decode("ascii")
        if kind is not None and tag != kind:
            raise FormatError(f"{path}: expected kind {kind!r}, found {tag!r}")
        meta = json.loads(fh.read(_r32(fh)).decode("utf-8"))
        flat = {}
        for _ in range(_r32(fh)):
            name = fh.read(_r32(fh)).decode("ascii")
            ndim = _r32(fh)
            shape = struct.unpack("<" + "Q" * ndim, fh.read(8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            if data.size != count:
                raise FormatError(f"{path}: truncated array {name}")
            flat[name] = data.reshape(shape).astype(float)
    arrays = {}
    for name, arr in flat.items():
        if name.endswith(".re"):
            base = name[:-3]
            arrays[base] = arr + 1j * flat[base + ".im"]
        elif not name.endswith(".im"):
            arrays[name] = arr
    return meta, arrays


def cache_key(**params) -> str:
    text = json.dumps(params, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def default_cache_dir() -> Path:
    env = os.environ.get("VPLSOLVER_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "vplsolver"
