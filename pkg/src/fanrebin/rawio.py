"""Raw tensor files: ``<stem>.bin`` little-endian payload + ``<stem>.json`` sidecar.

All writes go to a temporary file in the target directory and are moved into
place with :func:`os.replace`, so readers never observe partial files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__

DTYPES = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}
ROLES = ("image", "sinogram", "fanprojection", "filter")


class CorruptFile(ValueError):
    """Sidecar and payload disagree, or the sidecar is malformed."""


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def atomic_write_json(path, obj):
    atomic_write_bytes(path, dumps_json(obj).encode())


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode())


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def paths_for(stem):
    stem = Path(stem)
    return stem.with_name(stem.name + ".bin"), stem.with_name(stem.name + ".json")


def write_tensor(stem, array, role, geometry=None, seed=None, dtype="f64le", extra=None):
    """Write ``array`` row-major; returns the (payload, sidecar) paths."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    if dtype not in DTYPES:
        raise ValueError(f"unknown dtype {dtype!r}")
    array = np.ascontiguousarray(array, dtype=DTYPES[dtype])
    payload, sidecar = paths_for(stem)
    meta = {
        "dtype": dtype,
        "shape": list(array.shape),
        "role": role,
        "geometry": geometry or {},
        "seed": seed,
        "creator": f"fanrebin {__version__}",
    }
    if extra:
        meta.update(extra)
    atomic_write_bytes(payload, array.tobytes(order="C"))
    atomic_write_json(sidecar, meta)
    return payload, sidecar


def read_tensor(stem):
    """Return ``(array, sidecar)``; raises :class:`CorruptFile` on any inconsistency."""
    payload, sidecar = paths_for(stem)
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{sidecar}: invalid JSON ({exc})") from exc
    for key in ("dtype", "shape", "role"):
        if key not in meta:
            raise CorruptFile(f"{sidecar}: missing key {key!r}")
    if meta["dtype"] not in DTYPES:
        raise CorruptFile(f"{sidecar}: unknown dtype {meta['dtype']!r}")
    shape = tuple(int(n) for n in meta["shape"])
    if any(n < 0 for n in shape):
        raise CorruptFile(f"{sidecar}: negative dimension in shape {shape}")
    dtype = DTYPES[meta["dtype"]]
    raw = payload.read_bytes()
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(raw) != expected:
        raise CorruptFile(f"{payload}: {len(raw)} bytes, sidecar implies {expected}")
    array = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(np.float64)
    return array, meta
