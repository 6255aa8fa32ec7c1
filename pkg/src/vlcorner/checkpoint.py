"""Binary model checkpoints.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"VLCKPT\\x00\\x01"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length L in bytes
    16      L     UTF-8 JSON header (sorted keys, no whitespace)
    16+L    ...   payload: raw little-endian arrays, C order, back to back

The header holds ``architecture`` (model descriptor), ``light_type``,
``meta`` (free-form run info), ``swa_count`` and ``arrays``: a list of
``{"name", "dtype", "shape", "offset", "nbytes"}`` with offsets relative to
the payload start. Model parameters are stored under ``param/<name>`` and the
SWA running average under ``swa/<name>`` (float64).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import StorageError
from .geometry import LightType
from .optim import SWAState

MAGIC = b"VLCKPT\x00\x01"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def save_checkpoint(path, params, light_type, architecture: dict,
                    swa: SWAState | None = None, meta: dict | None = None) -> None:
    arrays = [(f"param/{k}", v) for k, v in params.items()]
    if swa is not None:
        arrays += [(f"swa/{k}", v) for k, v in swa.average.items()]
    entries, blobs, offset = [], [], 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        blob = le.tobytes()
        entries.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "architecture": architecture,
        "light_type": LightType(light_type).value,
        "meta": meta or {},
        "swa_count": swa.count if swa is not None else 0,
        "arrays": entries,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    try:
        with open(path, "wb") as f:
            f.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
            f.write(hbytes)
            for blob in blobs:
                f.write(blob)
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Returns (params, light_type, header, swa_state)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _PREFIX.size:
        raise StorageError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise StorageError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise StorageError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    payload = memoryview(raw)[_PREFIX.size + hlen:]
    params, swa = {}, SWAState(count=header["swa_count"])
    for e in header["arrays"]:
        if e["offset"] + e["nbytes"] > len(payload):
            raise StorageError(f"{path}: array {e['name']} runs past end of file")
        arr = np.frombuffer(payload[e["offset"]:e["offset"] + e["nbytes"]], dtype=np.dtype(e["dtype"]))
        arr = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
        kind, name = e["name"].split("/", 1)
        (params if kind == "param" else swa.average)[name] = arr
    return params, LightType(header["light_type"]), header, swa
