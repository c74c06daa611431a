"""DLT1 binary container.

Layout: 8 magic bytes ``b"DLCFMv1\\n"``, one UTF-8 JSON header line ending in
``\\n``, then raw little-endian float64 payloads concatenated in header order.
The header is ``{"arrays": [{"name", "shape", "dtype": "f64"}, ...], "meta": {...}}``.
"""

import json

import numpy as np

MAGIC = b"DLCFMv1\n"


class ContainerError(Exception):
    """Base class for malformed DLT1 files."""


class BadMagicError(ContainerError):
    pass


class HeaderError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class PayloadSizeError(ContainerError):
    pass


def dumps(arrays, meta=None):
    entries, payloads = [], []
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f8")   # tobytes() is C-order; keeps 0-d shapes
        entries.append({"name": name, "shape": list(a.shape), "dtype": "f64"})
        payloads.append(a.tobytes())
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True,
                        separators=(",", ":"))
    return MAGIC + header.encode("utf-8") + b"\n" + b"".join(payloads)


def loads(buf):
    """Parse a DLT1 byte string into ``(arrays, meta)``."""
    if buf[:len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic: not a DLT1 container")
    end = buf.find(b"\n", len(MAGIC))
    if end < 0:
        raise HeaderError("header line is not terminated")
    try:
        header = json.loads(buf[len(MAGIC):end].decode("utf-8"))
        entries = header["arrays"]
        meta = header.get("meta", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise HeaderError(f"malformed header: {exc}") from None
    offset = end + 1
    arrays = {}
    for e in entries:
        if e.get("dtype") != "f64":
            raise HeaderError(f"unsupported dtype {e.get('dtype')!r} for {e.get('name')!r}")
        shape = tuple(int(s) for s in e["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(buf):
            raise TruncatedPayloadError(
                f"payload for {e['name']!r} truncated: need {nbytes} bytes at offset "
                f"{offset}, file has {len(buf)}")
        arrays[e["name"]] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8,
                                          offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(buf):
        raise PayloadSizeError(
            f"header declares {offset - end - 1} payload bytes but file carries "
            f"{len(buf) - end - 1}")
    return arrays, meta


def write(path, arrays, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(arrays, meta))


def read(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
