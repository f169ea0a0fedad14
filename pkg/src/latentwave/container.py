"""LWC1: a bit-exact container for named float arrays.

Layout: 4-byte magic ``LWC1``, an unsigned little-endian 64-bit header
length, a UTF-8 JSON header, then little-endian IEEE-754 payload sections,
each starting on a 64-byte boundary (gaps are zero filled).  The header
lists every array as {name, dtype in {f32, f64}, shape, offset, length}
with offsets absolute from the start of the file, plus a free-form
``metadata`` map.

Readers validate everything and refuse to guess: wrong magic, malformed
JSON, inconsistent shapes/lengths, overlapping or misaligned sections all
raise :class:`ContainerError`.  Writing is deterministic: arrays are laid
out in sorted name order and the JSON header uses sorted keys, so equal
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ContainerError

MAGIC = b"LWC1"
ALIGN = 64
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype("<f4"): "f32", np.dtype("<f8"): "f64"}


def _align_up(offset: int) -> int:
    return (offset + ALIGN - 1) // ALIGN * ALIGN


def write_container(path, arrays: dict, metadata: dict | None = None):
    """Write named arrays plus metadata; float32/float64 only."""
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype == np.float32:
            arr = arr.astype("<f4", copy=False)
        elif arr.dtype == np.float64:
            arr = arr.astype("<f8", copy=False)
        else:
            raise ContainerError(f"array {name!r} has unsupported dtype {arr.dtype}; "
                                 "cast to float32 or float64 first")
        blobs.append(arr)
        entries.append({"name": name, "dtype": _DTYPE_NAMES[arr.dtype],
                        "shape": list(arr.shape), "offset": 0, "length": arr.nbytes})

    # two-pass layout: the header length depends on the offsets' digits, so
    # fix the header size with placeholder offsets first, then patch
    def render(hdr_entries):
        doc = {"arrays": hdr_entries, "metadata": metadata or {}}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    header = render(entries)
    while True:
        payload_start = _align_up(len(MAGIC) + 8 + len(header))
        offset = payload_start
        for e in entries:
            e["offset"] = offset
            offset = _align_up(offset + e["length"])
        new_header = render(entries)
        if len(new_header) == len(header):
            header = new_header
            break
        header = new_header

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        pos = len(MAGIC) + 8 + len(header)
        for e, arr in zip(entries, blobs):
            fh.write(b"\x00" * (e["offset"] - pos))
            fh.write(arr.tobytes())
            pos = e["offset"] + e["length"]
        fh.write(b"\x00" * (_align_up(pos) - pos))


def read_container(path):
    """Read a container; returns (arrays dict, metadata dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8:
        raise ContainerError(f"{path}: truncated before header")
    if raw[:4] != MAGIC:
        raise ContainerError(f"{path}: unknown magic {raw[:4]!r}")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    if 12 + header_len > len(raw):
        raise ContainerError(f"{path}: header length {header_len} exceeds file size")
    try:
        doc = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(doc, dict) or "arrays" not in doc:
        raise ContainerError(f"{path}: header missing 'arrays'")
    entries = doc["arrays"]
    arrays = {}
    spans = []
    for e in entries:
        try:
            name = e["name"]
            dtype = _DTYPES[e["dtype"]]
            shape = tuple(int(s) for s in e["shape"])
            offset = int(e["offset"])
            length = int(e["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"{path}: malformed array entry {e!r}") from exc
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if expected != length:
            raise ContainerError(
                f"{path}: array {name!r} length {length} inconsistent with shape {shape}")
        if offset % ALIGN:
            raise ContainerError(f"{path}: array {name!r} offset {offset} not {ALIGN}-byte aligned")
        if offset + length > len(raw):
            raise ContainerError(f"{path}: array {name!r} extends past end of file")
        spans.append((offset, offset + length, name))
        arrays[name] = np.frombuffer(raw, dtype=dtype, count=length // dtype.itemsize,
                                     offset=offset).reshape(shape).copy()
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise ContainerError(f"{path}: arrays {n0!r} and {n1!r} overlap")
    return arrays, doc.get("metadata", {})
