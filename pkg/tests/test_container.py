import struct

import numpy as np
import pytest

from latentwave import container as ct
from latentwave.errors import ContainerError


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "b/second": rng.standard_normal((3, 4)).astype(np.float32),
        "a/first": rng.standard_normal((2, 2, 2)),
    }
    path = tmp_path / "t.lwc"
    ct.write_container(path, arrays, {"note": "x", "k": 3})
    got, meta = ct.read_container(path)
    assert meta == {"note": "x", "k": 3}
    assert set(got) == set(arrays)
    for name in arrays:
        assert got[name].dtype == arrays[name].dtype
        np.testing.assert_array_equal(got[name], arrays[name])


def test_deterministic_bytes(tmp_path):
    arr = {"x": np.arange(10.0), "y": np.ones((2, 5), dtype=np.float32)}
    p1, p2 = tmp_path / "a.lwc", tmp_path / "b.lwc"
    ct.write_container(p1, arr, {"m": 1})
    ct.write_container(p2, dict(reversed(list(arr.items()))), {"m": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_sections_aligned(tmp_path):
    path = tmp_path / "t.lwc"
    ct.write_container(path, {"x": np.ones(3), "y": np.ones(5)}, {})
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[4:12])
    import json
    doc = json.loads(raw[12:12 + hlen])
    for e in doc["arrays"]:
        assert e["offset"] % ct.ALIGN == 0


def test_rejects_unknown_magic(tmp_path):
    path = tmp_path / "bad.lwc"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ContainerError):
        ct.read_container(path)


def test_rejects_truncated(tmp_path):
    path = tmp_path / "bad.lwc"
    path.write_bytes(b"LW")
    with pytest.raises(ContainerError):
        ct.read_container(path)


def test_rejects_malformed_header(tmp_path):
    path = tmp_path / "bad.lwc"
    body = b"{not json"
    path.write_bytes(b"LWC1" + struct.pack("<Q", len(body)) + body)
    with pytest.raises(ContainerError):
        ct.read_container(path)


def test_rejects_inconsistent_length(tmp_path):
    path = tmp_path / "t.lwc"
    ct.write_container(path, {"x": np.ones(4)}, {})
    raw = bytearray(path.read_bytes())
    # corrupt the declared length in the header
    raw = raw.replace(b'"length":32', b'"length":24')
    bad = tmp_path / "bad.lwc"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ContainerError):
        ct.read_container(bad)


def test_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(ContainerError):
        ct.write_container(tmp_path / "t.lwc", {"x": np.arange(3, dtype=np.int32)}, {})
