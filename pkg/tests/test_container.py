import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lpbf_twin.container import (FORMAT_VERSION, ChecksumError, ContainerError,
                                 TruncatedFileError, VersionMismatchError, read_container,
                                 read_header, write_container)


def test_round_trip_mixed_dtypes(tmp_path):
    arrays = {"a": np.arange(12.0).reshape(3, 4), "c": np.array([1 + 2j, 3 - 1j]),
              "i": np.array([1, 2, 3], dtype=np.int32), "empty": np.zeros((0, 5))}
    p = write_container(tmp_path / "x.lpbf", "test", {"note": "hi"}, arrays)
    header, back = read_container(p, kind="test")
    assert header["meta"] == {"note": "hi"}
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype and back[k].shape == arrays[k].shape
        assert np.array_equal(back[k], arrays[k])


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=3, max_side=6),
                  elements=st.floats(allow_nan=False, width=64)))
def test_round_trip_property(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("c") / "x.lpbf"
    write_container(p, "prop", {}, {"a": a})
    assert np.array_equal(read_container(p)[1]["a"], a)


def test_header_only_read(tmp_path):
    p = write_container(tmp_path / "x.lpbf", "k", {"n": 3}, {"a": np.ones(4)})
    h = read_header(p)
    assert h["kind"] == "k" and h["meta"]["n"] == 3
    assert h["arrays"][0]["shape"] == [4]


def test_wrong_kind(tmp_path):
    p = write_container(tmp_path / "x.lpbf", "k", {}, {"a": np.ones(2)})
    with pytest.raises(ContainerError):
        read_container(p, kind="other")


def test_corruption_detected(tmp_path):
    p = write_container(tmp_path / "x.lpbf", "k", {}, {"a": np.arange(100.0)})
    raw = bytearray(p.read_bytes())
    raw[-100] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        read_container(p)


def test_truncation_detected(tmp_path):
    p = write_container(tmp_path / "x.lpbf", "k", {}, {"a": np.arange(100.0)})
    raw = p.read_bytes()
    p.write_bytes(raw[:-200])
    with pytest.raises(ContainerError):
        read_container(p)
    p.write_bytes(raw[:10])
    with pytest.raises(TruncatedFileError):
        read_container(p)


def test_version_mismatch(tmp_path):
    p = write_container(tmp_path / "x.lpbf", "k", {}, {"a": np.ones(2)})
    raw = bytearray(p.read_bytes())
    struct.pack_into("<I", raw, 8, FORMAT_VERSION + 1)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        read_header(p)


def test_not_a_container(tmp_path):
    p = tmp_path / "x.lpbf"
    p.write_bytes(b"NOTMAGIC" + bytes(40))
    with pytest.raises(ContainerError):
        read_header(p)
