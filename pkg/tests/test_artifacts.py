import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from trxcat import artifacts
from trxcat.errors import DataError


class TestContainer:
    def test_layout(self):
        blob = artifacts.dumps("thing", {"a": 1}, {"w": np.arange(3, dtype=np.float64)})
        assert blob[:8] == artifacts.MAGIC
        version, hlen = struct.unpack("<IQ", blob[8:20])
        assert version == artifacts.FORMAT_VERSION
        assert len(blob) == 20 + hlen + 24

    def test_round_trip_dtypes(self):
        tensors = {
            "f4": np.linspace(0, 1, 7, dtype=np.float32).reshape(7, 1),
            "f8": np.array([[1.5, -2.0], [np.pi, 1e-300]]),
            "i4": np.array([-1, 2, 3], dtype=np.int32),
            "i8": np.array([2 ** 40], dtype=np.int64),
            "u1": np.frombuffer(b"abc", dtype=np.uint8),
            "empty": np.zeros((0, 4)),
        }
        kind, meta, back = artifacts.loads(artifacts.dumps("k", {"x": [1, "y"]}, tensors))
        assert kind == "k" and meta == {"x": [1, "y"]}
        for name, arr in tensors.items():
            assert back[name].dtype == arr.dtype and np.array_equal(back[name], arr), name

    def test_deterministic_and_order_free(self):
        a = artifacts.dumps("k", {"b": 1, "a": 2}, {"x": np.ones(2), "y": np.zeros(3)})
        b = artifacts.dumps("k", {"a": 2, "b": 1}, {"y": np.zeros(3), "x": np.ones(2)})
        assert a == b

    def test_bad_magic(self):
        with pytest.raises(DataError):
            artifacts.loads(b"NOTTRXCAT" + b"\x00" * 40)

    def test_wrong_kind(self):
        with pytest.raises(DataError):
            artifacts.loads(artifacts.dumps("model", {}), expect_kind="featurizer")

    def test_truncated(self):
        blob = artifacts.dumps("k", {}, {"x": np.ones(100)})
        with pytest.raises(DataError):
            artifacts.loads(blob[:-16])

    def test_unsupported_version(self):
        blob = bytearray(artifacts.dumps("k", {}))
        blob[8:12] = struct.pack("<I", 99)
        with pytest.raises(DataError):
            artifacts.loads(bytes(blob))

    def test_nan_meta_rejected(self):
        with pytest.raises(ValueError):
            artifacts.dumps("k", {"x": float("nan")})

    def test_file_io(self, tmp_path):
        blob = artifacts.write(tmp_path / "a.bin", "k", {}, {"x": np.eye(2)})
        assert artifacts.digest(blob) == artifacts.digest((tmp_path / "a.bin").read_bytes())
        _, _, t = artifacts.read(tmp_path / "a.bin")
        assert np.array_equal(t["x"], np.eye(2))
        with pytest.raises(DataError):
            artifacts.read(tmp_path / "missing.bin")


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float64, np.float32, np.int64, np.int32]),
                  hnp.array_shapes(min_dims=1, max_dims=3, min_side=0, max_side=5)))
def test_round_trip_property(arr):
    _, _, back = artifacts.loads(artifacts.dumps("p", {}, {"a": arr}))
    assert back["a"].shape == arr.shape
    assert back["a"].tobytes() == np.ascontiguousarray(arr).tobytes()
