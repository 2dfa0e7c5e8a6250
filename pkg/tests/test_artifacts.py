import io
import zipfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from protodistill import artifacts
from protodistill.errors import FormatError

EMPTY_SHA = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
ABC_SHA = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


class TestDigests:
    def test_vectors(self):
        assert artifacts.sha256_bytes(b"") == EMPTY_SHA
        assert artifacts.sha256_bytes(b"abc") == ABC_SHA

    def test_file_matches_bytes(self, tmp_path):
        p = tmp_path / "f"
        p.write_bytes(b"abc")
        assert artifacts.sha256_file(p) == ABC_SHA


class TestContainer:
    def test_empty(self):
        data = artifacts.container_bytes({})
        assert artifacts.read_container_bytes(data) == {}

    def test_identity_matrix(self, tmp_path):
        path = tmp_path / "eye.npz"
        digest = artifacts.write_container({"I": np.eye(2)}, path)
        assert digest == artifacts.sha256_file(path)
        back = artifacts.read_container(path)
        assert back["I"].dtype == np.float64 and back["I"].tobytes() == np.eye(2).tobytes()

    def test_numpy_can_read_it(self, tmp_path):
        path = tmp_path / "a.npz"
        arrays = {"m": np.arange(6, dtype=np.float64).reshape(2, 3), "k": np.array([1, 2]), "s": np.array(["x", "yz"])}
        artifacts.write_container(arrays, path)
        with np.load(path, allow_pickle=False) as z:
            for k, v in arrays.items():
                np.testing.assert_array_equal(z[k], v)
        with zipfile.ZipFile(path) as zf:
            raw = zf.read("m.npy")
            assert all(i.compress_type == zipfile.ZIP_STORED for i in zf.infolist())
            assert all(i.date_time == (1980, 1, 1, 0, 0, 0) for i in zf.infolist())
        assert raw[6:8] == b"\x01\x00"
        header = np.lib.format.read_array_header_1_0(io.BytesIO(raw[8:]))
        assert header == ((2, 3), False, np.dtype("<f8"))

    def test_bytes_deterministic(self):
        a = {"w": np.linspace(0, 1, 7), "n": np.array(["a", "b"])}
        assert artifacts.container_bytes(a) == artifacts.container_bytes(dict(a))

    def test_fortran_input_stored_c_order(self):
        f = np.asfortranarray(np.arange(6.0).reshape(2, 3))
        back = artifacts.read_container_bytes(artifacts.container_bytes({"f": f}))["f"]
        np.testing.assert_array_equal(back, f)
        assert back.flags.c_contiguous

    def test_rejects(self):
        with pytest.raises(FormatError):
            artifacts.container_bytes({"x": np.zeros(2, dtype=np.float32)})
        with pytest.raises(FormatError):
            artifacts.container_bytes({"a/b": np.zeros(2)})
        with pytest.raises(FormatError):
            artifacts.container_bytes({"o": np.array([object()])})
        with pytest.raises(FormatError):
            artifacts.read_container_bytes(b"")
        with pytest.raises(FormatError):
            artifacts.read_container_bytes(b"not a zip")

    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4)),
           hnp.arrays(np.int64, hnp.array_shapes(max_dims=2, max_side=5)))
    def test_round_trip(self, f, i):
        back = artifacts.read_container_bytes(artifacts.container_bytes({"f": f, "i": i}))
        assert back["f"].shape == f.shape and back["f"].tobytes() == f.tobytes()
        np.testing.assert_array_equal(back["i"], i)


class TestChecksums:
    def _tree(self, tmp_path):
        (tmp_path / "sub").mkdir()
        (tmp_path / "a.txt").write_bytes(b"abc")
        (tmp_path / "sub" / "b.txt").write_bytes(b"")
        sums = tmp_path / "SHA256SUMS"
        artifacts.update_checksums(sums, ["a.txt", "sub/b.txt"])
        return sums

    def test_format(self, tmp_path):
        sums = self._tree(tmp_path)
        assert sums.read_text() == f"{ABC_SHA}  a.txt\n{EMPTY_SHA}  sub/b.txt\n"

    def test_verify_ok(self, tmp_path):
        sums = self._tree(tmp_path)
        assert all(r.ok for r in artifacts.verify_checksums(sums))

    def test_flipped_byte(self, tmp_path):
        sums = self._tree(tmp_path)
        (tmp_path / "a.txt").write_bytes(b"abd")
        res = {r.path: r for r in artifacts.verify_checksums(sums)}
        assert not res["a.txt"].ok and res["a.txt"].reason == "digest mismatch"
        assert res["sub/b.txt"].ok

    def test_missing(self, tmp_path):
        sums = self._tree(tmp_path)
        (tmp_path / "a.txt").unlink()
        assert [r.reason for r in artifacts.verify_checksums(sums)] == ["missing", ""]

    def test_update_refreshes(self, tmp_path):
        sums = self._tree(tmp_path)
        (tmp_path / "a.txt").write_bytes(b"")
        artifacts.update_checksums(sums, [tmp_path / "a.txt"])
        assert artifacts.parse_checksums(sums.read_text())[0] == (EMPTY_SHA, "a.txt")

    def test_binary_marker_and_case(self):
        assert artifacts.parse_checksums(f"{ABC_SHA.upper()} *x.bin\n") == [(ABC_SHA, "x.bin")]

    @pytest.mark.parametrize("line", ["abc  x", f"{ABC_SHA}x", "g" * 64 + "  x"])
    def test_malformed(self, line):
        with pytest.raises(FormatError):
            artifacts.parse_checksums(line)

    def test_recorded_digest(self, tmp_path):
        self._tree(tmp_path)
        assert artifacts.recorded_digest(tmp_path / "a.txt") == ABC_SHA
        assert artifacts.recorded_digest(tmp_path / "zzz") is None
        assert artifacts.recorded_digest(tmp_path / "sub" / "b.txt") is None


class TestText:
    def test_canonical_json(self):
        assert artifacts.canonical_json({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
        with pytest.raises(ValueError):
            artifacts.canonical_json({"x": float("nan")})

    def test_json_round_trip(self, tmp_path):
        digest = artifacts.write_json(tmp_path / "x.json", {"k": [1, 2]})
        assert digest == artifacts.sha256_file(tmp_path / "x.json")
        assert artifacts.read_json(tmp_path / "x.json") == {"k": [1, 2]}
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(FormatError):
            artifacts.read_json(tmp_path / "bad.json")

    def test_csv(self, tmp_path):
        artifacts.write_csv(tmp_path / "t.csv", ["a", "b"], [[0.1, "x"], [3, "y"]])
        assert (tmp_path / "t.csv").read_text() == "a,b\n0.1,x\n3,y\n"
        assert artifacts.read_csv(tmp_path / "t.csv", ["a", "b"])[0] == {"a": "0.1", "b": "x"}
        with pytest.raises(FormatError):
            artifacts.read_csv(tmp_path / "t.csv", ["a"])

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        artifacts.atomic_write_text(tmp_path / "d" / "f.txt", "hi")
        assert [p.name for p in (tmp_path / "d").iterdir()] == ["f.txt"]
