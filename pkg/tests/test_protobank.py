import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_bank
from protodistill import artifacts, protobank
from protodistill.errors import EmptyInputError, FormatError, IntegrityError, ShapeError
from protodistill.protobank import build_bank, laplace_prior, load_bank, nearest_nonempty_fill, save_bank
from protodistill.vagrid import make_grid


def unit_rows(rng, n, d):
    e = rng.normal(size=(n, d))
    return e / np.linalg.norm(e, axis=1, keepdims=True)


class TestBuild:
    g = make_grid(5)

    def test_matches_brute_force(self, each_backend):
        rng = np.random.default_rng(2024)
        e = unit_rows(rng, 100, 16)
        va = rng.uniform(-1, 1, size=(100, 2))
        bank = build_bank(e, va, self.g)
        P, q, c = brute_force_bank(e.tolist(), va.tolist(), 5, 1.0)
        np.testing.assert_allclose(bank.prototypes, P, rtol=0, atol=1e-12)
        np.testing.assert_allclose(bank.prior, q, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(bank.counts, c)

    def test_sparse_coverage_matches_brute_force(self, each_backend):
        rng = np.random.default_rng(5)
        e = unit_rows(rng, 9, 4)
        va = rng.uniform(-1, 0, size=(9, 2))  # only the lower-left quadrant is populated
        bank = build_bank(e, va, self.g)
        P, q, _ = brute_force_bank(e.tolist(), va.tolist())
        np.testing.assert_allclose(bank.prototypes, P, atol=1e-12)
        np.testing.assert_allclose(bank.prior, q, atol=1e-12)

    def test_one_per_bin(self):
        rng = np.random.default_rng(1)
        e = unit_rows(rng, 25, 3)
        c = self.g.centers
        va = np.array([(c[u], c[v]) for u in range(5) for v in range(5)])
        bank = build_bank(e, va, self.g)
        np.testing.assert_array_equal(bank.prototypes, e)
        np.testing.assert_allclose(bank.prior, 1 / 25, atol=1e-15)

    def test_single_bin(self):
        rng = np.random.default_rng(2)
        e = unit_rows(rng, 7, 3)
        bank = build_bank(e, np.zeros((7, 2)), self.g)
        np.testing.assert_allclose(bank.prototypes, np.tile(e.mean(axis=0), (25, 1)), atol=1e-15)
        assert bank.counts[12] == 7

    def test_pseudo_label_support(self):
        rng = np.random.default_rng(3)
        e, s = unit_rows(rng, 10, 4), unit_rows(rng, 5, 4)
        va, sva = rng.uniform(-1, 1, (10, 2)), rng.uniform(-1, 1, (5, 2))
        both = build_bank(e, va, self.g, support_embeddings=s, support_va=sva)
        joint = build_bank(np.vstack([e, s]), np.vstack([va, sva]), self.g)
        np.testing.assert_array_equal(both.prototypes, joint.prototypes)
        assert both.counts.sum() == 15

    def test_rejects_bad_inputs(self):
        with pytest.raises(EmptyInputError):
            build_bank(np.zeros((0, 3)), np.zeros((0, 2)), self.g)
        with pytest.raises(ShapeError):
            build_bank(np.ones((2, 3)), np.zeros((2, 2)), self.g)
        with pytest.raises(ShapeError):
            build_bank(np.eye(3), np.zeros((2, 2)), self.g)

    def test_frozen(self):
        bank = build_bank(np.eye(3), np.zeros((3, 2)), self.g)
        with pytest.raises(ValueError):
            bank.prototypes[0, 0] = 5.0
        with pytest.raises(AttributeError):
            bank.epsilon = 2.0

    @given(st.integers(1, 60), st.integers(2, 6), st.integers(0, 10_000))
    def test_invariants(self, n, G, seed):
        rng = np.random.default_rng(seed)
        bank = build_bank(unit_rows(rng, n, 3), rng.uniform(-1, 1, (n, 2)), make_grid(G))
        assert bank.prior.min() > 0
        assert bank.prior.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.isfinite(bank.prototypes))
        assert bank.counts.sum() == n


class TestFill:
    g = make_grid(5)

    def _one_hot_sums(self, filled_bins):
        sums = np.zeros((25, 25))
        counts = np.zeros(25, dtype=int)
        for k in filled_bins:
            sums[k, k] = 1.0
            counts[k] = 1
        return sums, counts

    def test_nearest_by_index_distance(self):
        sums, counts = self._one_hot_sums([self.g.flat(0, 1), self.g.flat(1, 1)])
        out = nearest_nonempty_fill(sums, counts, self.g)
        np.testing.assert_array_equal(out[0], sums[self.g.flat(0, 1)])

    def test_tie_goes_to_lower_flat_index(self):
        # (2, 2) is at distance 1 from both (1, 2) = 7 and (3, 2) = 17
        sums, counts = self._one_hot_sums([17, 7])
        out = nearest_nonempty_fill(sums, counts, self.g)
        np.testing.assert_array_equal(out[12], sums[7])

    def test_full_grid_unchanged(self):
        rng = np.random.default_rng(0)
        sums = rng.normal(size=(25, 3))
        counts = np.arange(1, 26)
        np.testing.assert_allclose(nearest_nonempty_fill(sums, counts, self.g), sums / counts[:, None])

    def test_all_empty(self):
        with pytest.raises(EmptyInputError):
            nearest_nonempty_fill(np.zeros((25, 2)), np.zeros(25), self.g)


class TestPrior:
    def test_all_zero(self):
        np.testing.assert_allclose(laplace_prior(np.zeros(25)), 1 / 25)

    def test_concentrated(self):
        p = laplace_prior([24] + [0] * 24)
        assert p[0] == pytest.approx(25 / 49, abs=1e-15)
        np.testing.assert_allclose(p[1:], 1 / 49, atol=1e-15)

    @given(st.integers(0, 100), st.floats(0.01, 10.0))
    def test_equal_counts_uniform(self, c, eps):
        np.testing.assert_allclose(laplace_prior([c] * 9, eps), 1 / 9)


class TestPersistence:
    def _bank(self):
        rng = np.random.default_rng(4)
        return build_bank(unit_rows(rng, 40, 8), rng.uniform(-1, 1, (40, 2)), make_grid(5))

    def test_round_trip(self, tmp_path):
        bank = self._bank()
        path = tmp_path / "bank.npz"
        digest = save_bank(bank, path)
        assert digest == bank.digest == artifacts.sha256_file(path)
        back = load_bank(path)
        for a, b in zip(bank.arrays().values(), back.arrays().values()):
            assert a.tobytes() == b.tobytes()
        assert back.grid == bank.grid and back.header() == bank.header()
        assert load_bank(path, expected_digest=digest).digest == digest

    def test_deterministic_bytes(self, tmp_path):
        save_bank(self._bank(), tmp_path / "a.npz")
        save_bank(self._bank(), tmp_path / "b.npz")
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()

    def test_flipped_byte(self, tmp_path):
        path = tmp_path / "bank.npz"
        save_bank(self._bank(), path)
        data = bytearray(path.read_bytes())
        data[100] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(IntegrityError) as exc:
            load_bank(path)
        assert exc.value.path == str(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "bank.npz"
        path.write_bytes(b"")
        with pytest.raises(FormatError):
            load_bank(path, expected_digest=artifacts.sha256_bytes(b""))

    def test_missing_digest(self, tmp_path):
        path = tmp_path / "bank.npz"
        path.write_bytes(self._bank().to_bytes())
        with pytest.raises(FormatError):
            load_bank(path)

    def test_sidecar_header(self, tmp_path):
        path = tmp_path / "bank.npz"
        digest = save_bank(self._bank(), path)
        side = artifacts.read_json(protobank.bank_sidecar(path))
        assert side == {"version": protobank.BANK_VERSION, "D": 8, "G": 5, "epsilon": 1.0, "sha256": digest}
