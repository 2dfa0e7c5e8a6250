import shutil

import numpy as np
import pytest

from protodistill import artifacts, protobank
from protodistill.cli import EXIT_INTEGRITY, EXIT_OK, EXIT_USAGE, main



@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "out"
    cfg = "tiny"
    assert main(["pipeline", "--config", cfg, "--out", str(out), "--resamples", "50"]) == EXIT_OK
    return cfg, out


def metric_values(path):
    rep = artifacts.read_json(path)
    return rep["acc"], rep["macro_f1"], rep["bacc"], rep["ci"]


class TestPipeline:
    def test_outputs(self, tiny_run):
        _, out = tiny_run
        bank = protobank.load_bank(out / "bank" / "bank.npz")
        assert bank.K == 25 and bank.D == 16
        for v in ("B0", "B1", "B2", "B3"):
            for proto in ("eight_way", "present_only"):
                rep = artifacts.read_json(out / v / "eval" / f"metrics_{proto}.json")
                assert rep["variant"] == v and 0.0 <= rep["macro_f1"] <= 1.0
        rows = artifacts.read_csv(out / "tables" / "ablation.csv")
        assert [r["variant"] for r in rows] == ["B0", "B1", "B2", "B3"]

    def test_every_stage_verifies(self, tiny_run, capsys):
        _, out = tiny_run
        for sums in out.rglob("SHA256SUMS"):
            assert main(["verify", str(sums)]) == EXIT_OK
        assert "FAILED" not in capsys.readouterr().out

    def test_manifest(self, tiny_run):
        _, out = tiny_run
        man = artifacts.read_json(out / "bank" / "build-prototypes.manifest.json")
        assert man["command"] == "build-prototypes"
        assert man["outputs"]["bank.npz"] == artifacts.sha256_file(out / "bank" / "bank.npz")
        assert list(man["inputs"].values()) == [artifacts.sha256_file(out / "teacher" / "teacher_embeddings.npz")]

    def test_rerun_bank_is_identical(self, tiny_run, tmp_path):
        cfg, out = tiny_run
        emb = str(out / "teacher" / "teacher_embeddings.npz")
        for d in ("a", "b"):
            assert main(["build-prototypes", "--input", emb, "--config", cfg, "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "bank.npz").read_bytes() == (tmp_path / "b" / "bank.npz").read_bytes()
        assert (tmp_path / "a" / "bank.npz").read_bytes() == (out / "bank" / "bank.npz").read_bytes()

    def test_all_targets_match_eight_way(self, tiny_run, tmp_path):
        cfg, out = tiny_run
        args = ["evaluate", "--checkpoint", str(out / "B3" / "student.npz"), "--data",
                str(out / "data" / "faces_shifted.npz"), "--target-classes", ",".join(map(str, range(8))),
                "--resamples", "100", "--config", cfg, "--out", str(tmp_path)]
        assert main(args) == EXIT_OK
        assert metric_values(tmp_path / "metrics_eight_way.json") == metric_values(tmp_path / "metrics_present_only.json")


class TestTables:
    def _report(self, path, variant, f1):
        artifacts.write_json(path, {"protocol": "eight_way", "classes": [0, 1], "acc": 0.5, "macro_f1": f1, "bacc": 0.4,
                                    "variant": variant})
        return str(path)

    def test_single_row(self, tmp_path):
        p = self._report(tmp_path / "m.json", "B2", 0.25)
        assert main(["emit-tables", p, "--out", str(tmp_path / "t")]) == EXIT_OK
        rows = artifacts.read_csv(tmp_path / "t" / "ablation.csv")
        assert len(rows) == 1 and rows[0]["variant"] == "B2"
        assert "B2 & eight-way & 50.00 & 25.00 & 40.00" in (tmp_path / "t" / "ablation.tex").read_text()

    def test_order_and_rerun_bytes(self, tmp_path):
        paths = [self._report(tmp_path / f"{v}.json", v, 0.1) for v in ("B3-T1", "B3", "B0", "B1")]
        for d in ("a", "b"):
            assert main(["emit-tables", *paths, "--out", str(tmp_path / d)]) == EXIT_OK
        rows = artifacts.read_csv(tmp_path / "a" / "ablation.csv")
        assert [r["variant"] for r in rows] == ["B0", "B1", "B3", "B3-T1"]
        for name in ("ablation.csv", "ablation.tex"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_schema_error(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"acc": 1}')
        assert main(["emit-tables", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == EXIT_INTEGRITY


class TestVerify:
    def _copy(self, tiny_run, tmp_path):
        _, out = tiny_run
        dst = tmp_path / "bank"
        shutil.copytree(out / "bank", dst)
        return dst

    def test_flipped_byte(self, tiny_run, tmp_path, capsys):
        d = self._copy(tiny_run, tmp_path)
        data = bytearray((d / "bank.npz").read_bytes())
        data[200] ^= 0x01
        (d / "bank.npz").write_bytes(bytes(data))
        assert main(["verify", str(d)]) == EXIT_INTEGRITY
        lines = capsys.readouterr().out.splitlines()
        assert sum("FAILED" in line for line in lines) == 1
        assert any(line.startswith("bank.npz: FAILED") for line in lines)

    def test_empty_sums_is_vacuous(self, tmp_path, caplog):
        (tmp_path / "SHA256SUMS").write_text("")
        assert main(["verify", str(tmp_path)]) == EXIT_OK
        assert "nothing to verify" in caplog.text

    def test_missing_sums(self, tmp_path):
        assert main(["verify", str(tmp_path)]) == EXIT_INTEGRITY


class TestErrors:
    def test_usage(self, capsys):
        assert main(["no-such-command"]) == EXIT_USAGE
        assert main(["build-prototypes"]) == EXIT_USAGE

    def test_missing_input(self, tmp_path):
        assert main(["build-prototypes", "--input", str(tmp_path / "nope.npz"), "--out", str(tmp_path)]) == EXIT_INTEGRITY

    def test_unknown_bundled_config(self, tmp_path):
        assert main(["synth", "--config", "no-such-config", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"train": {"epochs": 1, "bogus": 2}}')
        assert main(["synth", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_USAGE

    def test_tampered_input_is_refused(self, tiny_run, tmp_path):
        _, out = tiny_run
        shutil.copytree(out / "teacher", tmp_path / "teacher")
        emb = tmp_path / "teacher" / "teacher_embeddings.npz"
        arrays = artifacts.read_container(emb)
        arrays["embeddings"] = arrays["embeddings"] * 1.0 + 0.0
        arrays["embeddings"][0, 0] = -arrays["embeddings"][0, 0]
        artifacts.write_container(arrays, emb)
        assert main(["build-prototypes", "--input", str(emb), "--out", str(tmp_path / "b")]) == EXIT_INTEGRITY


def test_plot_curves(tiny_run, tmp_path):
    _, out = tiny_run
    for d in ("a", "b"):
        assert main(["plot-curves", "--input", str(out / "B3" / "epochs.csv"), "--out", str(tmp_path / d)]) == 0
    svg = (tmp_path / "a" / "curves.svg").read_bytes()
    assert svg.startswith(b"<?xml") and svg == (tmp_path / "b" / "curves.svg").read_bytes()


def test_synth_seeded(tmp_path):
    for d in ("a", "b"):
        assert main(["synth", "--seed", "3", "--out", str(tmp_path / d)]) == EXIT_OK
    a = artifacts.read_container(tmp_path / "a" / "faces_train.npz")
    b = artifacts.read_container(tmp_path / "b" / "faces_train.npz")
    assert all(np.array_equal(a[k], b[k]) for k in a)
