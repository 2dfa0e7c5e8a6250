"""Command-line entry point: ``protodistill <command> [options]``.

Every artifact-producing command writes its outputs into ``--out``, records
them in ``<out>/SHA256SUMS`` and leaves a ``<command>.manifest.json`` run
manifest.  Inputs are checked against the ``SHA256SUMS`` next to them.

Exit codes: 0 success, 1 usage or configuration error, 2 integrity or
format failure, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import artifacts, metrics, nn_core, protobank, topomap, trainer
from . import synth as synthetic
from .errors import (ConfigurationError, FormatError, IntegrityError, NumericError, ProtoDistillError)
from .losses import CLASS_NAMES, LossConfig
from .vagrid import make_grid

log = logging.getLogger("protodistill")

EXIT_OK, EXIT_USAGE, EXIT_INTEGRITY, EXIT_NUMERIC = 0, 1, 2, 3
SUMS_NAME = "SHA256SUMS"
TABLE_HEADER = ["variant", "protocol", "acc", "macro_f1", "bacc"]
TABLE_VARIANTS = ("B0", "B1", "B2", "B3", "B3-T1")
METRICS_KEYS = ("protocol", "classes", "acc", "macro_f1", "bacc")


class UsageError(ProtoDistillError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- configuration --------------------------------------------------------------

def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _apply(obj, section: dict, name: str):
    known = {f.name for f in dataclasses.fields(obj)}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown {name} keys: {sorted(unknown)}")
    return dataclasses.replace(obj, **{k: _tuplify(v) for k, v in section.items()})


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a command can be configured with, from ``--config`` JSON."""

    loss: LossConfig = dataclasses.field(default_factory=LossConfig)
    train: trainer.TrainConfig = dataclasses.field(default_factory=trainer.TrainConfig)
    teacher: trainer.TeacherConfig = dataclasses.field(default_factory=trainer.TeacherConfig)
    synth: synthetic.SyntheticSpec = dataclasses.field(default_factory=synthetic.SyntheticSpec)
    eeg: synthetic.EEGSpec = dataclasses.field(default_factory=synthetic.EEGSpec)
    resolution: int = 32

    def to_dict(self) -> dict:
        return {"loss": self.loss.to_dict(), "train": self.train.to_dict(),
                "teacher": dataclasses.asdict(self.teacher), "synth": self.synth.to_dict(),
                "eeg": dataclasses.asdict(self.eeg), "resolution": self.resolution}


CONFIG_DIR = Path(__file__).with_name("configs")


def resolve_config(path: str) -> Path:
    """A file path, or the name of a bundled config such as ``tiny``."""
    p = Path(path)
    if p.is_file():
        return p
    bundled = CONFIG_DIR / f"{path}.json"
    if bundled.is_file():
        return bundled
    raise ConfigurationError(f"config {path!r} is neither a file nor a bundled config "
                             f"({sorted(q.stem for q in CONFIG_DIR.glob('*.json'))})")


def load_config(path: str | None) -> RunConfig:
    """Parse a JSON config with optional sections loss/train/teacher/synth/eeg."""
    raw = {} if path is None else artifacts.read_json(resolve_config(path))
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(raw) - {"loss", "train", "teacher", "synth", "eeg", "resolution"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    loss = _apply(LossConfig(), raw.get("loss", {}), "loss")
    train = _apply(trainer.TrainConfig(), raw.get("train", {}), "train")
    train = dataclasses.replace(train, loss=loss)
    return RunConfig(
        loss=loss,
        train=train,
        teacher=_apply(trainer.TeacherConfig(), raw.get("teacher", {}), "teacher"),
        synth=_apply(synthetic.SyntheticSpec(), raw.get("synth", {}), "synth"),
        eeg=_apply(synthetic.EEGSpec(), raw.get("eeg", {}), "eeg"),
        resolution=int(raw.get("resolution", 32)),
    )


# -- run bookkeeping --------------------------------------------------------------

def verify_input(path) -> str:
    """Digest of an input file, checked against a sibling SHA256SUMS if it lists it."""
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"{path}: input file is missing", str(path))
    actual = artifacts.sha256_file(path)
    want = artifacts.recorded_digest(path, SUMS_NAME)
    if want is None:
        log.warning("%s is not listed in a sibling %s; not verified", path, SUMS_NAME)
    elif want != actual:
        raise IntegrityError(f"{path}: SHA-256 does not match {SUMS_NAME}", str(path))
    return actual


class Run:
    """Collects inputs/outputs of one command and writes its manifest."""

    def __init__(self, command: str, out: Path, config: dict):
        self.command = command
        self.out = out
        self.config = config
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []
        self.started = time.time()
        out.mkdir(parents=True, exist_ok=True)

    def input(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = verify_input(path)
        return path

    def output(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def finish(self) -> dict:
        artifacts.update_checksums(self.out / SUMS_NAME, [p.resolve() for p in self.outputs])
        manifest = {
            "command": self.command,
            "config_sha256": artifacts.sha256_bytes(artifacts.canonical_json(self.config).encode()),
            "config": self.config,
            "inputs": self.inputs,
            "outputs": {p.name: artifacts.sha256_file(p) for p in self.outputs},
            "started": self.started,
            "finished": time.time(),
        }
        artifacts.write_json(self.out / f"{self.command}.manifest.json", manifest)
        return manifest


def command_seed(root: int, command: str) -> int:
    """Per-command seed: first 8 bytes (little endian) of SHA-256("<root>:<command>")."""
    return synthetic.derive_seed(root, command)


# -- dataset files -------------------------------------------------------------------

def _save_faces(fs: synthetic.FaceSet, path: Path) -> str:
    return artifacts.write_container({"x": fs.x, "y": fs.y, "va": fs.va}, path)


def _load_faces(path) -> synthetic.FaceSet:
    a = artifacts.read_container(path)
    try:
        return synthetic.FaceSet(a["x"], a["y"], a["va"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing array {exc}") from exc


# -- commands ------------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig) -> int:
    spec = dataclasses.replace(cfg.synth, seed=args.seed)
    run = Run("synth", args.out, {"synth": spec.to_dict()})
    for name, fs in synthetic.make_face_splits(spec).items():
        _save_faces(fs, run.output(f"faces_{name}.npz"))
    run.finish()
    return EXIT_OK


def cmd_synth_eeg(args, cfg: RunConfig) -> int:
    spec = dataclasses.replace(cfg.eeg, seed=args.seed)
    layout = topomap.standard_layout()
    run = Run("synth-eeg", args.out, {"eeg": dataclasses.asdict(spec)})
    segments, va = synthetic.sample_eeg(spec, layout)
    artifacts.write_container({
        "samples": np.stack([s.samples for s in segments]),
        "va": va,
        "subject_ids": np.array([s.subject_id for s in segments]),
        "sample_rate": np.array([spec.sample_rate]),
        "channels": np.array(layout.names),
        "positions": layout.positions,
    }, run.output("eeg.npz"))
    run.finish()
    return EXIT_OK


def cmd_render_topomaps(args, cfg: RunConfig) -> int:
    resolution = args.resolution or cfg.resolution
    run = Run("render-topomaps", args.out, {"resolution": resolution, "log_power": args.log_power})
    a = artifacts.read_container(run.input(args.input))
    layout = topomap.ElectrodeLayout(tuple(a["channels"].tolist()), a["positions"])
    fs = float(a["sample_rate"][0])
    segments = [topomap.EEGSegment(s, fs, sid, layout) for s, sid in zip(a["samples"], a["subject_ids"].tolist())]
    ts = topomap.render_segments(segments, a["va"], layout, resolution, log_power=args.log_power,
                                 degenerate_fill=0.5)
    topomap.save_topomap_archive(ts, run.output("topomaps.npz"))
    topomap.write_manifest(ts, run.output("topomaps_manifest.csv"), "topomaps.npz")
    run.finish()
    return EXIT_OK


def cmd_train_teacher(args, cfg: RunConfig) -> int:
    tcfg = dataclasses.replace(cfg.teacher, seed=command_seed(args.seed, "train-teacher"))
    if args.epochs is not None:
        tcfg = dataclasses.replace(tcfg, epochs=args.epochs)
    run = Run("train-teacher", args.out, {"teacher": dataclasses.asdict(tcfg)})
    ts = topomap.load_topomap_archive(run.input(args.input))
    x = ts.flat_inputs()
    res = trainer.train_teacher(x, ts.va, tcfg)
    ema = res.ema_model()
    nn_core.save_checkpoint(ema, run.output("teacher.npz"), dataclasses.asdict(tcfg))
    run.outputs.append(nn_core.checkpoint_sidecar(run.out / "teacher.npz"))
    emb, va = trainer.extract_embeddings(ema, x[res.val_idx], ts.va[res.val_idx])
    artifacts.write_container({"embeddings": emb, "va": va}, run.output("teacher_embeddings.npz"))
    rows = [[e["epoch"], e["loss"], e["lr"], e["ccc_valence"], e["ccc_arousal"]] for e in res.logs]
    artifacts.write_csv(run.output("teacher_log.csv"), ["epoch", "loss", "lr", "ccc_valence", "ccc_arousal"], rows)
    run.finish()
    last = res.logs[-1] if res.logs else {}
    print(f"teacher CCC valence {last.get('ccc_valence', float('nan')):.4f} "
          f"arousal {last.get('ccc_arousal', float('nan')):.4f}")
    return EXIT_OK


def cmd_build_prototypes(args, cfg: RunConfig) -> int:
    run = Run("build-prototypes", args.out, {"grid": args.grid, "epsilon": args.epsilon})
    a = artifacts.read_container(run.input(args.input))
    bank = protobank.build_bank(a["embeddings"], a["va"], make_grid(args.grid), args.epsilon)
    digest = protobank.save_bank(bank, run.output("bank.npz"))
    run.outputs.append(protobank.bank_sidecar(run.out / "bank.npz"))
    run.finish()
    print(f"bank K={bank.K} D={bank.D} sha256={digest}")
    return EXIT_OK


def _train_config(args, cfg: RunConfig) -> trainer.TrainConfig:
    tc = dataclasses.replace(cfg.train, seed=command_seed(args.seed, "train-student"))
    if args.variant is not None:
        tc = dataclasses.replace(tc, variant=args.variant.upper())
    if args.epochs is not None:
        tc = dataclasses.replace(tc, epochs=args.epochs)
    return tc


def cmd_train_student(args, cfg: RunConfig) -> int:
    tc = _train_config(args, cfg)
    lc = tc.effective_loss
    run = Run("train-student", args.out, {"train": tc.to_dict()})
    data_path = run.input(args.data)
    train = _load_faces(data_path)
    valid = _load_faces(run.input(args.valid)) if args.valid else None
    bank = bank_digest = None
    if lc.lambda_proto > 0:
        if not args.bank:
            raise ConfigurationError(f"variant {tc.variant} needs --bank")
        bank_path = run.input(args.bank)
        bank = protobank.load_bank(bank_path)
        bank_digest = bank.digest
    vision = teacher_digest = None
    if lc.lambda_kd > 0:
        if args.vision_teacher:
            vpath = run.input(args.vision_teacher)
            vision, _ = nn_core.load_checkpoint(vpath)
            teacher_digest = run.inputs[str(vpath)]
        else:
            vision = trainer.train_vision_teacher(train.x, train.y, tc)
    res = trainer.train_student(train.x, train.y, tc, bank, vision,
                                valid=None if valid is None else (valid.x, valid.y))
    fp = trainer.fingerprint(tc, bank_digest, run.inputs[str(data_path)], teacher_digest, res.class_weights)
    nn_core.save_checkpoint(res.model, run.output("student.npz"), {"variant": tc.variant, "fingerprint": fp})
    run.outputs.append(nn_core.checkpoint_sidecar(run.out / "student.npz"))
    trainer.write_epoch_logs(run.output("epochs.csv"), res.logs)
    artifacts.write_json(run.output("fingerprint.json"), fp)
    run.finish()
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    run = Run("evaluate", args.out, {"protocol": args.protocol, "resamples": args.resamples,
                                     "target_classes": args.target_classes})
    model, meta = nn_core.load_checkpoint(run.input(args.checkpoint))
    data = _load_faces(run.input(args.data))
    _, logits = model.predict(data.x)
    preds = np.argmax(logits, axis=1)
    K = logits.shape[1]
    names = list(CLASS_NAMES) if K == len(CLASS_NAMES) else [str(i) for i in range(K)]
    if args.target_classes:
        target = sorted(names.index(c) if c in names else int(c) for c in args.target_classes.split(","))
    else:
        target = sorted(np.unique(data.y).tolist())
    variant = meta.get("hyperparameters", {}).get("variant")
    protocols = {"eight-way": [metrics.EIGHT_WAY], "present-only": [metrics.PRESENT_ONLY],
                 "both": [metrics.EIGHT_WAY, metrics.PRESENT_ONLY]}[args.protocol]
    seed = command_seed(args.seed, "evaluate")
    scores = np.exp(logits - logits.max(axis=1, keepdims=True))
    scores /= scores.sum(axis=1, keepdims=True)
    for proto in protocols:
        rep = metrics.evaluate(preds, data.y, scores, K, target, proto, args.resamples, seed, names)
        rep["variant"] = variant
        artifacts.write_json(run.output(f"metrics_{proto}.json"), rep)
        print(f"{proto}: acc {rep['acc']:.4f} macro_f1 {rep['macro_f1']:.4f} bacc {rep['bacc']:.4f}")
    run.finish()
    return EXIT_OK


def _table_rows(paths: Sequence[str]) -> list[list]:
    rows = []
    for p in paths:
        verify_input(p)
        rep = artifacts.read_json(p)
        if not isinstance(rep, dict) or any(k not in rep for k in METRICS_KEYS):
            raise FormatError(f"{p}: not a metrics report (needs {list(METRICS_KEYS)})")
        variant = str(rep.get("variant") or Path(p).parent.name).upper()
        if variant not in TABLE_VARIANTS:
            raise FormatError(f"{p}: unknown variant {variant!r}")
        if not all(isinstance(rep[k], (int, float)) for k in ("acc", "macro_f1", "bacc")):
            raise FormatError(f"{p}: metric values must be numbers")
        rows.append([variant, rep["protocol"], float(rep["acc"]), float(rep["macro_f1"]), float(rep["bacc"])])
    rows.sort(key=lambda r: (TABLE_VARIANTS.index(r[0]), r[1]))
    return rows


def latex_table(rows: list[list]) -> str:
    lines = ["\\begin{tabular}{llrrr}", "\\hline",
             "Variant & Protocol & Acc & Macro-F1 & bACC \\\\", "\\hline"]
    for v, proto, acc, mf1, bacc in rows:
        lines.append(f"{v} & {proto.replace('_', '-')} & {100 * acc:.2f} & {100 * mf1:.2f} & {100 * bacc:.2f} \\\\")
    lines += ["\\hline", "\\end{tabular}", ""]
    return "\n".join(lines)


def cmd_emit_tables(args, cfg: RunConfig) -> int:
    run = Run("emit-tables", args.out, {"inputs": [str(p) for p in args.metrics]})
    for p in args.metrics:
        run.input(p)
    rows = _table_rows(args.metrics)
    artifacts.write_csv(run.output("ablation.csv"), TABLE_HEADER, rows)
    artifacts.atomic_write_text(run.output("ablation.tex"), latex_table(rows))
    run.finish()
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> int:
    sums = Path(args.sums)
    if sums.is_dir():
        sums = sums / SUMS_NAME
    if not sums.is_file():
        raise IntegrityError(f"{sums}: checksum file not found", str(sums))
    results = artifacts.verify_checksums(sums)
    if not results:
        log.warning("%s lists no files; nothing to verify", sums)
    for r in results:
        print(f"{r.path}: {'OK' if r.ok else 'FAILED (' + r.reason + ')'}")
    failed = sum(not r.ok for r in results)
    if failed:
        print(f"WARNING: {failed} of {len(results)} listed files did not verify", file=sys.stderr)
        return EXIT_INTEGRITY
    return EXIT_OK


def cmd_plot_curves(args, cfg: RunConfig) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "protodistill"  # stable element ids across runs
    run = Run("plot-curves", args.out, {"input": str(args.input)})
    logs = trainer.read_epoch_logs(run.input(args.input))
    ep = [e.epoch for e in logs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for key in ("loss", "ce", "kd", "proto", "geo"):
        ax1.plot(ep, [getattr(e, key) for e in logs], label=key)
    ax1.set_xlabel("epoch")
    ax1.legend()
    for key in ("acc", "macro_f1", "bacc"):
        ax2.plot(ep, [getattr(e, key) for e in logs], label=key)
    ax2.set_xlabel("epoch")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(run.output("curves.svg"), format="svg", metadata={"Date": None})
    plt.close(fig)
    run.finish()
    return EXIT_OK


def cmd_pipeline(args, cfg: RunConfig) -> int:
    """Run every stage into subdirectories of ``--out`` with the given config."""
    out = args.out
    common = ["--seed", str(args.seed)] + (["--config", args.config] if args.config else [])
    epochs = [] if args.epochs is None else ["--epochs", str(args.epochs)]
    steps = [
        ["synth", "--out", str(out / "data")],
        ["synth-eeg", "--out", str(out / "eeg")],
        ["render-topomaps", "--input", str(out / "eeg" / "eeg.npz"), "--out", str(out / "topomaps")],
        ["train-teacher", "--input", str(out / "topomaps" / "topomaps.npz"), "--out", str(out / "teacher")],
        ["build-prototypes", "--input", str(out / "teacher" / "teacher_embeddings.npz"),
         "--grid", str(args.grid), "--out", str(out / "bank")],
    ]
    tables = []
    for v in args.variants:
        vdir = out / v.upper()
        steps.append(["train-student", "--data", str(out / "data" / "faces_train.npz"),
                      "--valid", str(out / "data" / "faces_valid.npz"), "--bank", str(out / "bank" / "bank.npz"),
                      "--variant", v, "--out", str(vdir)] + epochs)
        steps.append(["evaluate", "--checkpoint", str(vdir / "student.npz"),
                      "--data", str(out / "data" / "faces_shifted.npz"), "--protocol", "both",
                      "--resamples", str(args.resamples), "--out", str(vdir / "eval")])
        tables.append(str(vdir / "eval" / "metrics_eight_way.json"))
    steps.append(["emit-tables", "--out", str(out / "tables"), *tables])
    for step in steps:
        log.info("pipeline: %s", " ".join(step[:1]))
        code = main(step + common)
        if code != EXIT_OK:
            return code
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="protodistill", description="EEG prototype distillation pipeline.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config with loss/train/teacher/synth/eeg sections")
        sp.add_argument("--seed", type=int, default=0, help="root seed")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.set_defaults(func=func)
        return sp

    add("synth", cmd_synth, "synthetic face-like splits plus a shifted target")
    add("synth-eeg", cmd_synth_eeg, "synthetic EEG segments with V/A labels")
    sp = add("render-topomaps", cmd_render_topomaps, "band-power topomaps from EEG segments")
    sp.add_argument("--input", required=True)
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--log-power", action="store_true")
    sp = add("train-teacher", cmd_train_teacher, "V/A regression teacher on topomaps")
    sp.add_argument("--input", required=True)
    sp.add_argument("--epochs", type=int)
    sp = add("build-prototypes", cmd_build_prototypes, "prototype bank from teacher embeddings")
    sp.add_argument("--input", required=True)
    sp.add_argument("--grid", type=int, default=5)
    sp.add_argument("--epsilon", type=float, default=1.0)
    sp = add("train-student", cmd_train_student, "train a student variant")
    sp.add_argument("--data", required=True)
    sp.add_argument("--valid")
    sp.add_argument("--bank")
    sp.add_argument("--vision-teacher", help="checkpoint of the logit teacher (trained on the fly if omitted)")
    sp.add_argument("--variant", type=str.upper, choices=TABLE_VARIANTS)
    sp.add_argument("--epochs", type=int)
    sp = add("evaluate", cmd_evaluate, "eight-way and present-only metrics")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--protocol", choices=("eight-way", "present-only", "both"), default="both")
    sp.add_argument("--target-classes", help="comma-separated class names or ids (default: classes in labels)")
    sp.add_argument("--resamples", type=int, default=1000)
    sp = add("emit-tables", cmd_emit_tables, "ablation table from metrics JSONs")
    sp.add_argument("metrics", nargs="+")
    sp = add("verify", cmd_verify, "check files against a SHA256SUMS file")
    sp.add_argument("sums", nargs="?", default=SUMS_NAME)
    sp = add("plot-curves", cmd_plot_curves, "training curves SVG from an epoch log")
    sp.add_argument("--input", required=True)
    sp = add("pipeline", cmd_pipeline, "run every stage end to end")
    sp.add_argument("--variants", nargs="+", type=str.upper, default=["B0", "B1", "B2", "B3"], choices=TABLE_VARIANTS)
    sp.add_argument("--grid", type=int, default=5)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--resamples", type=int, default=200)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"protodistill: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (IntegrityError, FormatError) as exc:
        print(f"protodistill: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (NumericError, ArithmeticError, FloatingPointError) as exc:
        print(f"protodistill: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ProtoDistillError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"protodistill: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
