"""End-to-end drivers: EEG teacher -> prototype bank -> face-student ablation.

These tie the modules together for the CLI and for the directional
benchmark (source domain plus a rotated, reweighted target domain).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import protobank, synth, topomap, trainer
from .protobank import PrototypeBank
from .trainer import TeacherConfig, TrainConfig
from .vagrid import make_grid

log = logging.getLogger(__name__)

ABLATION_VARIANTS = ("B0", "B1", "B2", "B3")


@dataclass(frozen=True)
class BenchmarkConfig:
    """The seeded synthetic ablation used for the directional check."""

    seeds: tuple[int, ...] = (0, 1, 2)
    variants: tuple[str, ...] = ABLATION_VARIANTS
    faces: synth.SyntheticSpec = field(
        default_factory=lambda: synth.SyntheticSpec(shift_angle=0.35, prevalence_skew=0.5))
    eeg: synth.EEGSpec = field(default_factory=synth.EEGSpec)
    teacher: TeacherConfig = field(default_factory=lambda: TeacherConfig(epochs=30))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=40, batch_size=32))
    resolution: int = 16
    grid: int = 5


@dataclass
class BenchmarkResult:
    # variant -> per-seed Macro-F1
    shifted: dict
    source: dict
    bank_digest: str

    def median(self, variant: str, domain: str = "shifted") -> float:
        return float(np.median(getattr(self, domain)[variant]))


def eeg_bank(eeg: synth.EEGSpec, teacher_cfg: TeacherConfig, resolution: int = 16, grid: int = 5,
             degenerate_fill: float | None = 0.5) -> tuple[trainer.TeacherResult, PrototypeBank]:
    """Render topomaps, train the V/A teacher and bin its validation embeddings."""
    segments, va = synth.sample_eeg(eeg)
    ts = topomap.render_segments(segments, va, topomap.standard_layout(), resolution,
                                 degenerate_fill=degenerate_fill)
    x = ts.flat_inputs()
    res = trainer.train_teacher(x, ts.va, teacher_cfg)
    emb, va_val = trainer.extract_embeddings(res.ema_model(), x[res.val_idx], ts.va[res.val_idx])
    return res, protobank.build_bank(emb, va_val, make_grid(grid))


def run_benchmark(cfg: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    """Train every variant for every seed and score it on both domains."""
    teacher_cfg = replace(cfg.teacher, feature_dim=cfg.train.feature_dim)
    _, bank = eeg_bank(cfg.eeg, teacher_cfg, cfg.resolution, cfg.grid)
    shifted = {v: [] for v in cfg.variants}
    source = {v: [] for v in cfg.variants}
    for seed in cfg.seeds:
        data = synth.make_face_splits(replace(cfg.faces, seed=seed))
        base = replace(cfg.train, seed=seed)
        vision = trainer.train_vision_teacher(data["train"].x, data["train"].y, base)
        for variant in cfg.variants:
            res = trainer.train_student(data["train"].x, data["train"].y, replace(base, variant=variant),
                                        bank=bank, vision_teacher=vision)
            K = len(base.loss.class_names)
            shifted[variant].append(trainer.evaluate_model(res.model, data["shifted"].x, data["shifted"].y, K).macro_f1)
            source[variant].append(trainer.evaluate_model(res.model, data["test"].x, data["test"].y, K).macro_f1)
            log.info("seed %d %s shifted Macro-F1 %.4f", seed, variant, shifted[variant][-1])
    return BenchmarkResult(shifted, source, bank.digest)
