"""Corpus IO, the training loop, and evaluation with optional refinement."""
from __future__ import annotations

import json
import math
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .nn import autodiff as ad
from .metrics import MetricsReport, baseline_constant_velocity, evaluate_scene
from .model import SceneSample, TrajectoryModel, build_sample
from .refine import refine_with_anchors, refine_with_gt_speed
from .scene import SceneDescription, parse_scene, scene_to_json
from .synthetic import GeneratorConfig, generate_synthetic

VAL_SEED_OFFSET = 7919  # keeps val scenes disjoint from train under one seed


# ------------------------------------------------------------------- corpus

def write_corpus(out_dir, config: GeneratorConfig, seed: int,
                 val_counts: dict | None = None) -> dict:
    """Generate and write corpus/{train,val}/scene_####.json plus a manifest.

    Content is staged in a temporary sibling directory and moved into place,
    so a failed run leaves no partial corpus behind.
    """
    out_dir = Path(out_dir)
    if val_counts is None:
        val_counts = {fam: max(1, n // 5) for fam, n in config.counts.items() if n}
    val_config = GeneratorConfig(**{**config.__dict__, "counts": dict(val_counts)})

    train_scenes = generate_synthetic(seed, config)
    val_scenes = generate_synthetic(seed + VAL_SEED_OFFSET, val_config)
    manifest = {
        "generator_version": __version__,
        "seed": seed,
        "val_seed": seed + VAL_SEED_OFFSET,
        "counts": {k: v for k, v in config.counts.items() if v},
        "val_counts": {k: v for k, v in val_counts.items() if v},
        "horizon": {"history_steps": config.history_steps,
                    "future_steps": config.future_steps, "dt": config.dt},
        "noise": {"speed_amplitude": config.speed_amplitude,
                  "lateral_amplitude": config.lateral_amplitude},
    }

    staging = out_dir.parent / (out_dir.name + f".tmp-{os.getpid()}")
    if staging.exists():
        shutil.rmtree(staging)
    try:
        for split, scenes in (("train", train_scenes), ("val", val_scenes)):
            split_dir = staging / split
            split_dir.mkdir(parents=True)
            for i, sd in enumerate(scenes):
                (split_dir / f"scene_{i:04d}.json").write_text(scene_to_json(sd))
        (staging / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2)
        )
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(staging, out_dir)
    finally:
        if staging.exists():
            shutil.rmtree(staging)
    return manifest


def load_split(corpus_dir, split: str) -> list:
    """[(scene id, SceneDescription)] in file order."""
    split_dir = Path(corpus_dir) / split
    if not split_dir.is_dir():
        raise FileNotFoundError(f"corpus split not found: {split_dir}")
    out = []
    for path in sorted(split_dir.glob("scene_*.json")):
        out.append((path.stem, parse_scene(path.read_text())))
    if not out:
        raise FileNotFoundError(f"no scenes in {split_dir}")
    return out


def build_samples(scenes, cfg: RunConfig) -> list:
    return [build_sample(sd, cfg, scene_id=sid) for sid, sd in scenes]


# ----------------------------------------------------------------- training

@dataclass
class EpochLog:
    epoch: int
    lr: float
    losses: dict
    seconds: float

    def to_json(self):
        return {"epoch": self.epoch, "lr": self.lr, "losses": self.losses,
                "seconds": round(self.seconds, 3)}


class NaNLossError(RuntimeError):
    def __init__(self, scene_id, epoch, step):
        super().__init__(
            f"non-finite loss at scene {scene_id!r}, epoch {epoch}, step {step}"
        )
        self.scene_id = scene_id


def train(model: TrajectoryModel, samples: list, epochs: int | None = None,
          log_cb=None) -> list:
    """Mini-batch training with gradient accumulation; per-scene tapes.

    Returns one EpochLog per epoch with per-component loss means; the logged
    total always equals the weighted sum of the logged components.
    """
    cfg = model.cfg
    epochs = cfg.epochs if epochs is None else epochs
    optimizer = model.optimizer()
    rng = np.random.default_rng(cfg.seed)
    logs = []
    for epoch in range(epochs):
        t0 = time.time()
        order = rng.permutation(len(samples))
        sums: dict[str, float] = {}
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            scale = 1.0 / len(batch)
            for step, idx in enumerate(batch):
                sample = samples[idx]
                out = model.forward(sample, model.draw_latents(rng))
                values = out.losses.values()
                if not all(math.isfinite(v) for v in values.values()):
                    raise NaNLossError(sample.scene_id, epoch, int(idx))
                for k, v in values.items():
                    sums[k] = sums.get(k, 0.0) + v
                ad.mul(out.losses.total, scale).backward()
            optimizer.step(epoch)
        means = {k: v / len(samples) for k, v in sums.items()}
        log = EpochLog(epoch, optimizer.lr_at(epoch), means, time.time() - t0)
        logs.append(log)
        if log_cb:
            log_cb(log)
    return logs


# --------------------------------------------------------------- evaluation

def scene_seed(base_seed: int, index: int) -> int:
    return int(base_seed) * 1000003 + index


@dataclass
class EvalOutput:
    report: MetricsReport
    baseline: MetricsReport
    refinements: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    scene_details: list = field(default_factory=list)


def refine_prediction(model: TrajectoryModel, sample: SceneSample, pset, mode: str):
    if mode == "semanticformer-r-gt":
        return refine_with_gt_speed(pset.mu, sample.gt_speed, dt=sample.scene.dt)
    anchors = model.anchors_for(sample)
    if not anchors:
        order = np.argsort(-pset.pi, kind="stable")[:5]
        from .refine import RefinementResult

        return RefinementResult(order.tolist(), "anchors",
                                [{"anchor": None, "candidate": int(i), "fill": True}
                                 for i in order], flagged_short=len(order) < 5)
    return refine_with_anchors(pset.mu, pset.pi, anchors, dt=sample.scene.dt)


def evaluate(model: TrajectoryModel, samples: list, seed: int = 0,
             mode: str | None = None, collect_diagnostics: bool = False) -> EvalOutput:
    """Metrics over a sample list; applies the refinement branch implied by
    the mode. Selected trajectories keep their probabilities, renormalized."""
    mode = mode or model.cfg.mode
    report = MetricsReport(config={**model.cfg.to_dict(), "eval_mode": mode})
    baseline_report = MetricsReport(config={"baseline": "constant_velocity"})
    out = EvalOutput(report, baseline_report)
    for idx, sample in enumerate(samples):
        diag = [] if collect_diagnostics else None
        pset, fwd = model.predict(sample, seed=scene_seed(seed, idx), diagnostics=diag)
        if diag is not None:
            out.diagnostics.extend(diag)
        mu, pi = pset.mu, pset.pi
        refinement = None
        if mode in ("semanticformer-r", "semanticformer-r-gt"):
            refinement = refine_prediction(model, sample, pset, mode)
            sel = refinement.selected
            mu = pset.mu[sel]
            pi = pset.pi[sel]
            pi = pi / pi.sum() if pi.sum() > 0 else np.full(len(sel), 1.0 / len(sel))
            out.refinements.append({"scene_id": sample.scene_id, **refinement.to_json()})
        gt = sample.gt_future
        report.add(evaluate_scene(mu, pi, gt, scene_id=sample.scene_id))
        baseline_report.add(
            evaluate_scene(baseline_constant_velocity(sample.scene)[None], [1.0], gt,
                           scene_id=sample.scene_id)
        )
        out.scene_details.append({
            "sample": sample, "prediction": pset, "refinement": refinement,
            "selected_mu": mu, "selected_pi": pi,
        })
    return out
