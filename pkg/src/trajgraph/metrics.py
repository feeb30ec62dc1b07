"""Displacement metrics over the best of K modes, miss rate, and the
constant-velocity comparison baseline.

Modes are ranked by predicted probability (ties toward the lower index) and
the first K available are scored. Distances accumulate sequentially in plain
floats so results are bit-reproducible against a straightforward reference.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .scene import SceneDescription

MISS_THRESHOLD_M = 2.0
DEFAULT_KS = (1, 5, 10)


def rank_modes(pi) -> list:
    """Mode indices by descending probability, ties toward the lower index."""
    return sorted(range(len(pi)), key=lambda i: (-float(pi[i]), i))


def ade(trajectory, ground_truth) -> float:
    total = 0.0
    for p, g in zip(trajectory, ground_truth):
        dx, dy = float(p[0]) - float(g[0]), float(p[1]) - float(g[1])
        total += math.sqrt(dx * dx + dy * dy)
    return total / len(ground_truth)


def fde(trajectory, ground_truth) -> float:
    dx = float(trajectory[-1][0]) - float(ground_truth[-1][0])
    dy = float(trajectory[-1][1]) - float(ground_truth[-1][1])
    return math.sqrt(dx * dx + dy * dy)


@dataclass
class SceneMetrics:
    scene_id: str
    n_modes: int
    min_ade: dict  # K -> meters
    min_fde: dict
    miss: dict  # K -> bool; final-step error strictly above 2 m

    def row(self) -> dict:
        out = {"scene_id": self.scene_id, "n_modes": self.n_modes}
        for k in sorted(self.min_ade):
            out[f"minADE_{k}"] = self.min_ade[k]
            out[f"minFDE_{k}"] = self.min_fde[k]
            out[f"miss_{k}"] = self.miss[k]
        return out


def evaluate_scene(mu, pi, ground_truth, ks=DEFAULT_KS, scene_id: str = "") -> SceneMetrics:
    """Min-over-K-modes metrics for one scene; uses the available modes when
    fewer than K exist."""
    order = rank_modes(pi)
    ades = [ade(mu[i], ground_truth) for i in order]
    fdes = [fde(mu[i], ground_truth) for i in order]
    min_ade, min_fde, miss = {}, {}, {}
    for k in ks:
        kk = min(k, len(order))
        min_ade[k] = min(ades[:kk])
        min_fde[k] = min(fdes[:kk])
        miss[k] = min_fde[k] > MISS_THRESHOLD_M
    return SceneMetrics(scene_id, len(order), min_ade, min_fde, miss)


@dataclass
class MetricsReport:
    scenes: list = field(default_factory=list)  # SceneMetrics
    ks: tuple = DEFAULT_KS
    config: dict = field(default_factory=dict)

    def add(self, metrics: SceneMetrics):
        self.scenes.append(metrics)

    def aggregate(self) -> dict:
        agg = {}
        n = len(self.scenes)
        if n == 0:
            return agg
        for k in self.ks:
            ade_total = 0.0
            fde_total = 0.0
            misses = 0
            for s in self.scenes:
                ade_total += s.min_ade[k]
                fde_total += s.min_fde[k]
                misses += 1 if s.miss[k] else 0
            agg[f"minADE_{k}"] = ade_total / n
            agg[f"minFDE_{k}"] = fde_total / n
            agg[f"MR_{k}"] = misses / n
        agg["n_scenes"] = n
        return agg

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "aggregate": self.aggregate(),
                "scenes": [s.row() for s in self.scenes],
            },
            sort_keys=True,
            indent=2,
        )

    def to_csv(self) -> str:
        if not self.scenes:
            return ""
        header = list(self.scenes[0].row())
        lines = [",".join(header)]
        for s in self.scenes:
            row = s.row()
            lines.append(",".join(_csv_cell(row[h]) for h in header))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def baseline_constant_velocity(sd: SceneDescription, agent_index=None) -> np.ndarray:
    """Extrapolate the last observed displacement over the future horizon."""
    idx = sd.target if agent_index is None else agent_index
    track = sd.agents[idx].xy
    if sd.history_steps < 2:
        raise ValueError("constant-velocity baseline needs >= 2 history steps")
    now = sd.now_index
    step = track[now] - track[now - 1]
    return np.stack([track[now] + step * (t + 1) for t in range(sd.future_steps)])
