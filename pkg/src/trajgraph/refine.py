"""Candidate-trajectory refinement: anchor-path proximity filtering and
speed-profile clustering, plus the ground-truth-speed branch.

Both branches return subsets of the candidate set (by index), at most five
trajectories, no duplicates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .metapath import AnchorPath

REFINE_TARGET = 5
DT = 0.5
KMEANS_MAX_ITER = 100


@dataclass
class SpeedProfile:
    """Per-step speeds (m/s) derived from a trajectory; first difference is
    taken against the start position (the frame origin for predictions)."""

    speeds: np.ndarray

    def __len__(self):
        return len(self.speeds)

    @classmethod
    def from_trajectory(cls, points: np.ndarray, x0=(0.0, 0.0), dt: float = DT):
        prev = np.vstack([np.asarray(x0, dtype=np.float64), points[:-1]])
        return cls(np.linalg.norm(points - prev, axis=1) / dt)


@dataclass
class RefinementResult:
    selected: list  # candidate indices, <= 5, no duplicates
    branch: str  # "gt_speed" or "anchors"
    provenance: list  # per selection: anchor index / dtw rank records
    flagged_short: bool = False
    distances: dict = field(default_factory=dict)  # reporting payload

    def to_json(self) -> dict:
        return {
            "selected": list(self.selected),
            "branch": self.branch,
            "provenance": self.provenance,
            "flagged_short": self.flagged_short,
            "distances": self.distances,
        }


def dtw(a, b) -> float:
    """Classic dynamic time warping with |x - y| local cost and steps
    {match, insert, delete}; symmetric, zero on identical sequences."""
    a = np.asarray(a.speeds if isinstance(a, SpeedProfile) else a, dtype=np.float64)
    b = np.asarray(b.speeds if isinstance(b, SpeedProfile) else b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty profile")
    n, m = len(a), len(b)
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = abs(a[i - 1] - b[j - 1])
            acc[i, j] = cost + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return float(acc[n, m])


def kmeans(points, k: int, seed: int = 0):
    """Lloyd iterations from k-means++ seeding until the assignment stops
    changing (or 100 iterations); asserts the SSE never increases."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = points[int(rng.integers(n))]
        else:
            centers[i] = points[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))

    def sse(assign, cents):
        return float(np.sum((points - cents[assign]) ** 2))

    assign = np.argmin(
        np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2), axis=1
    )
    prev_sse = sse(assign, centers)
    for _ in range(KMEANS_MAX_ITER):
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
        new_assign = np.argmin(
            np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2), axis=1
        )
        new_sse = sse(new_assign, centers)
        assert new_sse <= prev_sse + 1e-9, "k-means SSE increased"
        prev_sse = new_sse
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    return centers, assign


def anchor_distance(anchor: AnchorPath, trajectory: np.ndarray) -> float:
    """Mean point-to-polyline distance from trajectory points to the anchor."""
    if len(anchor.polyline) == 0:
        raise ValueError("empty anchor polyline")
    dists = [geo.project_to_polyline(anchor.polyline, p)[0] for p in trajectory]
    return float(np.mean(dists))


def refine_with_gt_speed(mu: np.ndarray, gt_speed, x0=(0.0, 0.0), dt: float = DT):
    """Select the five candidates whose speed profiles are most similar to the
    ground-truth profile under DTW; ties break toward the lower index."""
    gt = gt_speed if isinstance(gt_speed, SpeedProfile) else SpeedProfile(np.asarray(gt_speed))
    n = len(mu)
    sims = []
    for i in range(n):
        profile = SpeedProfile.from_trajectory(mu[i], x0, dt)
        sims.append((dtw(profile, gt), i))
    sims.sort(key=lambda pair: (pair[0], pair[1]))
    take = min(REFINE_TARGET, n)
    selected = [i for _, i in sims[:take]]
    return RefinementResult(
        selected,
        "gt_speed",
        [{"candidate": i, "dtw": d} for d, i in sims[:take]],
        flagged_short=n < REFINE_TARGET,
        distances={"dtw": [d for d, _ in sims]},
    )


def refine_with_anchors(mu: np.ndarray, pi: np.ndarray, anchors, x0=(0.0, 0.0),
                        dt: float = DT, distance_gate: float = np.inf, seed: int = 0):
    """Anchor branch: per anchor keep the five closest candidates, cluster
    their speed profiles (k=1) and emit the candidate nearest the centroid.
    Selections deduplicate across anchors; if fewer distinct trajectories
    result than anchors provide for, the gap is filled by the most probable
    unselected candidates."""
    if not anchors:
        raise ValueError("no anchors")
    n = len(mu)
    profiles = [SpeedProfile.from_trajectory(mu[i], x0, dt) for i in range(n)]
    d_matrix = np.array([[anchor_distance(a, mu[j]) for j in range(n)] for a in anchors])

    selected: list[int] = []
    provenance = []
    for ai, anchor in enumerate(anchors):
        dists = d_matrix[ai]
        order = sorted(range(n), key=lambda j: (dists[j], j))
        near = [j for j in order if dists[j] <= distance_gate][:REFINE_TARGET]
        if not near:
            continue
        speeds = np.stack([profiles[j].speeds for j in near])
        centers, _ = kmeans(speeds, 1, seed=seed)
        gaps = np.linalg.norm(speeds - centers[0], axis=1)
        pick = near[int(np.argmin(gaps))]
        provenance.append({"anchor": ai, "candidate": pick, "pool": near,
                           "distance": float(dists[pick])})
        if pick not in selected:
            selected.append(pick)

    target = min(len(anchors), REFINE_TARGET, n)
    if len(selected) < target:
        by_probability = sorted(range(n), key=lambda j: (-pi[j], j))
        for j in by_probability:
            if len(selected) >= target:
                break
            if j not in selected:
                selected.append(j)
                provenance.append({"anchor": None, "candidate": j, "fill": True})
    return RefinementResult(
        selected, "anchors", provenance,
        flagged_short=len(selected) < REFINE_TARGET,
        distances={"anchor": d_matrix.tolist()},
    )
