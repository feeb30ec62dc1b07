import itertools

import numpy as np
import pytest

from trajgraph.graph import compact
from trajgraph.metapath import AnchorPath, generate_anchor_paths
from trajgraph.refine import (
    RefinementResult,
    SpeedProfile,
    anchor_distance,
    dtw,
    kmeans,
    refine_with_anchors,
    refine_with_gt_speed,
)
from trajgraph.scene import build_graph, normalize_frame

from scenes import junction_scene


# ----------------------------------------------------------------------- dtw

def brute_force_dtw(a, b):
    """Exhaustive minimum over all monotone alignments (steps right/down/diag)."""
    n, m = len(a), len(b)
    best = [np.inf]

    def walk(i, j, cost):
        cost += abs(a[i] - b[j])
        if cost >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cost
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]


def test_dtw_identity_and_singletons():
    assert dtw([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert dtw([0.0], [1.0]) == 1.0


def test_dtw_example_from_enumeration():
    # exhaustive alignment enumeration confirms the optimal cost is 1
    assert brute_force_dtw([1.0, 2.0, 3.0], [1.0, 3.0]) == 1.0
    assert dtw([1.0, 2.0, 3.0], [1.0, 3.0]) == 1.0


def test_dtw_symmetry_and_empty():
    a, b = [0.5, 2.0, 1.0], [1.0, 1.5]
    assert dtw(a, b) == dtw(b, a)
    with pytest.raises(ValueError, match="empty profile"):
        dtw([], [1.0])


def test_dtw_matches_bruteforce_on_random_pairs():
    rng = np.random.default_rng(12)
    for _ in range(200):
        a = rng.uniform(0, 5, size=rng.integers(1, 7))
        b = rng.uniform(0, 5, size=rng.integers(1, 7))
        assert abs(dtw(a, b) - brute_force_dtw(a, b)) < 1e-12


# -------------------------------------------------------------------- kmeans

def exhaustive_kmeans_sse(points, k):
    """Optimal SSE over every possible assignment of points to k clusters."""
    points = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    best = np.inf
    for assign in itertools.product(range(k), repeat=len(points)):
        if len(set(assign)) < k:
            continue
        sse = 0.0
        for c in range(k):
            members = points[[i for i, a in enumerate(assign) if a == c]]
            sse += float(np.sum((members - members.mean(axis=0)) ** 2))
        best = min(best, sse)
    return best


def test_kmeans_k_equals_n():
    pts = np.array([[0.0], [1.0], [5.0]])
    centers, assign = kmeans(pts, 3, seed=0)
    sse = float(np.sum((pts - centers[assign]) ** 2))
    assert sse == 0.0


def test_kmeans_two_well_separated_clusters():
    pts = np.array([0.0, 0.1, 10.0, 10.1])
    # exhaustive enumeration over all 2^4 assignments confirms the optimum
    assert abs(exhaustive_kmeans_sse(pts, 2) - 0.01) < 1e-12
    centers, assign = kmeans(pts, 2, seed=1)
    got = sorted(float(c) for c in centers[:, 0])
    assert np.allclose(got, [0.05, 10.05])
    sse = float(np.sum((pts[:, None] - centers[assign]) ** 2))
    assert abs(sse - 0.01) < 1e-12


def test_kmeans_k1_is_mean():
    pts = np.array([[1.0, 2.0], [3.0, 6.0]])
    centers, assign = kmeans(pts, 1, seed=0)
    assert np.allclose(centers[0], [2.0, 4.0])
    assert np.array_equal(assign, [0, 0])


def test_kmeans_rejects_k_above_n():
    with pytest.raises(ValueError, match="exceeds"):
        kmeans(np.zeros((2, 1)), 3)


# ----------------------------------------------------------- anchor distance

def straight_anchor(y=0.0, length=40.0):
    xs = np.arange(0.0, length + 0.5, 1.0)
    return AnchorPath(np.stack([xs, np.full_like(xs, y)], axis=1), [], 1.0, "keep")


def test_anchor_distance_zero_on_path():
    anchor = straight_anchor()
    traj = np.stack([np.linspace(1, 12, 12), np.zeros(12)], axis=1)
    assert anchor_distance(anchor, traj) == 0.0


def test_anchor_distance_constant_offset():
    anchor = straight_anchor()
    traj = np.stack([np.linspace(1, 12, 12), np.full(12, 2.0)], axis=1)
    assert abs(anchor_distance(anchor, traj) - 2.0) < 1e-12


def test_anchor_distance_rigid_invariance():
    anchor = straight_anchor()
    rng = np.random.default_rng(3)
    traj = rng.uniform(0, 30, size=(12, 2))
    theta, shift = 0.83, np.array([11.0, -4.0])
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved_anchor = AnchorPath(anchor.polyline @ rot.T + shift, [], 1.0, "keep")
    moved_traj = traj @ rot.T + shift
    assert abs(anchor_distance(anchor, traj) - anchor_distance(moved_anchor, moved_traj)) < 1e-9


# ----------------------------------------------------------- gt-speed branch

def make_candidates(n, seed=0, t_f=12):
    rng = np.random.default_rng(seed)
    speeds = rng.uniform(2.0, 10.0, size=(n,))
    mu = np.zeros((n, t_f, 2))
    for i in range(n):
        mu[i, :, 0] = np.cumsum(np.full(t_f, speeds[i] * 0.5))
    return mu


def test_gt_speed_selects_exact_match_first():
    mu = make_candidates(8, seed=1)
    gt_speed = SpeedProfile.from_trajectory(mu[5])
    result = refine_with_gt_speed(mu, gt_speed)
    assert result.selected[0] == 5
    assert len(result.selected) == 5
    assert result.branch == "gt_speed"


def test_gt_speed_ties_break_by_index():
    mu = np.tile(make_candidates(1, seed=2), (7, 1, 1))
    result = refine_with_gt_speed(mu, SpeedProfile.from_trajectory(mu[0]))
    assert result.selected == [0, 1, 2, 3, 4]


def test_gt_speed_short_candidate_set_is_flagged():
    mu = make_candidates(3, seed=3)
    result = refine_with_gt_speed(mu, SpeedProfile.from_trajectory(mu[0]))
    assert sorted(result.selected) == [0, 1, 2]
    assert result.flagged_short


def test_gt_speed_subset_contract_randomized():
    rng = np.random.default_rng(44)
    for trial in range(50):
        n = int(rng.integers(1, 40))
        mu = rng.normal(size=(n, 12, 2)).cumsum(axis=1)
        gt = SpeedProfile(rng.uniform(0, 10, size=12))
        result = refine_with_gt_speed(mu, gt)
        assert len(result.selected) == len(set(result.selected)) <= 5
        assert all(0 <= i < n for i in result.selected)


def test_gt_speed_permutation_equivariance():
    mu = make_candidates(9, seed=5)
    gt = SpeedProfile(np.full(12, 4.0))
    base = refine_with_gt_speed(mu, gt)
    perm = np.random.default_rng(0).permutation(9)
    permuted = refine_with_gt_speed(mu[perm], gt)
    assert sorted(perm[permuted.selected].tolist()) == sorted(base.selected)


# -------------------------------------------------------------- anchor branch

def test_anchor_branch_dedups_identical_candidates():
    mu = np.tile(make_candidates(1, seed=6), (5, 1, 1))
    pi = np.full(5, 0.2)
    result = refine_with_anchors(mu, pi, [straight_anchor()])
    assert result.selected == [0]
    assert result.branch == "anchors"


def test_anchor_branch_one_representative_per_route():
    # two disjoint anchors; candidates hug one or the other
    up = AnchorPath(np.stack([np.zeros(41), np.arange(41.0)], axis=1), [], 1.0, "keep")
    right = straight_anchor()
    t = np.arange(1.0, 13.0)
    mu = np.stack(
        [np.stack([t * 0.9, np.zeros(12)], axis=1) + i * 0.01 for i in range(4)]
        + [np.stack([np.zeros(12), t * 0.8], axis=1) + i * 0.01 for i in range(4)]
    )
    pi = np.linspace(0.2, 0.05, 8)
    result = refine_with_anchors(mu, pi, [right, up])
    assert len(result.selected) == 2
    assert result.selected[0] in {0, 1, 2, 3}
    assert result.selected[1] in {4, 5, 6, 7}


def test_anchor_branch_fills_short_output_by_probability():
    mu = make_candidates(10, seed=7)
    pi = np.linspace(0.3, 0.02, 10)
    anchors = [straight_anchor(y=0.0), straight_anchor(y=0.1), straight_anchor(y=0.2)]
    result = refine_with_anchors(mu, pi, anchors)
    # identical anchors collapse to one representative, then fill to 3
    assert len(result.selected) == 3
    assert len(set(result.selected)) == 3


def test_anchor_branch_subset_contract_randomized():
    rng = np.random.default_rng(99)
    anchors = [straight_anchor(y=float(k)) for k in range(5)]
    for trial in range(50):
        n = int(rng.integers(1, 30))
        mu = rng.normal(size=(n, 12, 2)).cumsum(axis=1)
        pi = rng.dirichlet(np.ones(n))
        result = refine_with_anchors(mu, pi, anchors[: int(rng.integers(1, 6))])
        assert len(result.selected) == len(set(result.selected)) <= 5
        assert all(0 <= i < n for i in result.selected)


def test_anchor_branch_with_real_anchors():
    sd = normalize_frame(junction_scene())
    g = compact(build_graph(sd))
    anchors = generate_anchor_paths(g, g.target)
    rng = np.random.default_rng(17)
    mu = rng.normal(scale=4.0, size=(25, 12, 2)).cumsum(axis=1)
    pi = rng.dirichlet(np.ones(25))
    result = refine_with_anchors(mu, pi, anchors)
    assert 1 <= len(result.selected) <= 5
    payload = result.to_json()
    assert payload["branch"] == "anchors"
    assert "anchor" in payload["distances"]
