import math

import numpy as np
import pytest

from trajgraph import predictor as pred
from trajgraph.config import RunConfig
from trajgraph.model import TrajectoryModel, build_sample
from trajgraph.nn.autodiff import Tensor
from trajgraph.nn.params import ParamStore

from scenes import junction_scene, make_agent, two_lane_scene


def store_with_params(seed=0, t_f=12):
    store = ParamStore(seed=seed)
    pred.register_predictor_params(store, t_f=t_f)
    return store


def manual_decode(mu_array, b_array, pi):
    """DecodeResult with hand-set tensors (for loss-formula tests)."""
    M, t_f, _ = mu_array.shape
    return pred.DecodeResult(
        Tensor(np.asarray(pi, dtype=float)),
        [Tensor(mu_array[:, t, :]) for t in range(t_f)],
        [Tensor(b_array[:, t, :]) for t in range(t_f)],
        np.zeros((M, pred.LATENT_DIM)),
    )


# ---------------------------------------------------------------- lane scores

def test_single_candidate_scores_one():
    store = store_with_params()
    rng = np.random.default_rng(0)
    steps = Tensor(rng.normal(size=(4, 32)))
    p = Tensor(rng.normal(size=32))
    lanes = Tensor(rng.normal(size=(1, 32)))
    scores = pred.score_lanes(steps, p, lanes, store)
    assert np.allclose(scores.data, 1.0)


def test_identical_candidates_split_scores():
    store = store_with_params()
    rng = np.random.default_rng(1)
    steps = Tensor(rng.normal(size=(4, 32)))
    p = Tensor(rng.normal(size=32))
    row = rng.normal(size=32)
    lanes = Tensor(np.stack([row, row]))
    scores = pred.score_lanes(steps, p, lanes, store)
    assert np.allclose(scores.data, 0.5)


def test_scores_normalize_per_step():
    store = store_with_params()
    rng = np.random.default_rng(2)
    scores = pred.score_lanes(
        Tensor(rng.normal(size=(4, 32))), Tensor(rng.normal(size=32)),
        Tensor(rng.normal(size=(7, 32))), store,
    )
    assert scores.data.shape == (12, 7)
    assert np.max(np.abs(scores.data.sum(axis=1) - 1.0)) < 1e-12


def test_zero_candidates_is_an_error():
    store = store_with_params()
    with pytest.raises(ValueError, match="no lane context"):
        pred.score_lanes(Tensor(np.zeros((4, 32))), Tensor(np.zeros(32)),
                         Tensor(np.zeros((0, 32))), store)


def test_lane_loss_zero_when_certain():
    scores = Tensor(np.eye(12, 3)[:, :3] * 0 + np.tile([1.0, 0.0, 0.0], (12, 1)))
    loss = pred.lane_loss(scores, [0] * 12)
    assert loss.item() == 0.0


def test_lane_loss_uniform_two_candidates():
    scores = Tensor(np.full((12, 2), 0.5))
    loss = pred.lane_loss(scores, [0] * 12)
    assert math.isclose(loss.item(), 12 * math.log(2.0), rel_tol=1e-12)
    assert math.isclose(loss.item(), 8.3178, abs_tol=1e-4)


def test_lane_loss_monotone_in_gt_probability():
    losses = []
    for p in (0.9, 0.6, 0.3, 0.1):
        scores = Tensor(np.tile([p, 1 - p], (12, 1)))
        losses.append(pred.lane_loss(scores, [0] * 12).item())
    assert losses == sorted(losses)


def test_lane_loss_absent_gt_uses_clamp():
    scores = Tensor(np.full((2, 3), 1 / 3))
    loss = pred.lane_loss(scores, [-1, 0])
    expected = -math.log(1e-12) + -math.log(1 / 3)
    assert math.isclose(loss.item(), expected, rel_tol=1e-9)


# -------------------------------------------------------------------- decoder

def test_decode_contracts():
    store = store_with_params()
    rng = np.random.default_rng(3)
    ctx = Tensor(rng.normal(size=32))
    for M in (5, 25):
        z = rng.standard_normal((M, pred.LATENT_DIM))
        result = pred.decode(ctx, z, store)
        assert abs(result.pi.data.sum() - 1.0) < 1e-6
        assert np.all(result.b_array() > 0)
        assert result.mu_array().shape == (M, 12, 2)
        assert np.all(np.isfinite(result.mu_array()))


def test_decode_is_deterministic_in_z():
    store = store_with_params()
    rng = np.random.default_rng(4)
    ctx = Tensor(rng.normal(size=32))
    z = np.random.default_rng(7).standard_normal((5, pred.LATENT_DIM))
    a = pred.decode(ctx, z, store)
    b = pred.decode(ctx, z.copy(), store)
    assert np.array_equal(a.mu_array(), b.mu_array())
    assert np.array_equal(a.pi.data, b.pi.data)


# --------------------------------------------------------------------- losses

def test_regression_loss_exact_match_value():
    t_f = 12
    gt = np.stack([np.arange(1.0, 13.0), np.zeros(t_f)], axis=1)
    mu = np.stack([gt, gt + 5.0])
    b = np.ones_like(mu)
    result = manual_decode(mu, b, [0.5, 0.5])
    loss, m_star = pred.regression_loss(result, gt)
    assert m_star == 0
    # two coordinates, each log(2b)=log 2, |err|=0
    assert math.isclose(loss.item(), 2 * math.log(2.0), rel_tol=1e-12)


def test_regression_ties_break_low_index():
    gt = np.zeros((4, 2))
    mu = np.zeros((3, 4, 2))
    result = manual_decode(mu, np.ones_like(mu), [0.1, 0.8, 0.1])
    _, m_star = pred.regression_loss(result, gt)
    assert m_star == 0


def test_regression_invariant_to_losing_modes():
    rng = np.random.default_rng(5)
    gt = rng.normal(size=(6, 2))
    winner = gt + 0.01
    lose_a = gt + rng.uniform(1, 2, size=(6, 2))
    lose_b = gt + rng.uniform(2, 3, size=(6, 2))
    r1 = manual_decode(np.stack([winner, lose_a, lose_b]), np.ones((3, 6, 2)), [1 / 3] * 3)
    r2 = manual_decode(np.stack([winner, lose_b, lose_a]), np.ones((3, 6, 2)), [1 / 3] * 3)
    l1, m1 = pred.regression_loss(r1, gt)
    l2, m2 = pred.regression_loss(r2, gt)
    assert m1 == m2 == 0
    assert math.isclose(l1.item(), l2.item(), rel_tol=1e-12)


def test_classification_loss_values():
    result = manual_decode(np.zeros((5, 2, 2)), np.ones((5, 2, 2)), [1.0, 0, 0, 0, 0])
    assert pred.classification_loss(result, 0).item() == 0.0
    uniform = manual_decode(np.zeros((5, 2, 2)), np.ones((5, 2, 2)), [0.2] * 5)
    assert math.isclose(pred.classification_loss(uniform, 0).item(), math.log(5.0),
                        rel_tol=1e-12)
    assert math.isclose(pred.classification_loss(uniform, 0).item(), 1.6094, abs_tol=1e-4)
    lower = manual_decode(np.zeros((5, 2, 2)), np.ones((5, 2, 2)), [0.1, 0.6, 0.1, 0.1, 0.1])
    assert pred.classification_loss(lower, 0).item() > math.log(5.0)


def test_velocity_loss_perfect_prediction():
    gt = np.stack([np.arange(1.0, 13.0), np.zeros(12)], axis=1)
    mu = gt[None, :, :]
    b = np.full((1, 12, 2), 0.7)
    result = manual_decode(mu, b, [1.0])
    loss = pred.velocity_loss(result, gt, 0)
    assert math.isclose(loss.item(), math.log(2 * 0.7), rel_tol=1e-12)


def test_velocity_loss_stationary_tracks():
    gt = np.zeros((12, 2))
    result = manual_decode(np.zeros((1, 12, 2)), np.ones((1, 12, 2)), [1.0])
    loss = pred.velocity_loss(result, gt, 0)
    assert math.isclose(loss.item(), math.log(2.0), rel_tol=1e-12)


def test_velocity_loss_increases_with_speed_error():
    gt = np.stack([np.arange(1.0, 13.0), np.zeros(12)], axis=1)
    slow = manual_decode(gt[None], np.ones((1, 12, 2)), [1.0])
    fast = manual_decode(2 * gt[None], np.ones((1, 12, 2)), [1.0])
    assert pred.velocity_loss(fast, gt, 0).item() > pred.velocity_loss(slow, gt, 0).item()


def test_angle_loss_extremes_and_rotation_invariance():
    gt = np.stack([np.arange(1.0, 13.0), np.zeros(12)], axis=1)
    aligned = manual_decode(gt[None] * 0.5, np.ones((1, 12, 2)), [1.0])
    assert math.isclose(pred.angle_loss(aligned, gt, 0).item(), -1.0, rel_tol=1e-12)
    opposite = manual_decode(-gt[None], np.ones((1, 12, 2)), [1.0])
    assert math.isclose(pred.angle_loss(opposite, gt, 0).item(), 1.0, rel_tol=1e-12)

    rng = np.random.default_rng(6)
    mu = rng.normal(size=(1, 12, 2)) + 3.0
    base = pred.angle_loss(manual_decode(mu, np.ones_like(mu), [1.0]), gt, 0).item()
    theta = 1.1
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    rotated = pred.angle_loss(
        manual_decode(mu @ rot.T, np.ones_like(mu), [1.0]), gt @ rot.T, 0
    ).item()
    assert math.isclose(base, rotated, rel_tol=1e-9)


def test_total_loss_weighting():
    zero = Tensor(0.0)
    one = Tensor(1.0)
    breakdown = pred.total_loss(zero, zero, zero, zero, zero, 0)
    assert breakdown.total.item() == 0.0
    breakdown = pred.total_loss(one, zero, zero, zero, zero, 0)
    assert math.isclose(breakdown.total.item(), 0.95, rel_tol=1e-12)
    for c in (0.5, 2.0, 7.0):
        scaled = pred.total_loss(zero, Tensor(c), zero, zero, zero, 0)
        assert math.isclose(scaled.total.item(), c, rel_tol=1e-12)
    mixed = pred.total_loss(Tensor(2.0), Tensor(0.25), Tensor(0.5), Tensor(3.0), Tensor(-0.5), 0)
    assert math.isclose(mixed.total.item(), 0.95 * 2 + 3 - 0.5 + 0.25 + 0.5, rel_tol=1e-12)


# ----------------------------------------------- full pipeline sanity / modes

def test_model_forward_mode_counts():
    sd = two_lane_scene()
    for mode, m in (("semanticformer", 5), ("semanticformer-r", 25)):
        cfg = RunConfig(mode=mode, seed=1)
        model = TrajectoryModel(cfg)
        sample = build_sample(sd, cfg)
        pset, out = model.predict(sample, seed=3)
        assert pset.mu.shape == (m, 12, 2)
        assert abs(pset.pi.sum() - 1.0) < 1e-6
        assert np.all(pset.b > 0)


def test_model_predict_deterministic_per_seed():
    sd = junction_scene()
    cfg = RunConfig(seed=2)
    model = TrajectoryModel(cfg)
    sample = build_sample(sd, cfg)
    a, _ = model.predict(sample, seed=11)
    b, _ = model.predict(sample, seed=11)
    c, _ = model.predict(sample, seed=12)
    assert np.array_equal(a.mu, b.mu)
    assert not np.array_equal(a.mu, c.mu)


def test_checkpoint_roundtrip_preserves_predictions(tmp_path):
    sd = two_lane_scene()
    cfg = RunConfig(seed=5)
    model = TrajectoryModel(cfg)
    sample = build_sample(sd, cfg)
    before, _ = model.predict(sample, seed=1)
    path = tmp_path / "model.ckpt"
    model.save(path, extra_meta={"epochs": 0})
    loaded, meta = TrajectoryModel.load(path)
    assert meta["config"]["mode"] == "semanticformer"
    after, _ = loaded.predict(sample, seed=1)
    assert np.array_equal(before.mu, after.mu)
