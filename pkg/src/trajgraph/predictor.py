"""Lane-aligned probability prediction, fusion, Laplace mixture decoding and
the training losses.

Loss weighting: total = 0.95 * lane + 1.0 * velocity + 1.0 * angle
                        + regression + classification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import autodiff as ad
from .nn.autodiff import Tensor
from .nn.layers import gru_params, gru_step, laplace_nll, mlp, scaled_dot_attention

HIDDEN = 32
LATENT_DIM = 32
SCALE_FLOOR = 1e-3  # softplus offset keeping Laplace scales positive
LOG_CLAMP = 1e-12
LAMBDA_LANE = 0.95
LAMBDA_VELOCITY = 1.0
LAMBDA_ANGLE = 1.0


def register_predictor_params(store, t_f: int = 12):
    D = HIDDEN
    store.mlp("pred.lane.q", (D, D))
    store.mlp("pred.lane.k", (D, D))
    store.mlp("pred.lane.v", (D, D))
    store.mlp("pred.lane.score", (3 * D, D, t_f))
    store.mlp("pred.latt.kv_in", (D + 1, D))
    store.mlp("pred.latt.q", (D, D))
    store.mlp("pred.latt.k", (D, D))
    store.mlp("pred.latt.v", (D, D))
    store.mlp("pred.context", (3 * D, 2 * D, D))
    store.mlp("pred.pi", (D, D, 1))
    gru_params(store, "pred.gru", D, D)
    store.mlp("pred.mu", (D, D, 2))
    store.mlp("pred.scale", (D, D, 2))


def _mlp_layers(store, name, n_layers=2):
    return [(store.params[f"{name}.{i}.W"], store.params[f"{name}.{i}.b"]) for i in range(n_layers)]


def _gru(store, name):
    return {k: store.params[f"{name}.{k}"] for k in ("Wz", "bz", "Wr", "br", "Wh", "bh")}


# -------------------------------------------------------------- lane scores

def score_lanes(target_steps: Tensor, p_target: Tensor, lane_matrix: Tensor, store,
                t_f: int = 12, diagnostics=None):
    """Per-future-step probabilities over candidate lane encodings.

    Queries come from the lane encodings; keys/values from the target's
    per-step motion states. The score head sees [p_target, lane, attention]
    per candidate and emits one logit per future step, normalized across
    candidates step by step.
    """
    n = lane_matrix.data.shape[0]
    if n == 0:
        raise ValueError("no lane context")
    q = mlp(lane_matrix, _mlp_layers(store, "pred.lane.q", 1))
    k = mlp(target_steps, _mlp_layers(store, "pred.lane.k", 1))
    v = mlp(target_steps, _mlp_layers(store, "pred.lane.v", 1))
    att, _ = scaled_dot_attention(q, k, v)  # (n, D)
    p_rep = ad.stack_rows([p_target] * n)
    logits = mlp(ad.concat([p_rep, lane_matrix, att], axis=1),
                 _mlp_layers(store, "pred.lane.score"))  # (n, t_f)
    scores = ad.softmax(ad.transpose(logits), axis=-1)  # (t_f, n)
    if diagnostics is not None:
        for row in scores.data:
            diagnostics.append(("lane_scores", row))
    return scores


def lane_loss(scores: Tensor, gt_columns) -> Tensor:
    """Cross-entropy against the per-step ground-truth lane.

    ``gt_columns``: candidate column per future step, or -1 when the true
    lane is not among the candidates (contributes a clamped log).
    """
    t_f, n = scores.data.shape
    total = None
    for t, col in enumerate(gt_columns):
        if 0 <= col < n:
            p = ad.take_row(ad.take_row(scores, t), int(col))
            term = ad.mul(ad.log(ad.clamp_min(p, LOG_CLAMP)), -1.0)
        else:
            term = Tensor(-math.log(LOG_CLAMP))
        total = term if total is None else ad.add(total, term)
    return total


def top_k_lane_context(scores: Tensor, lane_matrix: Tensor, p_target: Tensor, store,
                       k: int = 2) -> Tensor:
    """Concatenate the top-k (lane encoding, score) per future step and fuse
    with the target via cross-attention; returns the fused lane context row."""
    t_f, n = scores.data.shape
    rows = []
    for t in range(t_f):
        step_scores = ad.take_row(scores, t)
        order = np.argsort(-step_scores.data, kind="stable")
        # fewer candidates than k: pad with the top pick
        picks = [int(order[j]) if j < n else int(order[0]) for j in range(k)]
        for j in picks:
            rows.append(ad.concat(
                [ad.take_row(lane_matrix, j), ad.reshape(ad.take_row(step_scores, j), (1,))],
                axis=0,
            ))
    tokens = mlp(ad.stack_rows(rows), _mlp_layers(store, "pred.latt.kv_in", 1))  # (t_f*k, D)
    q = mlp(ad.reshape(p_target, (1, HIDDEN)), _mlp_layers(store, "pred.latt.q", 1))
    key = mlp(tokens, _mlp_layers(store, "pred.latt.k", 1))
    val = mlp(tokens, _mlp_layers(store, "pred.latt.v", 1))
    att, _ = scaled_dot_attention(q, key, val)
    return ad.reshape(att, (HIDDEN,))


# ------------------------------------------------------------------ decoder

@dataclass
class DecodeResult:
    pi: Tensor  # (M,)
    mu_steps: list  # t_f tensors of shape (M, 2)
    b_steps: list  # t_f tensors of shape (M, 2)
    z: np.ndarray  # (M, LATENT_DIM) latent draws, recorded for reproducibility

    @property
    def n_modes(self):
        return self.pi.data.shape[0]

    def mu_array(self) -> np.ndarray:
        return np.stack([m.data for m in self.mu_steps], axis=1)  # (M, t_f, 2)

    def b_array(self) -> np.ndarray:
        return np.stack([b.data for b in self.b_steps], axis=1)


@dataclass
class PredictionSet:
    """Frozen (numpy) view of a decoded mixture."""

    pi: np.ndarray  # (M,)
    mu: np.ndarray  # (M, t_f, 2)
    b: np.ndarray  # (M, t_f, 2)
    z: np.ndarray

    def to_json(self) -> dict:
        return {"pi": self.pi.tolist(), "mu": self.mu.tolist(), "b": self.b.tolist()}


def decode(context: Tensor, z: np.ndarray, store, t_f: int = 12,
           diagnostics=None) -> DecodeResult:
    """Laplace mixture decoder.

    One latent draw per mode is added to the fused context; an MLP scores
    mode probabilities, a GRU recovers the time dimension, and two heads emit
    per-step locations (as accumulated offsets) and positive scales.
    """
    M = z.shape[0]
    ctx = ad.add(ad.stack_rows([context] * M), Tensor(z))  # (M, D)
    logits = mlp(ctx, _mlp_layers(store, "pred.pi"))  # (M, 1)
    pi = ad.reshape(ad.softmax(ad.transpose(logits), axis=-1), (M,))
    if diagnostics is not None:
        diagnostics.append(("mode_probs", pi.data.copy()))

    gru = _gru(store, "pred.gru")
    h = ctx
    mu_prev = Tensor(np.zeros((M, 2)))
    mu_steps, b_steps = [], []
    for _ in range(t_f):
        h = gru_step(ctx, h, gru)
        delta = mlp(h, _mlp_layers(store, "pred.mu"))
        mu_prev = ad.add(mu_prev, delta)
        mu_steps.append(mu_prev)
        raw = mlp(h, _mlp_layers(store, "pred.scale"))
        b_steps.append(ad.add(ad.softplus(raw), SCALE_FLOOR))
    return DecodeResult(pi, mu_steps, b_steps, z)


def prediction_set(result: DecodeResult) -> PredictionSet:
    return PredictionSet(result.pi.data.copy(), result.mu_array(), result.b_array(),
                         result.z.copy())


# ------------------------------------------------------------------- losses

@dataclass
class LossBreakdown:
    lane: Tensor
    reg: Tensor
    cls: Tensor
    velocity: Tensor
    angle: Tensor
    best_mode: int
    lambdas: tuple = (LAMBDA_LANE, LAMBDA_VELOCITY, LAMBDA_ANGLE)
    total: Tensor = field(init=False)

    def __post_init__(self):
        l1, l2, l3 = self.lambdas
        weighted = ad.add(
            ad.add(ad.mul(self.lane, l1), ad.mul(self.velocity, l2)),
            ad.mul(self.angle, l3),
        )
        self.total = ad.add(ad.add(weighted, self.reg), self.cls)

    def values(self) -> dict:
        return {
            "lane": self.lane.item(),
            "reg": self.reg.item(),
            "cls": self.cls.item(),
            "velocity": self.velocity.item(),
            "angle": self.angle.item(),
            "total": self.total.item(),
        }


def _vector_norm(diff) -> Tensor:
    # tiny epsilon keeps the sqrt derivative finite for zero-length vectors
    return ad.sqrt(ad.add(ad.tsum(ad.mul(diff, diff)), 1e-30))


def best_mode(result: DecodeResult, future: np.ndarray) -> int:
    """Winner-take-all mode: minimum summed L2 error, ties to the lowest index."""
    mu = result.mu_array()
    errs = np.linalg.norm(mu - future[None, :, :], axis=2).sum(axis=1)
    return int(np.argmin(errs))


def regression_loss(result: DecodeResult, future: np.ndarray):
    """Per-step Laplace NLL of the winning mode, averaged over steps; the
    per-step value sums the two coordinate dimensions."""
    m_star = best_mode(result, future)
    t_f = len(result.mu_steps)
    total = None
    for t in range(t_f):
        mu_t = ad.take_row(result.mu_steps[t], m_star)
        b_t = ad.take_row(result.b_steps[t], m_star)
        nll = ad.tsum(laplace_nll(future[t], mu_t, b_t))
        total = nll if total is None else ad.add(total, nll)
    return ad.mul(total, 1.0 / t_f), m_star


def classification_loss(result: DecodeResult, m_star: int) -> Tensor:
    p = ad.take_row(result.pi, m_star)
    return ad.mul(ad.log(ad.clamp_min(p, LOG_CLAMP)), -1.0)


def velocity_loss(result: DecodeResult, future: np.ndarray, m_star: int,
                  x0=(0.0, 0.0)) -> Tensor:
    """Laplace NLL between per-step displacement norms of ground truth and the
    winning mode; the scale is the mean of the two coordinate scales."""
    x0 = np.asarray(x0, dtype=np.float64)
    t_f = len(result.mu_steps)
    gt_prev = x0
    total = None
    mu_prev = Tensor(np.asarray(x0))
    for t in range(t_f):
        v_gt = float(np.linalg.norm(future[t] - gt_prev))
        gt_prev = future[t]
        mu_t = ad.take_row(result.mu_steps[t], m_star)
        v_hat = _vector_norm(ad.sub(mu_t, mu_prev))
        mu_prev = mu_t
        b_t = ad.tmean(ad.take_row(result.b_steps[t], m_star))
        nll = laplace_nll(np.float64(v_gt), v_hat, b_t)
        total = nll if total is None else ad.add(total, nll)
    return ad.mul(total, 1.0 / t_f)


def angle_loss(result: DecodeResult, future: np.ndarray, m_star: int,
               x0=(0.0, 0.0), eps: float = 1e-9) -> Tensor:
    """Mean of -cos(angle difference) between bearings from the start point,
    skipping steps where either trajectory sits on the start point.

    Uses -cos(a - b) = -(dx cos b + dy sin b) / r so no arctan is required on
    the differentiable side.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    terms = []
    for t in range(len(result.mu_steps)):
        gt_vec = future[t] - x0
        gt_norm = np.linalg.norm(gt_vec)
        mu_t = ad.take_row(result.mu_steps[t], m_star)
        pred_vec = mu_t.data - x0
        if gt_norm < eps or np.linalg.norm(pred_vec) < eps:
            continue
        theta = math.atan2(gt_vec[1], gt_vec[0])
        d = ad.sub(mu_t, x0)
        r = _vector_norm(d)
        proj = ad.add(
            ad.mul(ad.take_row(d, 0), math.cos(theta)),
            ad.mul(ad.take_row(d, 1), math.sin(theta)),
        )
        terms.append(ad.mul(ad.div(proj, r), -1.0))
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return ad.mul(total, 1.0 / len(terms))


def total_loss(lane, reg, cls, velocity, angle, m_star,
               lambdas=(LAMBDA_LANE, LAMBDA_VELOCITY, LAMBDA_ANGLE)) -> LossBreakdown:
    return LossBreakdown(lane, reg, cls, velocity, angle, m_star, lambdas)
