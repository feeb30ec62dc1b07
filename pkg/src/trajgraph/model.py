"""End-to-end model: scene -> sample -> forward pass -> losses / predictions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import predictor as pred
from .config import RunConfig
from .encoder import (
    ScenePrep,
    connected_neighbor_rows,
    encode_sequences,
    fuse_agent_lane,
    han_encode,
    han_template_ids,
    neighbor_rows_from_instances,
    register_encoder_params,
    relatedness_from_graph,
)
from .graph import SceneGraph, compact, strip_edge_kinds, to_topology
from .metapath import (
    element_points,
    extract_meta_paths,
    generate_anchor_paths,
    meta_path_neighbors,
    route_reachable_lane_nodes,
)
from .nn import autodiff as ad
from .nn.layers import mlp
from .nn.optim import Adam
from .nn.params import ParamStore, load_checkpoint, save_checkpoint
from .scene import SceneDescription, build_graph, normalize_frame


@dataclass
class SceneSample:
    """A normalized scene compiled for the forward pass."""

    scene: SceneDescription
    graph: SceneGraph  # compacted + component-masked knowledge graph
    relational: SceneGraph  # topology view consumed by the relational stages
    prep: ScenePrep
    neighbor_rows: dict
    candidates: list  # lane entity node ids eligible for scoring
    candidate_rows: list  # rows into the entity matrix
    gt_future: np.ndarray  # (t_f, 2) in the target frame
    gt_lane_cols: list  # candidate column per future step, -1 if absent
    gt_speed: np.ndarray  # (t_f,) ground-truth speed profile, m/s
    scene_id: str = ""
    meta: dict = field(default_factory=dict)


def _entity_polyline(prep: ScenePrep, position: int) -> np.ndarray:
    n_a, n_s = prep.n_agents, len(prep.snippet_nodes)
    if position < n_a + n_s:
        return prep.slice_chains[position - n_a][:, 1:3]
    return prep.pose_chains[position - n_a - n_s][:, 0:2]


def build_sample(sd_raw: SceneDescription, cfg: RunConfig, scene_id: str = "") -> SceneSample:
    sd = normalize_frame(sd_raw)
    g = build_graph(sd)
    if cfg.compact:
        g = compact(g)
    masked = cfg.masked_edge_kinds()
    if masked:
        g = strip_edge_kinds(g, masked)
    relational = to_topology(g, cfg.topology)
    prep = ScenePrep.from_graph(g)

    neighbor_rows: dict = {}
    instances = []
    if cfg.topology == "knowledge":
        if cfg.meta_paths:
            instances = extract_meta_paths(g, g.target)
            neighbor_rows = neighbor_rows_from_instances(prep, meta_path_neighbors(instances))
    elif cfg.topology == "fully_connected":
        neighbor_rows = connected_neighbor_rows(prep, relational)

    lane_entities = list(prep.snippet_nodes) + list(prep.connector_nodes)
    if cfg.topology == "knowledge" and instances:
        candidates = route_reachable_lane_nodes(g, g.target, instances)
        if not candidates:
            candidates = lane_entities
    else:
        candidates = lane_entities
    if not lane_entities:
        raise ValueError("no lane context")
    candidate_rows = [prep.entity_positions[c] for c in candidates]

    future = sd.future_of(sd.target).points
    col_of = {node: i for i, node in enumerate(candidates)}
    gt_lane_cols = []
    for t in range(len(future)):
        best_node, best_d = None, np.inf
        for node in lane_entities:
            poly = _entity_polyline(prep, prep.entity_positions[node])
            d, _ = geo.project_to_polyline(poly, future[t])
            if d < best_d:
                best_node, best_d = node, d
        gt_lane_cols.append(col_of.get(best_node, -1))

    x0 = np.zeros(2)
    prev = np.vstack([x0, future[:-1]])
    gt_speed = np.linalg.norm(future - prev, axis=1) / sd.dt
    return SceneSample(
        sd, g, relational, prep, neighbor_rows, candidates, candidate_rows,
        future, gt_lane_cols, gt_speed, scene_id, dict(sd.meta),
    )


@dataclass
class ForwardOutput:
    decode: pred.DecodeResult
    scores: object  # Tensor (t_f, n_candidates)
    losses: pred.LossBreakdown | None


class TrajectoryModel:
    """Owns the parameter store and the full differentiable pipeline."""

    CHECKPOINT_KIND = "trajgraph-model"

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.store = ParamStore(seed=cfg.seed)
        register_encoder_params(self.store, topology=cfg.topology)
        pred.register_predictor_params(self.store, t_f=cfg.future_steps)

    # ---------------------------------------------------------- forward

    def forward(self, sample: SceneSample, z: np.ndarray, with_loss: bool = True,
                diagnostics=None) -> ForwardOutput:
        cfg = self.cfg
        prep = sample.prep
        emb = encode_sequences(prep, self.store)
        related = relatedness_from_graph(prep, sample.relational)
        fused = fuse_agent_lane(emb, prep, related, self.store)
        unified = han_encode(fused, prep, sample.neighbor_rows, self.store,
                             diagnostics=diagnostics)

        entity = unified.entity_matrix()
        lane_matrix = ad.gather_rows(entity, sample.candidate_rows)
        p_fused = ad.take_row(fused.agents, prep.target_agent)
        z_target = ad.take_row(unified.agents, prep.target_agent)

        scores = pred.score_lanes(emb.target_steps, p_fused, lane_matrix, self.store,
                                  t_f=cfg.future_steps, diagnostics=diagnostics)
        l_att = pred.top_k_lane_context(scores, lane_matrix, p_fused, self.store, k=cfg.top_k)
        context = mlp(
            ad.reshape(ad.concat([p_fused, l_att, z_target], axis=0), (1, 3 * 32)),
            [(self.store.params[f"pred.context.{i}.W"], self.store.params[f"pred.context.{i}.b"])
             for i in range(2)],
        )
        context = ad.reshape(context, (32,))
        result = pred.decode(context, z, self.store, t_f=cfg.future_steps,
                             diagnostics=diagnostics)

        losses = None
        if with_loss:
            lane = pred.lane_loss(scores, sample.gt_lane_cols)
            reg, m_star = pred.regression_loss(result, sample.gt_future)
            cls = pred.classification_loss(result, m_star)
            vel = pred.velocity_loss(result, sample.gt_future, m_star)
            ang = pred.angle_loss(result, sample.gt_future, m_star)
            losses = pred.total_loss(
                lane, reg, cls, vel, ang, m_star,
                (cfg.lambda_lane, cfg.lambda_velocity, cfg.lambda_angle),
            )
        return ForwardOutput(result, scores, losses)

    def draw_latents(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((self.cfg.n_modes, pred.LATENT_DIM))

    def predict(self, sample: SceneSample, seed: int = 0, diagnostics=None):
        rng = np.random.default_rng(seed)
        out = self.forward(sample, self.draw_latents(rng), with_loss=False,
                           diagnostics=diagnostics)
        return pred.prediction_set(out.decode), out

    def anchors_for(self, sample: SceneSample, count: int = 5):
        return generate_anchor_paths(sample.graph, sample.graph.target, count=count)

    # ------------------------------------------------------- persistence

    def save(self, path, extra_meta: dict | None = None):
        meta = {
            "kind": self.CHECKPOINT_KIND,
            "config": self.cfg.to_dict(),
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, self.store.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> tuple["TrajectoryModel", dict]:
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != cls.CHECKPOINT_KIND:
            raise ValueError(f"not a model checkpoint: {path}")
        cfg = RunConfig.from_dict(meta["config"])
        model = cls(cfg)
        model.store.load_arrays(arrays)
        return model, meta

    def optimizer(self) -> Adam:
        return Adam(self.store, lr=self.cfg.lr, decay_factor=self.cfg.lr_decay,
                    decay_every=self.cfg.lr_decay_every)
