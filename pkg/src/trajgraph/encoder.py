"""Latent node embeddings: sequence encoders, agent-lane fusion, hierarchical
(node-level + semantic-level) attention over the scene graph.

Hidden size D=32 everywhere; 8 attention heads in the hierarchical stage;
one hierarchical layer. Nodes without meta-path neighbors keep their input
embedding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graph as gm
from .graph import EdgeKind, NodeKind, SceneGraph
from .metapath import TEMPLATE_IDS
from .nn import autodiff as ad
from .nn.autodiff import Tensor
from .nn.layers import gru_params, gru_step, mlp, scaled_dot_attention

HIDDEN = 32
HEADS = 8
CONNECTED_PSEUDO_PATH = "connected"

# node kinds with empty feature vectors share a learned embedding table
EMPTY_FEATURE_KINDS = tuple(k for k in NodeKind if k not in gm.FEATURE_LENGTHS)
KIND_EMBED_INDEX = {k: i for i, k in enumerate(EMPTY_FEATURE_KINDS)}

# fixed input scaling (meters-scale features down to O(1) for the init scheme)
SP_SCALE = np.array([1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.2, 1.0, 0.2])
PARTICIPANT_SCALE = np.array([1.0] * 5 + [0.2, 0.2])
SLICE_SCALE = np.array([0.25, 0.05, 0.05, 1.0])
POSE_SCALE = np.array([0.05, 0.05, 1.0])
SNIPPET_SCALE = np.array([0.05])


@dataclass
class AgentChain:
    participant: int
    sp_nodes: list  # time order, last = t=0 head
    sp_features: np.ndarray  # (h, 9)
    participant_features: np.ndarray  # (7,)

    @property
    def head(self) -> int:
        return self.sp_nodes[-1]


@dataclass
class ScenePrep:
    """Graph-derived chains and indexes the encoders consume."""

    agents: list
    snippet_nodes: list
    snippet_features: np.ndarray  # (n_snip, 1)
    slice_chains: list  # list of (len_i, 4)
    connector_nodes: list
    pose_chains: list  # list of (len_i, 3)
    target_agent: int  # index into agents
    is_on: dict  # agent index -> list of (element node, probability)
    entity_positions: dict = field(default_factory=dict)  # node -> row in entity matrix

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def n_entities(self):
        return len(self.agents) + len(self.snippet_nodes) + len(self.connector_nodes)

    def entity_nodes(self):
        return [a.head for a in self.agents] + list(self.snippet_nodes) + list(self.connector_nodes)

    @classmethod
    def from_graph(cls, g: SceneGraph) -> "ScenePrep":
        by_participant: dict[int, list[int]] = {}
        for sp in g.nodes_of_kind(NodeKind.SCENE_PARTICIPANT):
            owners = g.neighbors(sp, EdgeKind.IS_SCENE_PARTICIPANT)
            if not owners:
                raise ValueError(f"SceneParticipant {sp} has no owning Participant")
            by_participant.setdefault(owners[0], []).append(sp)

        agents = []
        for participant in sorted(by_participant):
            sps = sorted(by_participant[participant])  # insertion order = time order
            feats = np.stack([g.nodes[s].features for s in sps])
            agents.append(
                AgentChain(participant, sps, feats,
                           np.asarray(g.nodes[participant].features))
            )

        snippet_nodes = g.nodes_of_kind(NodeKind.LANE_SNIPPET)
        slice_chains = []
        for node in snippet_nodes:
            chain = _walk_chain(g, node, NodeKind.LANE_SLICE)
            if not chain:
                raise ValueError(f"empty slice chain for snippet node {node}")
            slice_chains.append(np.stack([g.nodes[s].features for s in chain]))
        connector_nodes = g.nodes_of_kind(NodeKind.LANE_CONNECTOR)
        pose_chains = []
        for node in connector_nodes:
            chain = _walk_chain(g, node, NodeKind.ORDERED_POSE)
            if not chain:
                raise ValueError(f"empty pose chain for connector node {node}")
            pose_chains.append(np.stack([g.nodes[s].features for s in chain]))

        heads = [a.head for a in agents]
        if g.target not in heads:
            raise ValueError(f"target node {g.target} is not an agent chain head")

        is_on = {}
        element_kinds = (NodeKind.LANE_SNIPPET, NodeKind.LANE_CONNECTOR)
        for idx, agent in enumerate(agents):
            rel = [
                (e.dst, float(e.attrs["probability"]))
                for e in g.out_edges(agent.head)
                if e.kind == EdgeKind.IS_ON_MAP_ELEMENT and g.kind_of(e.dst) in element_kinds
            ]
            is_on[idx] = rel

        prep = cls(
            agents, snippet_nodes,
            np.array([[g.nodes[n].features[0]] for n in snippet_nodes]).reshape(-1, 1),
            slice_chains, connector_nodes, pose_chains,
            heads.index(g.target), is_on,
        )
        prep.entity_positions = {n: i for i, n in enumerate(prep.entity_nodes())}
        return prep


def _walk_chain(g: SceneGraph, head: int, want: NodeKind) -> list:
    chain = []
    cursor = [c for c in g.neighbors(head, EdgeKind.HAS_NEXT_SLICE) if g.kind_of(c) == want]
    while cursor:
        node = cursor[0]
        chain.append(node)
        cursor = [c for c in g.neighbors(node, EdgeKind.HAS_NEXT_SLICE) if g.kind_of(c) == want]
    return chain


@dataclass
class NodeEmbeddings:
    agents: Tensor  # (n_agents, D)
    snippets: Tensor  # (n_snip, D)
    connectors: Tensor  # (n_conn, D)
    target_steps: Tensor  # (h, D) per-step motion states of the target agent

    def entity_matrix(self) -> Tensor:
        parts = [m for m in (self.agents, self.snippets, self.connectors) if m.data.shape[0]]
        return ad.concat(parts, axis=0)


# ------------------------------------------------------------- param builder

def han_template_ids(topology: str) -> tuple:
    if topology == "fully_connected":
        return (CONNECTED_PSEUDO_PATH,)
    if topology == "unconnected":
        return ()
    return TEMPLATE_IDS


def register_encoder_params(store, topology: str = "knowledge"):
    """All encoder weights; hidden size fixed at 32, 8 attention heads.

    Hierarchical-attention weights are allocated per template of the chosen
    topology so that every registered parameter is reachable by gradients.
    """
    D = HIDDEN
    store.mlp("enc.sp_in", (9, D, D))
    store.mlp("enc.slice_in", (4, D, D))
    store.mlp("enc.pose_in", (3, D, D))
    store.mlp("enc.agent_h0", (7, D))
    store.mlp("enc.snippet_h0", (1, D))
    store.embedding("enc.kind_embed", len(EMPTY_FEATURE_KINDS), D)
    for chain in ("agent", "slice", "pose"):
        store.linear(f"enc.gnn.{chain}.self", D, D)
        store.linear(f"enc.gnn.{chain}.prev", D, D)
        gru_params(store, f"enc.gru.{chain}", D, D)
    for eq in ("agent_from_lane", "lane_from_agent", "connector_from_agent"):
        store.mlp(f"enc.fuse.{eq}.q", (D, D))
        store.mlp(f"enc.fuse.{eq}.k", (D, D))
        store.mlp(f"enc.fuse.{eq}.v", (D, D))
    templates = han_template_ids(topology)
    for tid in templates:
        for k in range(HEADS):
            # type-specific projections; snippets and connectors are one type
            store.mlp(f"han.{tid}.head{k}.proj.agent", (D, D))
            store.mlp(f"han.{tid}.head{k}.proj.lane", (D, D))
            store.register(f"han.{tid}.head{k}.att",
                           store.xavier(f"han.{tid}.head{k}.att", (2 * D, 1)))
        store.mlp(f"han.{tid}.out", (HEADS * D, D))
    if templates:
        store.mlp("han.semantic.proj", (D, D))
        store.register("han.semantic.q", store.xavier("han.semantic.q", (D, 1)))


def _mlp_layers(store, name, n_layers=2):
    return [(store.params[f"{name}.{i}.W"], store.params[f"{name}.{i}.b"]) for i in range(n_layers)]


def _gru(store, name):
    return {k: store.params[f"{name}.{k}"] for k in ("Wz", "bz", "Wr", "br", "Wh", "bh")}


# --------------------------------------------------------------- sequences

def _encode_chain_group(chains, order, in_layers, gnn_self, gnn_prev, gru, h0_rows):
    """Encode equal-length chains as one batch; returns final hidden rows and
    per-step states, both in group order."""
    steps = len(chains[0])
    n = len(chains)
    h = h0_rows
    prev_proj = None
    states = []
    for t in range(steps):
        x = Tensor(np.stack([c[t] for c in chains]))
        proj = mlp(x, in_layers, activation=ad.elu)
        msg = ad.add(ad.matmul(proj, gnn_self[0]), gnn_self[1])
        if prev_proj is not None:
            msg = ad.add(msg, ad.add(ad.matmul(prev_proj, gnn_prev[0]), gnn_prev[1]))
        msg = ad.elu(msg)
        prev_proj = proj
        h = gru_step(msg, h, gru)
        states.append(h)
    return h, states


def _encode_varlen(chains, in_layers, gnn_self, gnn_prev, gru, h0_matrix):
    """Group variable-length chains by length, encode per group, restore order."""
    n = len(chains)
    finals: list = [None] * n
    by_len: dict[int, list[int]] = {}
    for i, c in enumerate(chains):
        by_len.setdefault(len(c), []).append(i)
    for length in sorted(by_len):
        idxs = by_len[length]
        h0 = ad.gather_rows(h0_matrix, idxs)
        final, _ = _encode_chain_group(
            [chains[i] for i in idxs], idxs, in_layers, gnn_self, gnn_prev, gru, h0
        )
        for row, i in enumerate(idxs):
            finals[i] = ad.take_row(final, row)
    return ad.stack_rows(finals) if finals else Tensor(np.zeros((0, HIDDEN)))


def encode_sequences(prep: ScenePrep, store) -> NodeEmbeddings:
    """Chain encoders: per-step feature MLP, one chain message round, GRU.

    Initial hidden states come from the owner node: participant type/size for
    agents, snippet length for lane snippets, and the learned kind embedding
    for (featureless) lane connectors.
    """
    D = HIDDEN
    # agents: all chains share the history length
    agent_chains = [a.sp_features * SP_SCALE for a in prep.agents]
    h0 = mlp(Tensor(np.stack([a.participant_features * PARTICIPANT_SCALE
                              for a in prep.agents])),
             _mlp_layers(store, "enc.agent_h0", 1))
    final, states = _encode_chain_group(
        agent_chains, list(range(len(agent_chains))),
        _mlp_layers(store, "enc.sp_in"),
        (store.params["enc.gnn.agent.self.W"], store.params["enc.gnn.agent.self.b"]),
        (store.params["enc.gnn.agent.prev.W"], store.params["enc.gnn.agent.prev.b"]),
        _gru(store, "enc.gru.agent"), h0,
    )
    target_steps = ad.stack_rows([ad.take_row(s, prep.target_agent) for s in states])

    if prep.snippet_nodes:
        s_h0 = mlp(Tensor(prep.snippet_features * SNIPPET_SCALE),
                   _mlp_layers(store, "enc.snippet_h0", 1))
        snippets = _encode_varlen(
            [c * SLICE_SCALE for c in prep.slice_chains],
            _mlp_layers(store, "enc.slice_in"),
            (store.params["enc.gnn.slice.self.W"], store.params["enc.gnn.slice.self.b"]),
            (store.params["enc.gnn.slice.prev.W"], store.params["enc.gnn.slice.prev.b"]),
            _gru(store, "enc.gru.slice"), s_h0,
        )
    else:
        snippets = Tensor(np.zeros((0, D)))

    if prep.connector_nodes:
        row = KIND_EMBED_INDEX[NodeKind.LANE_CONNECTOR]
        c_h0 = ad.gather_rows(store.params["enc.kind_embed"],
                              [row] * len(prep.connector_nodes))
        connectors = _encode_varlen(
            [c * POSE_SCALE for c in prep.pose_chains],
            _mlp_layers(store, "enc.pose_in"),
            (store.params["enc.gnn.pose.self.W"], store.params["enc.gnn.pose.self.b"]),
            (store.params["enc.gnn.pose.prev.W"], store.params["enc.gnn.pose.prev.b"]),
            _gru(store, "enc.gru.pose"), c_h0,
        )
    else:
        connectors = Tensor(np.zeros((0, D)))
    return NodeEmbeddings(final, snippets, connectors, target_steps)


# ------------------------------------------------------------------- fusion

def relatedness_from_graph(prep: ScenePrep, relational: SceneGraph):
    """Agent -> related lane-entity rows (positions into the entity matrix).

    Knowledge graphs relate through projection edges; the fully-connected
    ablation relates every agent to every lane entity; unconnected relates
    nothing.
    """
    n_a = prep.n_agents
    lane_rows = {
        prep.entity_positions[n]: n
        for n in list(prep.snippet_nodes) + list(prep.connector_nodes)
    }
    related: dict[int, list[int]] = {i: [] for i in range(n_a)}
    if EdgeKind.CONNECTED in relational.edge_kinds_used():
        for i in range(n_a):
            related[i] = sorted(lane_rows)
        return related
    element_kinds = (NodeKind.LANE_SNIPPET, NodeKind.LANE_CONNECTOR)
    for i, agent in enumerate(prep.agents):
        rows = []
        for e in relational.out_edges(agent.head):
            if e.kind != EdgeKind.IS_ON_MAP_ELEMENT:
                continue
            if relational.kind_of(e.dst) not in element_kinds:
                continue
            pos = prep.entity_positions.get(e.dst)
            if pos is not None and pos not in rows:
                rows.append(pos)
        related[i] = rows
    return related


def fuse_agent_lane(emb: NodeEmbeddings, prep: ScenePrep, related: dict, store) -> NodeEmbeddings:
    """Residual cross-attention: agents attend to related lane entities and
    lane entities attend back to their related agents. Entities with no
    relations keep their embedding (identity residual)."""

    def cross(eq, query_row, keys_matrix):
        q = mlp(query_row, _mlp_layers(store, f"enc.fuse.{eq}.q", 1))
        k = mlp(keys_matrix, _mlp_layers(store, f"enc.fuse.{eq}.k", 1))
        v = mlp(keys_matrix, _mlp_layers(store, f"enc.fuse.{eq}.v", 1))
        out, _ = scaled_dot_attention(q, k, v)
        return out

    n_a = prep.n_agents
    lane_matrix = (
        ad.concat([m for m in (emb.snippets, emb.connectors) if m.data.shape[0]], axis=0)
        if (len(prep.snippet_nodes) + len(prep.connector_nodes))
        else None
    )

    agent_rows = []
    for i in range(n_a):
        row = ad.take_row(emb.agents, i)
        rows = related.get(i, [])
        if rows and lane_matrix is not None:
            keys = ad.gather_rows(lane_matrix, [r - n_a for r in rows])
            att = cross("agent_from_lane", ad.reshape(row, (1, HIDDEN)), keys)
            row = ad.add(row, ad.reshape(att, (HIDDEN,)))
        agent_rows.append(row)
    new_agents = ad.stack_rows(agent_rows) if agent_rows else emb.agents

    by_entity: dict[int, list[int]] = {}
    for i in range(n_a):
        for pos in related.get(i, []):
            by_entity.setdefault(pos, []).append(i)

    def update_entities(matrix, nodes, offset, eq):
        if matrix.data.shape[0] == 0:
            return matrix
        rows = []
        for j in range(matrix.data.shape[0]):
            row = ad.take_row(matrix, j)
            agents = by_entity.get(offset + j, [])
            if agents:
                keys = ad.gather_rows(emb.agents, agents)
                att = cross(eq, ad.reshape(row, (1, HIDDEN)), keys)
                row = ad.add(row, ad.reshape(att, (HIDDEN,)))
            rows.append(row)
        return ad.stack_rows(rows)

    new_snippets = update_entities(emb.snippets, prep.snippet_nodes, n_a, "lane_from_agent")
    new_connectors = update_entities(
        emb.connectors, prep.connector_nodes, n_a + len(prep.snippet_nodes),
        "connector_from_agent",
    )
    return NodeEmbeddings(new_agents, new_snippets, new_connectors, emb.target_steps)


# -------------------------------------------------- hierarchical attention

def han_encode(emb: NodeEmbeddings, prep: ScenePrep, neighbor_rows: dict, store,
               diagnostics=None) -> NodeEmbeddings:
    """One hierarchical attention layer.

    ``neighbor_rows``: template id -> {entity row -> neighbor entity rows}.
    Per template and head: project, score [h'_i || h'_j] through LeakyReLU,
    softmax over the neighbor set, aggregate with ELU; concatenate heads and
    project back to D. Semantic attention over mean-pooled per-template
    embeddings mixes the present templates; absent templates contribute the
    input embedding, so entities without any neighbors are left unchanged.
    """
    D = HIDDEN
    z0 = emb.entity_matrix()
    n = z0.data.shape[0]
    present = [tid for tid, m in neighbor_rows.items() if m]
    if not present:
        return emb

    n_a = prep.n_agents
    per_template = {}
    for tid in present:
        nmap = neighbor_rows[tid]
        head_outputs = []
        for k in range(HEADS):
            agent_block = mlp(ad.narrow(z0, 0, 0, n_a),
                              _mlp_layers(store, f"han.{tid}.head{k}.proj.agent", 1))
            blocks = [agent_block]
            if n - n_a:
                blocks.append(mlp(ad.narrow(z0, 0, n_a, n - n_a),
                                  _mlp_layers(store, f"han.{tid}.head{k}.proj.lane", 1)))
            hproj = ad.concat(blocks, axis=0)
            att_vec = store.params[f"han.{tid}.head{k}.att"]
            rows = []
            for i in range(n):
                nbrs = sorted(nmap.get(i, ()))
                if not nbrs:
                    rows.append(None)
                    continue
                hi = ad.take_row(hproj, i)
                hj = ad.gather_rows(hproj, nbrs)
                m = len(nbrs)
                hi_rep = ad.stack_rows([hi] * m)
                scores = ad.leaky_relu(
                    ad.matmul(ad.concat([hi_rep, hj], axis=1), att_vec)
                )
                alpha = ad.softmax(ad.reshape(scores, (1, m)), axis=-1)
                if diagnostics is not None:
                    diagnostics.append(("han_alpha", alpha.data.reshape(-1)))
                rows.append(ad.elu(ad.reshape(ad.matmul(alpha, hj), (D,))))
            head_outputs.append(rows)
        z_rows = []
        for i in range(n):
            if head_outputs[0][i] is None:
                z_rows.append(None)
                continue
            cat = ad.concat([head_outputs[k][i] for k in range(HEADS)], axis=0)
            z_rows.append(
                ad.reshape(
                    mlp(ad.reshape(cat, (1, HEADS * D)), _mlp_layers(store, f"han.{tid}.out", 1)),
                    (D,),
                )
            )
        per_template[tid] = z_rows

    # semantic attention over templates, scored on mean-pooled embeddings
    scores = []
    for tid in present:
        rows = [r for r in per_template[tid] if r is not None]
        pooled = ad.tmean(ad.stack_rows(rows), axis=0, keepdims=True)
        w = ad.matmul(ad.tanh(mlp(pooled, _mlp_layers(store, "han.semantic.proj", 1))),
                      store.params["han.semantic.q"])
        scores.append(ad.reshape(w, (1,)))
    beta = ad.softmax(ad.reshape(ad.concat(scores, axis=0), (1, len(present))), axis=-1)
    if diagnostics is not None:
        diagnostics.append(("han_beta", beta.data.reshape(-1)))

    out_rows = []
    for i in range(n):
        acc = None
        for t_idx, tid in enumerate(present):
            z_row = per_template[tid][i]
            if z_row is None:
                z_row = ad.take_row(z0, i)  # identity fallback per template
            term = ad.mul(z_row, ad.take_row(ad.reshape(beta, (len(present),)), t_idx))
            acc = term if acc is None else ad.add(acc, term)
        out_rows.append(acc)
    z = ad.stack_rows(out_rows)

    n_s = len(prep.snippet_nodes)
    new_agents = ad.narrow(z, 0, 0, n_a) if n_a else emb.agents
    new_snippets = ad.narrow(z, 0, n_a, n_s) if n_s else emb.snippets
    n_c = len(prep.connector_nodes)
    new_connectors = ad.narrow(z, 0, n_a + n_s, n_c) if n_c else emb.connectors
    return NodeEmbeddings(new_agents, new_snippets, new_connectors, emb.target_steps)


def neighbor_rows_from_instances(prep: ScenePrep, neighbor_map: dict) -> dict:
    """Translate node-id neighbor sets into entity-row neighbor sets."""
    rows: dict[str, dict[int, set]] = {}
    for tid, per_node in neighbor_map.items():
        row_map = {}
        for node, nbrs in per_node.items():
            if node not in prep.entity_positions:
                continue
            mapped = {
                prep.entity_positions[nb] for nb in nbrs if nb in prep.entity_positions
            }
            if mapped:
                row_map[prep.entity_positions[node]] = mapped
        if row_map:
            rows[tid] = row_map
    return rows


def connected_neighbor_rows(prep: ScenePrep, relational: SceneGraph) -> dict:
    """Neighbor rows for the fully-connected topology: one pseudo template."""
    if EdgeKind.CONNECTED not in relational.edge_kinds_used():
        return {}
    n = prep.n_entities
    return {CONNECTED_PSEUDO_PATH: {i: set(range(n)) - {i} for i in range(n)}}
