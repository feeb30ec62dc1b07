"""Run configuration: prediction mode, ablation switches, hyperparameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .graph import EdgeKind, SWITCH_KINDS_ALL

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODES = ("semanticformer", "semanticformer-r", "semanticformer-r-gt")
TOPOLOGIES = ("knowledge", "fully_connected", "unconnected")
DEFAULT_MODES_PER_VARIANT = {
    "semanticformer": 5,  # direct prediction, no refinement
    "semanticformer-r": 25,  # decode 25, refine to 5
    "semanticformer-r-gt": 25,
}

# component switch -> the edge kinds it masks out at build time
COMPONENT_EDGE_KINDS = {
    "meta_paths": tuple(SWITCH_KINDS_ALL),
    "map_topology": (
        EdgeKind.HAS_NEXT_LANE,
        EdgeKind.HAS_NEXT_SNIPPET,
        EdgeKind.CONNECTS_INCOMING,
        EdgeKind.CONNECTS_OUTGOING,
        EdgeKind.IS_SLICE_ON_STOP_AREA,
        EdgeKind.IS_POSE_ON_STOP_AREA,
    ),
    "agent_map": (EdgeKind.IS_ON_MAP_ELEMENT,),
    "agent_agent": (
        EdgeKind.RELATED_LONGITUDINAL,
        EdgeKind.RELATED_LATERAL,
        EdgeKind.RELATED_INTERSECTING,
        EdgeKind.RELATED_PEDESTRIAN,
    ),
}


@dataclass
class RunConfig:
    mode: str = "semanticformer"
    topology: str = "knowledge"
    compact: bool = True
    meta_paths: bool = True
    map_topology: bool = True
    agent_map: bool = True
    agent_agent: bool = True
    n_modes: int = 0  # 0 = derive from mode
    top_k: int = 2
    batch_size: int = 32
    epochs: int = 12
    lr: float = 1e-3
    lr_decay: float = 0.7
    lr_decay_every: int = 5
    lambda_lane: float = 0.95
    lambda_velocity: float = 1.0
    lambda_angle: float = 1.0
    seed: int = 0
    history_steps: int = 4
    future_steps: int = 12

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.n_modes <= 0:
            self.n_modes = DEFAULT_MODES_PER_VARIANT[self.mode]

    @property
    def refines(self) -> bool:
        return self.mode in ("semanticformer-r", "semanticformer-r-gt")

    def masked_edge_kinds(self):
        kinds = []
        for switch, masked in COMPONENT_EDGE_KINDS.items():
            if not getattr(self, switch):
                kinds.extend(masked)
        return kinds

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        return cls.from_dict(tomllib.loads(text))
