"""Command-line entry points: generate / train / eval / predict / ablate.

Reports are written as JSON + CSV with rendered PNG figures alongside
(disable with --no-figures). Errors exit nonzero with one structured JSON
object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import plots
from .config import RunConfig
from .model import TrajectoryModel, build_sample
from .scene import parse_scene
from .synthetic import GeneratorConfig
from .train import build_samples, evaluate, load_split, train, write_corpus

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        raise
    except Exception as err:  # structured error contract
        payload = {"error": type(err).__name__, "message": str(err)}
        print(json.dumps(payload), file=sys.stderr)
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trajgraph",
        description="Scene-graph multimodal trajectory prediction harness",
    )
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("generate", help="write a synthetic scene corpus")
    p.add_argument("--config", type=Path, help="generator TOML (counts, noise, horizon)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--config", type=Path, help="run config TOML")
    _add_config_overrides(p)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the val split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--split", default="val")
    p.add_argument("--mode", help="override the refinement branch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--scene-figures", type=int, default=4,
                   help="number of per-scene figures to render")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict one scene file")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--mode", help="override the refinement branch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="run the topology / component switch matrix")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--rows", choices=("topology", "components", "all"), default="all")
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return parser


def _add_config_overrides(p):
    p.add_argument("--mode", help="semanticformer | semanticformer-r | semanticformer-r-gt")
    p.add_argument("--topology", help="knowledge | fully_connected | unconnected")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--no-meta-paths", action="store_true")
    p.add_argument("--no-map-topology", action="store_true")
    p.add_argument("--no-agent-map", action="store_true")
    p.add_argument("--no-agent-agent", action="store_true")


def _run_config(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        doc = tomllib.loads(Path(args.config).read_text())
    for key in ("mode", "topology", "epochs", "seed", "batch_size"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    for flag, key in (("no_meta_paths", "meta_paths"), ("no_map_topology", "map_topology"),
                      ("no_agent_map", "agent_map"), ("no_agent_agent", "agent_agent")):
        if getattr(args, flag, False):
            doc[key] = False
    return RunConfig.from_dict(doc)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    config = GeneratorConfig.from_toml(args.config.read_text()) if args.config else None
    if config is None:
        config = GeneratorConfig()
        config.counts.update(straight_follow=150, lane_change=150,
                             connector_turn=120, pedestrian_crossing=80)
    manifest = write_corpus(args.out, config, args.seed)
    print(json.dumps({"corpus": str(args.out), **manifest}, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    model = TrajectoryModel(cfg)
    train_samples = build_samples(load_split(args.corpus, "train"), cfg)
    logs = train(
        model, train_samples,
        log_cb=lambda l: print(
            f"epoch {l.epoch:3d} lr={l.lr:.2e} "
            + " ".join(f"{k}={v:.4f}" for k, v in sorted(l.losses.items()))
            + f" ({l.seconds:.1f}s)",
            flush=True,
        ),
    )
    val_samples = build_samples(load_split(args.corpus, "val"), cfg)
    out = evaluate(model, val_samples, seed=cfg.seed)
    aggregate = out.report.aggregate()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out, extra_meta={"epochs": cfg.epochs, "train_scenes": len(train_samples)})
    log_path = args.out.with_suffix(".train.json")
    log_path.write_text(json.dumps(
        {
            "config": cfg.to_dict(),
            "epochs": [l.to_json() for l in logs],
            "val_metrics": aggregate,
            "val_baseline": out.baseline.aggregate(),
        },
        sort_keys=True, indent=2,
    ))
    if not args.no_figures:
        plots.save_training_curves(logs, args.out.with_suffix(".train.png"))
    print(json.dumps({"checkpoint": str(args.out), "val": aggregate}, sort_keys=True))
    return 0


def _check_horizon(model: TrajectoryModel, samples):
    for s in samples:
        if (s.scene.history_steps != model.cfg.history_steps
                or s.scene.future_steps != model.cfg.future_steps):
            raise ValueError(
                f"horizon mismatch: checkpoint expects "
                f"({model.cfg.history_steps}, {model.cfg.future_steps}), scene "
                f"{s.scene_id!r} has ({s.scene.history_steps}, {s.scene.future_steps})"
            )


def cmd_eval(args) -> int:
    model, _ = TrajectoryModel.load(args.checkpoint)
    mode = args.mode or model.cfg.mode
    samples = build_samples(load_split(args.corpus, args.split), model.cfg)
    _check_horizon(model, samples)
    out = evaluate(model, samples, seed=args.seed, mode=mode)
    out_dir = plots.ensure_dir(args.out)
    (out_dir / "report.json").write_text(out.report.to_json())
    (out_dir / "report.csv").write_text(out.report.to_csv())
    (out_dir / "baseline.json").write_text(out.baseline.to_json())
    if out.refinements:
        (out_dir / "refinement.json").write_text(
            json.dumps(out.refinements, sort_keys=True, indent=2)
        )
    if not args.no_figures:
        fig_dir = plots.ensure_dir(out_dir / "figures")
        plots.save_metrics_figure(out.report, out.baseline, fig_dir / "metrics.png")
        plots.save_error_histogram(out.report, fig_dir / "fde_histogram.png")
        for detail in out.scene_details[: args.scene_figures]:
            sample = detail["sample"]
            anchors = model.anchors_for(sample) if mode != "semanticformer" else None
            selected = (detail["refinement"].selected
                        if detail["refinement"] is not None else None)
            plots.save_scene_figure(sample, detail["prediction"],
                                    fig_dir / f"scene_{sample.scene_id}.png",
                                    selected=selected, anchors=anchors)
    print(json.dumps({"report": str(out_dir / "report.json"),
                      "aggregate": out.report.aggregate()}, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    model, _ = TrajectoryModel.load(args.checkpoint)
    mode = args.mode or model.cfg.mode
    sd = parse_scene(args.scene.read_text())
    sample = build_sample(sd, model.cfg, scene_id=args.scene.stem)
    _check_horizon(model, [sample])
    diag: list = []
    pset, fwd = model.predict(sample, seed=args.seed, diagnostics=diag)

    refinement = None
    if mode in ("semanticformer-r", "semanticformer-r-gt"):
        from .train import refine_prediction

        refinement = refine_prediction(model, sample, pset, mode)
    anchors = model.anchors_for(sample)

    out_dir = plots.ensure_dir(args.out)
    payload = {
        "scene": str(args.scene),
        "mode": mode,
        "config": model.cfg.to_dict(),
        "seed": args.seed,
        "prediction": pset.to_json(),
        "lane_scores": fwd.scores.data.tolist(),
        "lane_candidates": list(map(int, sample.candidates)),
        "anchors": [a.to_json() for a in anchors],
    }
    if refinement is not None:
        payload["refinement"] = refinement.to_json()
    (out_dir / "prediction.json").write_text(json.dumps(payload, sort_keys=True, indent=2))

    lines = ["mode,step,x,y,prob"]
    for m in range(len(pset.mu)):
        for t in range(pset.mu.shape[1]):
            lines.append(
                f"{m},{t},{float(pset.mu[m, t, 0])!r},{float(pset.mu[m, t, 1])!r},"
                f"{float(pset.pi[m])!r}"
            )
    (out_dir / "trajectories.csv").write_text("\n".join(lines) + "\n")
    if not args.no_figures:
        plots.save_scene_figure(
            sample, pset, out_dir / "scene.png",
            selected=refinement.selected if refinement is not None else None,
            anchors=anchors,
        )
    print(json.dumps({"prediction": str(out_dir / "prediction.json"),
                      "n_modes": int(len(pset.mu)),
                      "refined": refinement.to_json()["selected"] if refinement else None},
                     sort_keys=True))
    return 0


ABLATION_TOPOLOGIES = ("knowledge", "fully_connected", "unconnected")
ABLATION_COMPONENT_ROWS = (
    {"meta_paths": True, "map_topology": True, "agent_map": True, "agent_agent": True},
    {"meta_paths": False, "map_topology": True, "agent_map": True, "agent_agent": True},
    {"meta_paths": True, "map_topology": False, "agent_map": True, "agent_agent": True},
    {"meta_paths": False, "map_topology": False, "agent_map": True, "agent_agent": True},
    {"meta_paths": False, "map_topology": False, "agent_map": False, "agent_agent": True},
    {"meta_paths": False, "map_topology": False, "agent_map": False, "agent_agent": False},
)


def run_ablation(corpus, rows: str, epochs: int, seed: int):
    """Train/evaluate each switch configuration on the same fixed-seed corpus."""
    results = []
    configs = []
    if rows in ("topology", "all"):
        for topology in ABLATION_TOPOLOGIES:
            configs.append({"label": f"topology={topology}", "topology": topology})
    if rows in ("components", "all"):
        for row in ABLATION_COMPONENT_ROWS:
            label = "components=" + "".join(
                "1" if row[k] else "0"
                for k in ("meta_paths", "map_topology", "agent_map", "agent_agent")
            )
            configs.append({"label": label, **row})
    train_scenes = load_split(corpus, "train")
    val_scenes = load_split(corpus, "val")
    for spec in configs:
        label = spec.pop("label")
        cfg = RunConfig(mode="semanticformer", epochs=epochs, seed=seed, **spec)
        model = TrajectoryModel(cfg)
        samples = build_samples(train_scenes, cfg)
        train(model, samples)
        out = evaluate(model, build_samples(val_scenes, cfg), seed=seed)
        results.append({"label": label, "config": cfg.to_dict(),
                        "val": out.report.aggregate()})
        print(json.dumps({"ablation": label, "minADE_5": out.report.aggregate()["minADE_5"]}),
              flush=True)
    return results


def cmd_ablate(args) -> int:
    results = run_ablation(args.corpus, args.rows, args.epochs, args.seed)
    out_dir = plots.ensure_dir(args.out)
    (out_dir / "ablation.json").write_text(json.dumps(results, sort_keys=True, indent=2))
    if not args.no_figures:
        _ablation_figure(results, out_dir / "ablation.png")
    print(json.dumps({"ablation": str(out_dir / "ablation.json"),
                      "rows": [r["label"] for r in results]}, sort_keys=True))
    return 0


def _ablation_figure(results, path):
    import matplotlib.pyplot as plt

    labels = [r["label"] for r in results]
    values = [r["val"]["minADE_5"] for r in results]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.1), 3.4))
    ax.bar(range(len(labels)), values, color="#4878d0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("val minADE_5 [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


if __name__ == "__main__":
    sys.exit(main())
