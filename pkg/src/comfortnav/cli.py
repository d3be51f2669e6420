"""Command-line pipeline driver.

Stages communicate only through files, every stage re-reads its inputs
from disk, and identical inputs plus an identical seed reproduce each
stage's outputs byte-for-byte. Subcommands: simulate, label, train,
predict, plan, eval.

Exit codes: 0 success, 2 validation failure, 3 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clustering, comfort, cost, learning, planner
from .config import PipelineConfig
from .costmap import build_costmap, load_costmap, save_costmap
from .features import texture_feature
from .geometry import load_calibration
from .rasters import read_raster
from .signals import AmplitudeSpectrum, read_state_log
from .simworld import (CameraRig, WorldMap, default_rig, export_dataset,
                       simulate_drive, striped_world)
from .geometry import CameraModel


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            config.seed = args.seed
        return args.func(args, config)
    except ValueError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - stage boundary
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="comfortnav",
                                     description="Self-supervised traversability pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a drive and export the aligned dataset")
    p.add_argument("--world", type=Path, default=None, help="world JSON (default: striped world)")
    p.add_argument("--path", type=str, default="0,0;60,0",
                   help="waypoints as 'x0,y0;x1,y1;...'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("label", parents=[common],
                       help="cluster window spectra and attach traversal costs")
    p.add_argument("--dataset", type=Path, required=True, help="simulate output directory")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", parents=[common], help="fit the patch-to-cost regressor")
    p.add_argument("--dataset", type=Path, required=True, help="labeled dataset directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common],
                       help="build a costmap from one image")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--calibration", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plan", parents=[common], help="pick a trajectory on a costmap")
    p.add_argument("--costmap", type=Path, required=True,
                   help="directory holding costmap.pgm and costmap.json")
    p.add_argument("--goal", type=str, required=True, help="vehicle-frame goal 'x,y'")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", parents=[common], help="comfort-score state logs")
    p.add_argument("logs", nargs="+",
                   help="state log CSVs; 'name=path' entries sharing a name are averaged")
    p.set_defaults(func=cmd_eval)
    return parser


def _prepare_out(args, config: PipelineConfig) -> Path:
    if args.out is None:
        raise ValueError("--out is required for this stage")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = config.to_dict()
    doc["seed"] = config.seed
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _parse_waypoints(text: str) -> list[tuple[float, float]]:
    pts = []
    for chunk in text.split(";"):
        xy = chunk.split(",")
        if len(xy) != 2:
            raise ValueError(f"bad waypoint {chunk!r}; expected 'x,y'")
        pts.append((float(xy[0]), float(xy[1])))
    return pts


def _rig_from_config(config: PipelineConfig) -> CameraRig:
    sim = config.sim
    cam = CameraModel(fx=sim.focal, fy=sim.focal, cx=sim.image_width / 2.0,
                      cy=sim.image_height / 2.0, width=sim.image_width,
                      height=sim.image_height)
    return CameraRig(camera=cam, height=sim.camera_height, pitch=sim.camera_pitch)


def cmd_simulate(args, config: PipelineConfig) -> int:
    out = _prepare_out(args, config)
    world = WorldMap.load(args.world) if args.world else striped_world()
    waypoints = _parse_waypoints(args.path)
    drive = simulate_drive(world, waypoints, speed=config.sim.speed,
                           state_rate=config.sim.state_rate,
                           image_rate=config.sim.image_rate,
                           seed=config.seed, rig=_rig_from_config(config))
    manifest = export_dataset(drive, out, config.export)
    print(f"simulate: {len(manifest['records'])} records from "
          f"{len(manifest['images'])} images, {manifest['n_windows']} windows")
    return 0


def _load_dataset(dataset: Path) -> dict:
    with open(dataset / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["_dir"] = dataset
    return manifest


def cmd_label(args, config: PipelineConfig) -> int:
    out = _prepare_out(args, config)
    manifest = _load_dataset(args.dataset)
    records = manifest["records"]
    if not records:
        raise ValueError("dataset has no records to label")
    spectra = np.load(args.dataset / manifest["spectra"])
    k = config.cluster.k

    record_features = np.stack([
        texture_feature(read_raster(args.dataset / rec["patch"])) for rec in records])
    np.save(out / "features.npy", record_features)

    # visual feature per window = its closest-footprint record (least
    # perspective distortion); ties keep the earliest record
    image_pos = np.array([[img["position"][0], img["position"][1]]
                          for img in manifest["images"]])
    closest: dict[int, tuple[float, int]] = {}
    for ridx, rec in enumerate(records):
        d = float(np.linalg.norm(np.asarray(rec["footprint"][:2])
                                 - image_pos[rec["image"]]))
        w = rec["window"]
        if w not in closest or d < closest[w][0]:
            closest[w] = (d, ridx)
    used = sorted(closest)
    if len(used) < k:
        raise ValueError(f"only {len(used)} labeled windows but k={k}")
    window_feats = record_features[[closest[w][1] for w in used]]

    enc_cfg = config.encoder
    enc_cfg.seed = config.seed
    enc_cfg.visual_clusters = k
    encoder = clustering.train_spectrum_encoder(spectra[used], window_feats, enc_cfg)
    embeddings = encoder.embed(spectra[used])
    cmodel = clustering.cluster_states(embeddings, k=k, pca_dims=config.cluster.pca_dims,
                                       seed=config.seed, restarts=config.cluster.restarts)
    cmodel.save(out / "cluster_model.json")

    window_label = {w: int(lab) for w, lab in zip(used, cmodel.labels)}
    spectra_objs = {w: AmplitudeSpectrum.from_concatenated(spectra[w]) for w in used}
    stats = cost.class_means([spectra_objs[w] for w in used],
                             [window_label[w] for w in used], k=k)
    stats = cost.assign_weights(stats, config.cost.base_weights)
    by_id = {s.class_id: s for s in stats}

    labels = [cost.traversal_cost(spectra_objs[rec["window"]], by_id[window_label[rec["window"]]])
              for rec in records]
    labels, norm = cost.normalize_costs(labels)
    cost.write_labeled_manifest(out / "labeled.csv", out / "class_stats.json",
                                [rec["patch"] for rec in records], labels, stats,
                                norm, config.seed)

    truth = [manifest["window_classes"][w] for w in used]
    predicted = [window_label[w] for w in used]
    print(f"nmi,{clustering.nmi(truth, predicted)}")
    print(f"accuracy,{clustering.cluster_accuracy(truth, predicted)}")
    print(f"labeled,{len(labels)}")
    return 0


def cmd_train(args, config: PipelineConfig) -> int:
    out = _prepare_out(args, config)
    manifest = _load_dataset(args.dataset)
    records = manifest["records"]
    spectra = np.load(args.dataset / manifest["spectra"])
    feat_path = args.dataset / "features.npy"
    if feat_path.exists():
        features = np.load(feat_path)
    else:
        features = np.stack([
            texture_feature(read_raster(args.dataset / rec["patch"])) for rec in records])
    _, labels = cost.read_labeled_manifest(args.dataset / "labeled.csv")
    if len(labels) != len(records):
        raise ValueError("labeled.csv does not match the dataset records")

    targets_spec = spectra[[rec["window"] for rec in records]]
    targets_cost = np.array([lab.normalized for lab in labels])

    train_cfg = config.train
    train_cfg.seed = config.seed
    model, log_rows = learning.train(features, targets_spec, targets_cost, train_cfg)
    learning.save_model(model, out / "model.json", train_cfg)
    learning.write_train_log(out / "train_log.csv", log_rows)
    print(f"train: final loss {log_rows[-1]['loss']:.6g} over {len(log_rows)} epochs")
    return 0


def cmd_predict(args, config: PipelineConfig) -> int:
    out = _prepare_out(args, config)
    model = learning.load_model(args.model)
    cam, ext, plane = load_calibration(args.calibration)
    image = read_raster(args.image)
    grid = build_costmap(image, model, cam, ext, plane, config.grid.to_spec(),
                         patch_size=config.export.patch_width)
    save_costmap(grid, out / "costmap.pgm", out / "costmap.json")
    known = int(grid.known_mask.sum())
    print(f"predict: {known} known cells of {grid.spec.width * grid.spec.height}")
    return 0


def cmd_plan(args, config: PipelineConfig) -> int:
    out = _prepare_out(args, config)
    grid = load_costmap(args.costmap / "costmap.pgm", args.costmap / "costmap.json")
    goal = _parse_waypoints(args.goal)[0]
    library = planner.default_library(count=config.planner.library_size,
                                      max_curvature=config.planner.max_curvature,
                                      arc_length=config.planner.arc_length,
                                      ds=config.planner.ds)
    best = planner.plan(grid, goal, library,
                        unknown_cost=config.planner.unknown_cost,
                        goal_weight=config.planner.goal_weight)
    planner.write_trajectory_csv(best, out / "trajectory.csv")
    print(f"plan: curvature {best.curvature:+.4f} 1/m")
    return 0


def cmd_eval(args, config: PipelineConfig) -> int:
    out = _prepare_out(args, config)
    groups: dict[str, list] = {}
    order: list[str] = []
    for entry in args.logs:
        if "=" in entry:
            name, path = entry.split("=", 1)
        else:
            path = entry
            name = Path(path).stem
        if name not in groups:
            groups[name] = []
            order.append(name)
        groups[name].append(path)

    reports = []
    for name in order:
        members = [comfort.pmi_report(read_state_log(p), run=name) for p in groups[name]]
        reports.append(members[0] if len(members) == 1
                       else comfort.average_reports(members, run=name))
    reports = comfort.normalize_pmi(reports)
    comfort.write_pmi_csv(reports, out / "pmi_report.csv")
    for r in reports:
        for axis in comfort.AXES:
            print(f"{r.run},{axis},{r.mu[axis]!r},{r.normalized[axis]!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
