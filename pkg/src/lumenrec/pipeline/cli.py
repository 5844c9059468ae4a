"""Command-line surface tying the pipeline together.

Subcommands: generate-data, train, eval-depth, reconstruct, eval-recon,
plot, ablate. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from ..errors import ConfigError, LumenrecError, ManifestError
from . import config as config_mod


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument("--dry-run", action="store_true", help="validate and print the resolved config, change nothing")
    parser.add_argument("--device", choices=("cpu", "accelerator"), default="cpu")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lumenrec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="render a synthetic dataset for one style")
    g.add_argument("--style", choices=("A", "B"), required=True)
    g.add_argument("--out", required=True, help="dataset output directory")
    g.add_argument("--preset", choices=("toy", "paper"), default="toy")
    g.add_argument("--config", help="JSON file of GenConfig overrides")
    _add_common(g)

    t = sub.add_parser("train", help="run training stages 1-3")
    t.add_argument("--config", help="RunConfig JSON file")
    t.add_argument("--preset", choices=("toy", "paper"), default="toy")
    t.add_argument("--source-data", help="source dataset root (with --preset)")
    t.add_argument("--target-data", help="target dataset root (with --preset)")
    t.add_argument("--run-dir", help="run directory override")
    _add_common(t)

    e = sub.add_parser("eval-depth", help="evaluate a finished run on the held-out test sets")
    e.add_argument("--run-dir", required=True)
    e.add_argument("--align", choices=("median", "none"), default=None)
    _add_common(e)

    r = sub.add_parser("reconstruct", help="fuse depth into a TSDF mesh")
    r.add_argument("--data", required=True, help="dataset root")
    r.add_argument("--split", default="test_0")
    r.add_argument("--depth", default="gt", help="'gt' or a run dir (model inference)")
    r.add_argument("--poses", default="gt", help="'gt' or a TUM trajectory file")
    r.add_argument("--voxel", type=float, default=None)
    r.add_argument("--stride", type=int, default=1)
    r.add_argument("--out", default=None, help="output directory (default: <data>/recon)")
    _add_common(r)

    er = sub.add_parser("eval-recon", help="register a mesh to a reference and report distances")
    er.add_argument("--mesh", required=True)
    er.add_argument("--gt-mesh", required=True)
    er.add_argument("--out", default=None, help="metrics JSON path")
    _add_common(er)

    pl = sub.add_parser("plot", help="render loss curves, depth panels, metric tables")
    pl.add_argument("--run-dir", required=True)
    pl.add_argument("--data", default=None, help="dataset root for depth panels")
    _add_common(pl)

    a = sub.add_parser("ablate", help="run the variant comparison (full / no_tnet / no_bidirect)")
    a.add_argument("--config", required=True, help="RunConfig JSON file")
    a.add_argument("--variants", default="full,no_tnet,no_bidirect")
    a.add_argument("--seeds", default="0,1,2")
    _add_common(a)
    return p


def _check_device(args) -> None:
    if getattr(args, "device", "cpu") == "accelerator":
        print(
            "warning: accelerator requested; this build executes CPU-only and will proceed on cpu",
            file=sys.stderr,
        )


def _resolve_run_config(args) -> config_mod.RunConfig:
    if args.config:
        cfg = config_mod.load_run_config(args.config)
    else:
        if not (args.source_data and args.target_data and args.run_dir):
            raise ConfigError(
                "train", "either --config or all of --source-data/--target-data/--run-dir"
            )
        cfg = config_mod.PRESETS[args.preset](args.source_data, args.target_data, args.run_dir)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "run_dir", None):
        updates["run_dir"] = args.run_dir
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def cmd_generate_data(args) -> int:
    overrides = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("config", f"file not found: {path}")
        overrides = json.loads(path.read_text())
    overrides = config_mod.apply_env_overrides(overrides)
    overrides.pop("style", None)
    overrides.pop("out_dir", None)
    seed = overrides.pop("seed", 0) if args.seed is None else args.seed
    gen_cfg = config_mod.GEN_PRESETS[args.preset](args.style, args.out, seed=seed, **overrides)
    if args.dry_run:
        print(json.dumps(dataclasses.asdict(gen_cfg), indent=2))
        return 0
    from ..synthcolon import generate_dataset

    manifest = generate_dataset(
        gen_cfg.colon_spec(),
        gen_cfg.texture_style(),
        gen_cfg.render_config(),
        n_train=gen_cfg.n_train,
        n_test_sets=gen_cfg.n_test_sets,
        n_test=gen_cfg.n_test,
        out_dir=gen_cfg.out_dir,
        seed=gen_cfg.seed,
        depth_scale=gen_cfg.depth_scale,
        jitter_deg=gen_cfg.jitter_deg,
        offset_frac=gen_cfg.offset_frac,
        write_mesh=(args.style == "A"),
    )
    print(f"wrote {gen_cfg.out_dir}: {len(manifest)} train frames, "
          f"{gen_cfg.n_test_sets} test sets of {gen_cfg.n_test}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_run_config(args)
    if args.dry_run:
        print(json.dumps(config_mod.run_config_to_dict(cfg), indent=2))
        return 0
    from ..training import run_all

    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = config_mod.run_config_to_dict(cfg)
    (run_dir / "config.snapshot").write_text(json.dumps(snapshot, indent=2) + "\n")
    _, report = run_all(cfg, config_echo=snapshot)
    print(f"run complete: abs_rel={report['mean']['abs_rel']:.4f} "
          f"(align={report['align']}); report at {run_dir / 'report.json'}")
    return 0


def cmd_eval_depth(args) -> int:
    run_dir = Path(args.run_dir)
    snapshot_path = run_dir / "config.snapshot"
    if not snapshot_path.exists():
        raise ConfigError("run-dir", f"{run_dir} has no config.snapshot (train first)")
    cfg = config_mod.run_config_from_dict(
        config_mod.apply_env_overrides(json.loads(snapshot_path.read_text()))
    )
    if args.align:
        cfg = dataclasses.replace(cfg, eval_align=args.align)
    ckpt = run_dir / "stage3" / "checkpoint"
    if not ckpt.exists():
        raise ConfigError("run-dir", f"{ckpt} missing; finish training first")
    if args.dry_run:
        print(json.dumps({"checkpoint": str(ckpt), "align": cfg.eval_align}, indent=2))
        return 0
    from ..training import evaluation_report, load_state

    state = load_state(ckpt)
    report = evaluation_report(state, cfg)
    out = run_dir / "report.json"
    out.write_text(json.dumps(report, indent=2) + "\n")
    print(f"mean abs_rel {report['mean']['abs_rel']:.4f} over {report['n_sets']} sets -> {out}")
    return 0


def cmd_reconstruct(args) -> int:
    data_root = Path(args.data)
    split_dir = data_root / args.split
    if not split_dir.exists():
        raise ConfigError("data", f"split directory not found: {split_dir}")
    out_dir = Path(args.out) if args.out else data_root / "recon"
    if args.dry_run:
        print(json.dumps({"split": str(split_dir), "out": str(out_dir)}, indent=2))
        return 0
    from ..core.manifest import DatasetManifest
    from ..recon import reconstruct_sequence

    manifest = DatasetManifest.load(split_dir)
    depth_source = "gt"
    if args.depth != "gt":
        from ..training import depth_predictor, load_state

        ckpt = Path(args.depth) / "stage3" / "checkpoint"
        if not ckpt.exists():
            raise ConfigError("depth", f"no checkpoint at {ckpt}")
        depth_source = depth_predictor(load_state(ckpt), "fused")
    pose_source = "gt" if args.poses == "gt" else args.poses
    gt_mesh = data_root / "gt_mesh.ply"
    out_dir.mkdir(parents=True, exist_ok=True)
    report = reconstruct_sequence(
        manifest,
        depth_source=depth_source,
        pose_source=pose_source,
        voxel_size=args.voxel,
        gt_mesh=gt_mesh if gt_mesh.exists() else None,
        out_mesh_path=out_dir / "recon.ply",
        frame_stride=args.stride,
    )
    (out_dir / "recon_report.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n")
    msg = f"mesh: {len(report.mesh.vertices)} vertices -> {out_dir / 'recon.ply'}"
    if report.metrics:
        msg += f"; mean distance {report.metrics.mean_distance:.5f}"
    print(msg)
    return 0


def cmd_eval_recon(args) -> int:
    mesh_path = Path(args.mesh)
    gt_path = Path(args.gt_mesh)
    for p in (mesh_path, gt_path):
        if not p.exists():
            raise ConfigError("mesh", f"file not found: {p}")
    if args.dry_run:
        print(json.dumps({"mesh": str(mesh_path), "gt_mesh": str(gt_path)}, indent=2))
        return 0
    from ..mesh import PointCloud, read_ply
    from ..recon import cloud_mesh_distance, icp_register

    mesh = read_ply(mesh_path)
    gt = read_ply(gt_path)
    icp = icp_register(PointCloud(mesh.vertices), PointCloud(gt.vertices))
    metrics = cloud_mesh_distance(PointCloud(icp.pose.apply(mesh.vertices)), gt)
    blob = {**metrics.as_dict(), "icp_rms": icp.rms, "icp_iterations": icp.iterations}
    if args.out:
        Path(args.out).write_text(json.dumps(blob, indent=2) + "\n")
    print(json.dumps(blob, indent=2))
    return 0


def cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        raise ConfigError("run-dir", f"directory not found: {run_dir}")
    if args.dry_run:
        print(json.dumps({"run_dir": str(run_dir)}, indent=2))
        return 0
    from .plots import render_run_plots

    made = render_run_plots(run_dir, data_root=args.data)
    if not made:
        raise ConfigError("run-dir", f"{run_dir} holds nothing to plot (train first)")
    for p in made:
        print(f"wrote {p}")
    return 0


def cmd_ablate(args) -> int:
    cfg = config_mod.load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    seeds = tuple(int(s) for s in args.seeds.split(","))
    if args.dry_run:
        print(json.dumps({"variants": variants, "seeds": seeds}, indent=2))
        return 0
    from .ablation import ablation_csv, ablation_runner

    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    table = ablation_runner(cfg, variants=variants, seeds=seeds, out_path=run_dir / "ablation.json")
    ablation_csv(table, run_dir / "ablation.csv")
    for variant in variants:
        print(f"{variant}: median abs_rel {table['medians'][variant]['abs_rel']:.4f}")
    return 0


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "eval-depth": cmd_eval_depth,
    "reconstruct": cmd_reconstruct,
    "eval-recon": cmd_eval_recon,
    "plot": cmd_plot,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_device(args)
        return COMMANDS[args.command](args)
    except (ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LumenrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
