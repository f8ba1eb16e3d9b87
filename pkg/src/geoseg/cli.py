"""Command line entry point: ``geoseg <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench as bench_mod
from .degrade import DegradeSpec, degrade_dataset, degrade_mosaic_c, ladder_presets
from .errors import GeosegError
from .journal import Journal, TaskCheckpoints
from .merge import merge_dataset
from .metrics import coverage_mask, score_merged, score_tiles
from .pipeline import PipelineConfig, pipeline_status, run_pipeline
from .predict import make_source
from .raster import open_raster
from .sampling import (SplitSpec, dataset_histograms, sample_weights, split_document,
                       split_horizontal, split_manual, weights_document)
from .survey import cording_interval, plan_survey
from .tiling import Dataset, plan_grid, split_raster, write_json_atomic

log = logging.getLogger("geoseg")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_split(args):
    image = open_raster(args.image)
    labels = open_raster(args.labels) if args.labels else None
    grid = plan_grid(image.width, image.height, args.tile, args.tile_h or args.tile,
                     args.stride)
    checkpoints = TaskCheckpoints(Journal(args.journal), "split") if args.journal else None
    if args.journal:
        checkpoints.journal.repair()
    records = split_raster(image, labels, grid, args.out, class_count=args.class_count,
                           workers=args.workers, checkpoints=checkpoints,
                           source_paths={"source_image": Path(args.image).resolve(),
                                         "source_labels": args.labels and
                                         Path(args.labels).resolve()})
    print(f"{len(records)} tiles ({grid.cols} x {grid.rows}) written to {args.out}")


def cmd_weights(args):
    ds = Dataset(args.dataset)
    split_file = ds.root / "split.json"
    if split_file.exists() and not args.all:
        indices = sorted(ds.read_json("split.json")["train"])
    else:
        indices = list(range(len(ds.records)))
    per_tile, totals = dataset_histograms(ds, indices, args.class_count)
    weights = sample_weights(per_tile, totals)
    write_json_atomic(ds.root / "weights.json", weights_document(indices, weights))
    print(f"weights for {len(indices)} tiles; class totals {totals.tolist()}")


def cmd_split_set(args):
    ds = Dataset(args.dataset)
    spec = SplitSpec(args.method, tuple(_floats(args.fractions)), args.gap, args.seed)
    if args.method == "manual":
        if not args.regions:
            raise GeosegError("--regions is required for the manual method")
        split = split_manual(ds.grid, open_raster(args.regions), args.seed)
    else:
        split = split_horizontal(ds.grid, spec)
    write_json_atomic(ds.root / "split.json", split_document(split, spec))
    print(" ".join(f"{k}={len(split[k])}" for k in ("train", "val", "test")))


def cmd_degrade(args):
    ds = Dataset(args.dataset)
    source_gsd = args.source_gsd or (ds.geo.pixel_size_x if ds.geo else None)
    if source_gsd is None:
        raise GeosegError("dataset has no geotransform; pass --source-gsd")
    targets = [r.gsd for r in ladder_presets() if r.gsd > source_gsd] if args.ladder \
        else [args.target_gsd]
    for gsd in targets:
        spec = DegradeSpec(args.method, source_gsd, gsd)
        out = ds.root.with_name(f"{ds.root.name}_{args.method.lower()}_{gsd:g}")
        if spec.method == "C":
            if "source_image" not in ds.meta:
                raise GeosegError("method C needs the source mosaic recorded in grid.json")
            image = open_raster(ds.meta["source_image"])
            labels = open_raster(ds.meta["source_labels"]) \
                if ds.meta.get("source_labels") else None
            degrade_mosaic_c(image, labels, spec, ds.grid.tile_w, ds.grid.tile_h,
                             ds.grid.stride, out, class_count=ds.class_count,
                             palette=ds.palette)
        else:
            degrade_dataset(ds, spec, out)
        print(f"{gsd:g} m/px -> {out}")


def _source(args, ds):
    if args.logits in ("oracle", "noisy-oracle"):
        return make_source("oracle", ds, noise_rate=args.noise, seed=args.seed)
    return make_source("directory", ds, args.logits)


def cmd_merge(args):
    ds = Dataset(args.dataset)
    checkpoints = TaskCheckpoints(Journal(args.journal), "merge") if args.journal else None
    seg = merge_dataset(ds, _source(args, ds), args.strategy, args.out, checkpoints)
    print(f"merged {len(ds.records)} tiles into {args.out} "
          f"({seg.raster.width}x{seg.raster.height})")


def cmd_score(args):
    ds = Dataset(args.dataset)
    class_count = args.class_count or ds.class_count
    if args.split == "all":
        indices = list(range(len(ds.records)))
    else:
        indices = sorted(ds.read_json("split.json")[args.split])
    exclude = tuple(_ints(args.exclude)) if args.exclude else ()
    source = _source(args, ds)
    if args.mode == "merged":
        labels_path = args.labels or ds.meta.get("source_labels")
        if not labels_path:
            raise GeosegError("merged scoring needs --labels (the source label raster)")
        gt = open_raster(labels_path)
        seg = merge_dataset(ds, source, args.strategy)
        region = coverage_mask(ds.grid, indices) if args.split != "all" else None
        report = score_merged(seg, gt, class_count, exclude, region)
    else:
        report = score_tiles(indices, source, ds, class_count, exclude)
    doc = report.to_dict()
    doc["split"] = args.split
    out = Path(args.out) if args.out else ds.root / "scores.json"
    write_json_atomic(out, doc)
    print(json.dumps(doc, indent=2))


def cmd_cording(args):
    interval = cording_interval(_floats(args.measurements))
    lo, hi = interval.rounded(3)
    print(f"critical GSD in ({lo}, {hi}) m/px")


def cmd_plan(args):
    plan = plan_survey(args.area, args.gsd, args.tile, args.stride, args.min_train)
    print(plan.report())
    out = Path(args.out)
    write_json_atomic(out, plan.to_dict())


def cmd_run(args):
    config = PipelineConfig.load(args.config)
    result = run_pipeline(config, args.workspace, args.task or None, args.workers)
    print(f"executed: {', '.join(result.executed) or '-'}")
    print(f"skipped (already done): {', '.join(result.skipped) or '-'}")
    return result.exit_status


def cmd_status(args):
    for task, state in pipeline_status(args.workspace).items():
        print(f"{task:14s} {state}")


def cmd_bench(args):
    result = bench_mod.run_bench(args.op, _ints(args.sizes), args.repeats, args.tile,
                                 args.stride)
    path = bench_mod.write_bench(result, args.out)
    for p, t in zip(result.pixels, result.times):
        print(f"{p:>12d} px  {t:8.3f} s")
    print(f"log-log slope {result.slope:.3f}; written to {path}")


def build_parser():
    parser = argparse.ArgumentParser(prog="geoseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="fragment an orthomosaic into overlapping tiles")
    p.add_argument("--image", required=True)
    p.add_argument("--labels")
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--tile-h", type=int)
    p.add_argument("--stride", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--class-count", type=int)
    p.add_argument("--journal", help="journal file enabling resume after interruption")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("weights", help="per-tile oversampling weights")
    p.add_argument("--dataset", required=True)
    p.add_argument("--class-count", type=int)
    p.add_argument("--all", action="store_true", help="ignore split.json, weight every tile")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("split-set", help="train/val/test split of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=("horizontal", "manual"), default="horizontal")
    p.add_argument("--fractions", default="0.7,0.1,0.2")
    p.add_argument("--gap", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regions", help="set-id raster (0 train, 1 val, 2 test)")
    p.set_defaults(func=cmd_split_set)

    p = sub.add_parser("degrade", help="simulate a coarser ground sampling distance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=("a", "b", "c", "A", "B", "C"), required=True)
    p.add_argument("--target-gsd", type=float)
    p.add_argument("--source-gsd", type=float)
    p.add_argument("--ladder", action="store_true", help="every preset GSD above the source")
    p.set_defaults(func=cmd_degrade)

    for name, func, text in (("merge", cmd_merge, "stitch tile logits into one class map"),
                             ("score", cmd_score, "IoU and Dice against ground truth")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--dataset", required=True)
        p.add_argument("--logits", required=True,
                       help="directory of .lgt files, or 'oracle' for ground-truth logits")
        p.add_argument("--noise", type=float, default=0.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--strategy", choices=("logit", "crop"), default="crop")
        p.set_defaults(func=func)
    merge_p, score_p = sub.choices["merge"], sub.choices["score"]
    merge_p.add_argument("--out", required=True)
    merge_p.add_argument("--journal")
    score_p.add_argument("--split", default="test")
    score_p.add_argument("--mode", choices=("tiles", "merged"), default="tiles")
    score_p.add_argument("--labels")
    score_p.add_argument("--class-count", type=int)
    score_p.add_argument("--exclude", help="comma-separated class ids left out of the means")
    score_p.add_argument("--out")

    p = sub.add_parser("cording", help="critical GSD interval from SVA sizes (m)")
    p.add_argument("--measurements", required=True)
    p.set_defaults(func=cmd_cording)

    p = sub.add_parser("plan", help="survey size, altitude and duration estimate")
    p.add_argument("--area", type=float, required=True)
    p.add_argument("--gsd", type=float, required=True)
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--stride", type=float, default=0.5)
    p.add_argument("--min-train", type=int, default=0)
    p.add_argument("--out", default="plan.json")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="run the task pipeline in a workspace")
    p.add_argument("--workspace", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--task", action="append", help="run only this task (repeatable)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("status", help="task states from the workspace journal")
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("bench", help="time an operation over growing inputs")
    p.add_argument("--op", choices=bench_mod.OPS, required=True)
    p.add_argument("--sizes", default="1024,2048,4096,8192")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--stride", type=float, default=0.5)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "degrade" and not args.ladder and args.target_gsd is None:
        print("geoseg degrade: --target-gsd or --ladder is required", file=sys.stderr)
        return 2
    try:
        return args.func(args) or 0
    except (GeosegError, FileNotFoundError) as exc:
        print(f"geoseg {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
