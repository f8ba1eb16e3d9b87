"""
Task network with journaled, resumable execution.

A workspace directory holds everything a run produces::

    journal.log            append-only progress log
    .lock                  held (flock) by the running instance
    dataset/               tiles, manifest, grid.json, split.json, weights.json
    merged/segmentation.bin (+ .meta)
    scores.json, plan.json, predict-check.json
    degraded/<method>_<gsd>/

Tasks run in dependency order.  A task whose completion is journaled is
skipped; a task interrupted midway resumes from its last checkpoint.
"""

from __future__ import annotations

import fcntl
import graphlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .degrade import DegradeSpec, degrade_dataset, degrade_mosaic_c
from .errors import ConfigurationError, GeosegError, TaskFailedError, WorkspaceLockedError
from .journal import Journal, TaskCheckpoints, payload_digest
from .merge import merge_dataset
from .metrics import coverage_mask, score_merged, score_tiles
from .predict import make_source
from .raster import open_raster
from .sampling import (SplitSpec, dataset_histograms, sample_weights, split_document,
                       split_horizontal, split_manual, weights_document)
from .survey import plan_survey, sufficiency_check
from .tiling import Dataset, plan_grid, split_raster, write_json_atomic

log = logging.getLogger(__name__)

TASKS = ("split", "split-set", "weights", "degrade", "predict-check", "merge",
         "score", "plan")
DEFAULT_TASKS = ("split", "split-set", "weights", "predict-check", "merge", "score")

BASE_DEPENDENCIES = {
    "split": [],
    "split-set": ["split"],
    "weights": ["split-set"],
    "degrade": ["split"],
    "predict-check": ["split"],
    "merge": ["predict-check"],
    "score": ["predict-check", "split-set"],
    "plan": [],
}


@dataclass
class PipelineConfig:
    image: Path
    labels: Path | None = None
    class_count: int | None = None
    palette: list | None = None
    tasks: tuple = DEFAULT_TASKS
    params: dict = field(default_factory=dict)
    depends: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path):
        path = Path(path)
        doc = json.loads(path.read_text())
        return cls.from_dict(doc, base=path.parent)

    @classmethod
    def from_dict(cls, doc, base=Path(".")):
        def resolve(p):
            return None if p is None else (Path(base) / p).resolve()
        if "image" not in doc:
            raise ConfigurationError("config needs an 'image' path")
        tasks = tuple(doc.get("tasks") or
                      DEFAULT_TASKS + tuple(t for t in ("degrade", "plan") if t in doc))
        unknown = [t for t in tasks if t not in TASKS]
        if unknown:
            raise ConfigurationError(f"unknown tasks {unknown}")
        params = {t: dict(doc.get(t) or {}) for t in TASKS}
        for key in ("path", "regions"):
            for t in ("predict-check", "split-set"):
                if key in params[t]:
                    params[t][key] = resolve(params[t][key])
        cfg = cls(resolve(doc["image"]), resolve(doc.get("labels")),
                  doc.get("class_count"), doc.get("palette"), tasks, params,
                  doc.get("depends", {}))
        cfg.validate()
        return cfg

    def validate(self):
        if not self.image.exists():
            raise ConfigurationError(f"image {self.image} does not exist")
        if self.labels is not None and not self.labels.exists():
            raise ConfigurationError(f"labels {self.labels} do not exist")
        needs_classes = {"weights", "merge", "score", "predict-check"} & set(self.tasks)
        if needs_classes and not self.class_count:
            raise ConfigurationError(f"class_count is required by {sorted(needs_classes)}")

    def dependencies(self):
        deps = {t: list(BASE_DEPENDENCIES[t]) for t in TASKS}
        if self.params["score"].get("mode", "tiles") == "merged":
            deps["score"].append("merge")
        if "split-set" in self.tasks:
            deps["plan"].append("split-set")
        for task, extra in self.depends.items():
            if task not in deps:
                raise ConfigurationError(f"unknown task {task!r} in depends")
            deps[task] += list(extra)
        return deps


def execution_order(deps, selected):
    """Topological order of ``selected`` tasks; raises on cycles."""
    sorter = graphlib.TopologicalSorter({t: deps.get(t, []) for t in deps})
    try:
        order = list(sorter.static_order())
    except graphlib.CycleError as exc:
        raise ConfigurationError(f"dependency cycle: {exc.args[1]}") from None
    return [t for t in order if t in selected]


@contextmanager
def workspace_lock(workspace):
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    fh = open(workspace / ".lock", "w")
    try:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise WorkspaceLockedError(f"{workspace} is in use by another run") from None
        yield
    finally:
        fh.close()


# ---------------------------------------------------------------------------
# tasks


class Context:
    def __init__(self, config, workspace, journal, workers=None):
        self.config = config
        self.ws = Path(workspace)
        self.journal = journal
        self.workers = workers

    @property
    def dataset_dir(self):
        return self.ws / "dataset"

    @property
    def merged_path(self):
        return self.ws / "merged" / "segmentation.bin"

    def dataset(self):
        return Dataset(self.dataset_dir)

    def source(self):
        p = self.config.params["predict-check"]
        kind = p.get("source", "oracle")
        if kind == "oracle" and p.get("noise_rate", 0) > 0:
            kind = "noisy-oracle"
        return make_source(kind, self.dataset(), p.get("path"),
                           p.get("noise_rate", 0.0), p.get("seed", 0))


def _file_digest(*paths):
    return payload_digest(*(Path(p).read_bytes() for p in paths))


def task_split(ctx, cp):
    p = ctx.config.params["split"]
    image = open_raster(ctx.config.image)
    labels = open_raster(ctx.config.labels) if ctx.config.labels else None
    tile = int(p.get("tile", 512))
    grid = plan_grid(image.width, image.height, tile, int(p.get("tile_h", tile)),
                     p.get("stride", 0.5))
    split_raster(image, labels, grid, ctx.dataset_dir,
                 class_count=ctx.config.class_count, palette=ctx.config.palette,
                 workers=ctx.workers, checkpoints=cp,
                 source_paths={"source_image": ctx.config.image,
                               "source_labels": ctx.config.labels})
    return _file_digest(ctx.dataset_dir / "manifest.jsonl")


def task_split_set(ctx, cp):
    p = ctx.config.params["split-set"]
    spec = SplitSpec(p.get("method", "horizontal"), tuple(p.get("fractions", (0.7, 0.1, 0.2))),
                     int(p.get("gap", 1)), int(p.get("seed", 0)))
    ds = ctx.dataset()
    if spec.method == "manual":
        if "regions" not in p:
            raise ConfigurationError("manual split needs a 'regions' raster")
        split = split_manual(ds.grid, open_raster(p["regions"]), spec.seed)
    else:
        split = split_horizontal(ds.grid, spec)
    out = ctx.dataset_dir / "split.json"
    write_json_atomic(out, split_document(split, spec))
    return _file_digest(out)


def task_weights(ctx, cp):
    ds = ctx.dataset()
    split_file = ctx.dataset_dir / "split.json"
    indices = sorted(ds.read_json("split.json")["train"]) if split_file.exists() \
        else list(range(len(ds.records)))
    per_tile, totals = dataset_histograms(ds, indices, ctx.config.class_count)
    out = ctx.dataset_dir / "weights.json"
    write_json_atomic(out, weights_document(indices, sample_weights(per_tile, totals)))
    return _file_digest(out)


def task_degrade(ctx, cp):
    p = ctx.config.params["degrade"]
    ds = ctx.dataset()
    source_gsd = p.get("source_gsd") or (ds.geo.pixel_size_x if ds.geo else None)
    if source_gsd is None:
        raise ConfigurationError("degrade needs source_gsd (no geotransform in dataset)")
    spec = DegradeSpec(p.get("method", "c"), source_gsd, p["target_gsd"])
    out = ctx.ws / "degraded" / f"{spec.method.lower()}_{spec.target_gsd:g}"
    if spec.method == "C":
        image = open_raster(ctx.config.image)
        labels = open_raster(ctx.config.labels) if ctx.config.labels else None
        degrade_mosaic_c(image, labels, spec, ds.grid.tile_w, ds.grid.tile_h,
                         ds.grid.stride, out, class_count=ctx.config.class_count,
                         palette=ctx.config.palette, workers=ctx.workers)
    else:
        degrade_dataset(ds, spec, out)
    return _file_digest(out / "manifest.jsonl")


def task_predict_check(ctx, cp):
    ds = ctx.dataset()
    source = ctx.source()
    source.check(range(len(ds.records)))
    doc = {"kind": source.kind, "tiles": len(ds.records),
           "class_count": ctx.config.class_count}
    out = ctx.ws / "predict-check.json"
    write_json_atomic(out, doc)
    return _file_digest(out)


def task_merge(ctx, cp):
    p = ctx.config.params["merge"]
    ds = ctx.dataset()
    seg = merge_dataset(ds, ctx.source(), p.get("strategy", "crop"), ctx.merged_path,
                        checkpoints=cp)
    del seg
    return _file_digest(ctx.merged_path, ctx.merged_path.with_suffix(".meta"))


def task_score(ctx, cp):
    p = ctx.config.params["score"]
    ds = ctx.dataset()
    split = ds.read_json("split.json")
    subset = p.get("split", "test")
    indices = sorted(split[subset]) if subset != "all" else list(range(len(ds.records)))
    exclude = tuple(p.get("exclude", ()))
    if p.get("mode", "tiles") == "merged":
        gt = open_raster(ctx.config.labels)
        seg = open_raster(ctx.merged_path)
        region = coverage_mask(ds.grid, indices) if subset != "all" else None
        report = score_merged(seg, gt, ctx.config.class_count, exclude, region)
    else:
        report = score_tiles(indices, ctx.source(), ds, ctx.config.class_count, exclude)
    doc = report.to_dict()
    doc["split"] = subset
    out = ctx.ws / "scores.json"
    write_json_atomic(out, doc)
    return _file_digest(out)


def task_plan(ctx, cp):
    p = ctx.config.params["plan"]
    plan = plan_survey(p["area"], p["gsd"], p.get("tile", 512), p.get("stride", 0.5),
                       p.get("min_train", 0))
    doc = {"plan": plan.to_dict()}
    split_file = ctx.dataset_dir / "split.json"
    if split_file.exists():
        split = json.loads(split_file.read_text())
        doc["sufficiency"] = sufficiency_check(split, p.get("min_train", 0)).to_dict()
    out = ctx.ws / "plan.json"
    write_json_atomic(out, doc)
    return _file_digest(out)


TASK_FUNCTIONS = {
    "split": task_split,
    "split-set": task_split_set,
    "weights": task_weights,
    "degrade": task_degrade,
    "predict-check": task_predict_check,
    "merge": task_merge,
    "score": task_score,
    "plan": task_plan,
}


@dataclass
class RunResult:
    executed: list
    skipped: list

    @property
    def exit_status(self):
        return 0


def run_pipeline(config, workspace, tasks=None, workers=None):
    """Run ``tasks`` (default: the config's task list) in dependency order.

    Tasks already journaled as done are skipped.  Running a subset requires
    the dependencies of each selected task to be done already.
    """
    selected = set(tasks or config.tasks)
    unknown = selected - set(TASKS)
    if unknown:
        raise ConfigurationError(f"unknown tasks {sorted(unknown)}")
    deps = config.dependencies()
    order = execution_order(deps, selected)
    workspace = Path(workspace)
    executed, skipped = [], []
    with workspace_lock(workspace):
        journal = Journal(workspace / "journal.log")
        journal.repair()
        ctx = Context(config, workspace, journal, workers)
        for task in order:
            if journal.is_done(task):
                skipped.append(task)
                continue
            missing = [d for d in deps[task]
                       if (d in selected or d in config.tasks) and not journal.is_done(d)]
            if missing:
                raise ConfigurationError(f"task {task!r} needs {missing} to be done first")
            log.info("running task %s", task)
            try:
                digest = TASK_FUNCTIONS[task](ctx, TaskCheckpoints(journal, task))
            except GeosegError as exc:
                raise TaskFailedError(task, exc) from exc
            except (OSError, ValueError, KeyError) as exc:
                raise TaskFailedError(task, exc) from exc
            journal.mark_done(task, digest)
            executed.append(task)
    return RunResult(executed, skipped)


def pipeline_status(workspace, tasks=TASKS):
    journal = Journal(Path(workspace) / "journal.log")
    states = journal.task_states()
    return {t: states.get(t, "pending") for t in tasks}
