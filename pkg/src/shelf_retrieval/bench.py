"""Seeded scene generation, batch trials and aggregate statistics."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .depgraph import RankMode
from .geometry import Box, Cylinder
from .planner import Heuristic, PipelineConfig, Status, TrialOutcome, rc_pipeline, random_pipeline
from .scene import (ObjectInstance, Pose, Scene, SceneError, Workspace,
                    object_distance, supporters)
from .sensor import CameraModel, render, visible_objects

log = logging.getLogger(__name__)

ALGORITHMS = ("Random", "RC", "RC_Heuristic")
CSV_COLUMNS = ("trial_id", "algorithm", "n_objects", "scene_seed", "status", "n_actions",
               "elapsed_s", "discovered")
REFERENCE_MANIFEST = os.path.join(os.path.dirname(__file__), "data", "reference_manifest.json")
COLORS = ("red", "green", "blue", "yellow", "orange", "purple", "cyan", "magenta",
          "brown", "pink", "olive", "navy", "teal", "maroon", "lime", "gold")


class GenerationExhausted(RuntimeError):
    """No valid scene with a hidden object was found within the attempt budget."""


@dataclass(frozen=True)
class GenParams:
    radius: tuple[float, float] = (0.02, 0.04)
    height: tuple[float, float] = (0.08, 0.20)
    box_side: tuple[float, float] = (0.04, 0.08)
    p_box: float = 0.5
    p_stack: float = 0.25
    min_gap: float = 0.005
    top_margin: float = 0.04
    object_tries: int = 200
    max_gen_tries: int = 10_000


def _random_shape(rng: np.random.Generator, gp: GenParams):
    h = float(rng.uniform(*gp.height))
    if rng.random() < gp.p_box:
        return Box(float(rng.uniform(*gp.box_side)), float(rng.uniform(*gp.box_side)), h)
    return Cylinder(float(rng.uniform(*gp.radius)), h)


def _fits(obj: ObjectInstance, placed: list[ObjectInstance], ws: Workspace, gp: GenParams,
          support: ObjectInstance | None) -> bool:
    if not ws.contains(obj) or obj.top > ws.hi[2] - gp.top_margin:
        return False
    for o in placed:
        d = object_distance(obj, o)
        if o is support:
            if d < -1e-9:
                return False
        elif d < gp.min_gap:
            return False
    if support is not None and len(supporters(obj, placed)) != 1:
        return False
    return True


def _try_place(rng, shape, placed, ws: Workspace, gp: GenParams, oid: int) -> ObjectInstance | None:
    for _ in range(gp.object_tries):
        yaw = float(rng.uniform(0, 2 * math.pi))
        support = None
        if placed and rng.random() < gp.p_stack:
            support = placed[int(rng.integers(len(placed)))]
            # keep the centre of mass over the support's core
            r = 0.3 * min(getattr(support.shape, "radius", 1.0),
                          getattr(support.shape, "dx", 1.0) / 2, getattr(support.shape, "dy", 1.0) / 2)
            x = support.pose.x + float(rng.uniform(-r, r))
            y = support.pose.y + float(rng.uniform(-r, r))
            z = support.top + shape.height / 2
        else:
            x = float(rng.uniform(ws.lo[0], ws.hi[0]))
            y = float(rng.uniform(ws.lo[1], ws.hi[1]))
            z = ws.table_z + shape.height / 2
        obj = ObjectInstance(oid, shape, Pose(x, y, z, yaw), COLORS[oid % len(COLORS)])
        if _fits(obj, placed, ws, gp, support):
            return obj
    return None


def objects_above(scene: Scene, oid: int) -> set[int]:
    """Ids transitively resting on oid."""
    above: set[int] = set()
    frontier = [scene.get(oid)]
    while frontier:
        cur = frontier.pop()
        for o in scene.objects:
            if o.id not in above and cur in supporters(o, scene.objects):
                above.add(o.id)
                frontier.append(o)
    return above


def generate_scene(n_objects: int, rng: np.random.Generator, workspace: Workspace | None = None,
                   params: GenParams = GenParams(), camera: CameraModel | None = None) -> Scene:
    """Random cluttered shelf with at least one object the camera cannot see.

    The target is the hidden object with the most objects above it (ties: lowest id).
    """
    if n_objects < 1:
        raise ValueError("n_objects must be at least 1")
    ws = workspace or Workspace()
    cam = camera or CameraModel.default(ws)
    for _ in range(params.max_gen_tries):
        placed: list[ObjectInstance] = []
        for oid in range(n_objects):
            obj = _try_place(rng, _random_shape(rng, params), placed, ws, params, oid)
            if obj is None:
                break
            placed.append(obj)
        if len(placed) < n_objects:
            continue
        scene = Scene(tuple(placed), ws, cam, 0)
        hidden = sorted(set(scene.ids()) - visible_objects(render(scene)))
        if not hidden:
            continue
        target = max(hidden, key=lambda i: (len(objects_above(scene, i)), -i))
        return Scene(scene.objects, ws, cam, target)
    raise GenerationExhausted(
        f"no valid {n_objects}-object scene with a hidden object in {params.max_gen_tries} attempts")


def scene_for_seed(scene_seed: int, n_objects: int, workspace: Workspace | None = None,
                   params: GenParams = GenParams()) -> Scene:
    return generate_scene(n_objects, np.random.default_rng([scene_seed, n_objects]), workspace, params)


# ---------------------------------------------------------------------------
# Trials


@dataclass(frozen=True)
class TrialSpec:
    trial_id: str
    scene_seed: int
    n_objects: int
    algorithm: str
    config: PipelineConfig = PipelineConfig()
    scene_path: str | None = None

    def __post_init__(self):
        if self.n_objects < 1:
            raise ValueError("n_objects must be at least 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")


@dataclass(frozen=True)
class BenchRow:
    trial_id: str
    algorithm: str
    n_objects: int
    scene_seed: int
    status: str
    n_actions: int
    elapsed_s: float
    discovered: int

    def csv_fields(self) -> list[str]:
        return [self.trial_id, self.algorithm, str(self.n_objects), str(self.scene_seed),
                self.status, str(self.n_actions), f"{self.elapsed_s:.4f}", str(self.discovered)]


def config_for(algorithm: str, base: PipelineConfig) -> PipelineConfig:
    if algorithm == "RC":
        return replace(base, heuristic=Heuristic.UNIFORM_SINKS)
    if algorithm == "RC_Heuristic":
        return replace(base, heuristic=Heuristic.RANK_BIASED)
    return base


def run_trial(spec: TrialSpec, scene: Scene | None = None) -> tuple[BenchRow, TrialOutcome | None]:
    """Run one spec; generation or planning errors become an "error" row."""
    try:
        if scene is None:
            if spec.scene_path:
                from .scene import load_scene
                scene = load_scene(spec.scene_path)
            else:
                scene = scene_for_seed(spec.scene_seed, spec.n_objects)
        cfg = config_for(spec.algorithm, spec.config)
        rng = np.random.default_rng([cfg.seed, spec.scene_seed, spec.n_objects])
        fn = random_pipeline if spec.algorithm == "Random" else rc_pipeline
        out = fn(scene, scene.target, cfg, rng)
    except (SceneError, GenerationExhausted, ValueError, OSError) as exc:
        log.warning("trial %s failed: %s", spec.trial_id, exc)
        return BenchRow(spec.trial_id, spec.algorithm, spec.n_objects, spec.scene_seed,
                        "error", 0, 0.0, 0), None
    except Exception:
        # a planner bug must not take the rest of the batch down with it
        log.exception("trial %s raised", spec.trial_id)
        return BenchRow(spec.trial_id, spec.algorithm, spec.n_objects, spec.scene_seed,
                        "error", 0, 0.0, 0), None
    row = BenchRow(spec.trial_id, spec.algorithm, spec.n_objects, spec.scene_seed,
                   out.status.value, out.n_actions, out.elapsed_s, out.objects_discovered)
    return row, out


def _worker(spec: TrialSpec):
    return run_trial(spec)


def default_workers() -> int:
    env = os.environ.get("SHELF_RETRIEVAL_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def run_benchmark(specs: Sequence[TrialSpec], parallelism: int | None = None,
                  keep_outcomes: bool = False):
    """Run every spec; results come back in spec order whatever the completion order.

    Returns the rows, or (rows, outcomes) when keep_outcomes is set.
    """
    if not specs:
        raise ValueError("no trial specs given")
    workers = parallelism or default_workers()
    if workers <= 1:
        results = [run_trial(s) for s in specs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, specs))
    rows = [r for r, _ in results]
    if keep_outcomes:
        return rows, [o for _, o in results]
    return rows


# ---------------------------------------------------------------------------
# Manifest, CSV, aggregation


def build_specs(seeds: Iterable[int], sizes: Iterable[int], algorithms: Iterable[str] = ALGORITHMS,
                base: PipelineConfig = PipelineConfig()) -> list[TrialSpec]:
    specs = []
    for n in sizes:
        for seed in seeds:
            for alg in algorithms:
                specs.append(TrialSpec(f"n{n}-s{seed}", seed, n, alg, base))
    return specs


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {"time_limit_s": cfg.time_limit_s, "voxel_size": cfg.voxel_size, "n_grasps": cfg.n_grasps,
            "yaw_bins": cfg.yaw_bins, "max_place_tries": cfg.max_place_tries,
            "rank_mode": cfg.rank_mode.value, "seed": cfg.seed, "clock": cfg.clock,
            "check_safety": cfg.check_safety}


def config_from_dict(d: dict) -> PipelineConfig:
    d = dict(d)
    known = {"time_limit_s", "voxel_size", "n_grasps", "yaw_bins", "max_place_tries", "rank_mode",
             "seed", "clock", "check_safety", "heuristic"}
    extra = set(d) - known
    if extra:
        raise ValueError(f"unknown config keys {sorted(extra)}")
    if "rank_mode" in d:
        d["rank_mode"] = RankMode(d["rank_mode"])
    if "heuristic" in d:
        d["heuristic"] = Heuristic(d["heuristic"])
    return PipelineConfig(**d)


def load_manifest(path) -> list[TrialSpec]:
    """Manifest JSON: {"version": 1, "config": {...}, "seeds": [...], "sizes": [...],
    "algorithms": [...]} and/or an explicit "trials" list."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed manifest: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise ValueError(f"{path}: manifest must be an object with \"version\": 1")
    here = os.path.dirname(os.path.abspath(path))
    specs: list[TrialSpec] = []
    try:
        base = config_from_dict(doc.get("config", {}))
        if "seeds" in doc or "sizes" in doc:
            specs += build_specs([int(s) for s in doc["seeds"]], [int(n) for n in doc["sizes"]],
                                 doc.get("algorithms", ALGORITHMS), base)
        for t in doc.get("trials", []):
            cfg = config_from_dict({**config_to_dict(base), **t.get("config", {})})
            scene = t.get("scene")
            if scene is not None:
                scene = os.path.join(here, scene)  # relative paths resolve against the manifest
            specs.append(TrialSpec(str(t["trial_id"]), int(t.get("scene_seed", 0)),
                                   int(t.get("n_objects", 1)), t["algorithm"], cfg, scene))
    except KeyError as exc:
        raise ValueError(f"{path}: manifest entry lacks {exc}") from exc
    except (TypeError, AttributeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed manifest: {exc}") from exc
    if not specs:
        raise ValueError(f"{path}: manifest lists no trials")
    return specs


def write_csv(rows: Iterable[BenchRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_fields())


def read_csv(fh) -> list[BenchRow]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
        raise ValueError(f"CSV header must be {','.join(CSV_COLUMNS)}")
    rows = []
    for rec in reader:
        rows.append(BenchRow(rec["trial_id"], rec["algorithm"], int(rec["n_objects"]),
                             int(rec["scene_seed"]), rec["status"], int(rec["n_actions"]),
                             float(rec["elapsed_s"]), int(rec["discovered"])))
    return rows


def _quartiles(vals: Sequence[float]):
    if not vals:
        return None
    q = np.percentile(np.asarray(vals, float), [25, 50, 75])
    return float(q[0]), float(q[1]), float(q[2])


@dataclass
class Aggregate:
    algorithm: str
    n_objects: int
    trials: int
    success: int
    timeout: int
    infeasible: int
    errors: int
    actions: tuple | None  # (q1, median, q3) over the commonly-solved subset
    runtime: tuple | None
    common_solved: int

    @property
    def success_rate(self) -> float:
        return self.success / self.trials if self.trials else 0.0


def commonly_solved(rows: Sequence[BenchRow]) -> set[tuple[str, int]]:
    """(trial_id, n_objects) keys solved by every algorithm present for that trial."""
    by_trial: dict[tuple[str, int], dict[str, str]] = {}
    algs = sorted({r.algorithm for r in rows})
    for r in rows:
        by_trial.setdefault((r.trial_id, r.n_objects), {})[r.algorithm] = r.status
    return {k for k, st in by_trial.items()
            if all(st.get(a) == Status.SUCCESS.value for a in algs)}


def aggregate(rows: Sequence[BenchRow]) -> list[Aggregate]:
    """Per (algorithm, n_objects) counts; action/runtime quartiles over the commonly-solved subset."""
    common = commonly_solved(rows)
    out = []
    keys = sorted({(r.algorithm, r.n_objects) for r in rows},
                  key=lambda k: (k[1], ALGORITHMS.index(k[0]) if k[0] in ALGORITHMS else 99, k[0]))
    for alg, n in keys:
        rs = [r for r in rows if r.algorithm == alg and r.n_objects == n]
        solved = [r for r in rs if (r.trial_id, r.n_objects) in common]
        out.append(Aggregate(
            alg, n, len(rs),
            sum(r.status == "success" for r in rs),
            sum(r.status == "timeout" for r in rs),
            sum(r.status == "infeasible" for r in rs),
            sum(r.status == "error" for r in rs),
            _quartiles([r.n_actions for r in solved]),
            _quartiles([r.elapsed_s for r in solved]),
            len(solved)))
    return out


def summary_table(aggs: Sequence[Aggregate]) -> str:
    head = ("algorithm\tn_objects\ttrials\tsuccess_rate\ttimeouts\tinfeasible\terrors\t"
            "common_solved\tactions_q1\tactions_median\tactions_q3\truntime_q1\truntime_median\truntime_q3")
    lines = [head]
    for a in aggs:
        def q(t):
            return "\t".join(f"{v:.4f}" for v in t) if t else "EMPTY\tEMPTY\tEMPTY"
        lines.append(f"{a.algorithm}\t{a.n_objects}\t{a.trials}\t{a.success_rate:.4f}\t{a.timeout}\t"
                     f"{a.infeasible}\t{a.errors}\t{a.common_solved}\t{q(a.actions)}\t{q(a.runtime)}")
    return "\n".join(lines) + "\n"
