"""Command line entry point: gen, run, report, solve, dump."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench
from .depgraph import NoSinks, RankMode, rank_sinks, to_dot
from .fixtures import FIXTURES, fixture
from .occlusion import dump_grid
from .planner import PipelineConfig, Trial, rc_pipeline, random_pipeline
from .scene import SceneError, load_scene, save_scene
from .sensor import write_pgm, write_ppm

log = logging.getLogger("shelf_retrieval")


class CliError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    """'0-4,7' -> [0, 1, 2, 3, 4, 7]"""
    out = []
    try:
        for part in text.split(","):
            lo, _, hi = part.strip().partition("-")
            out += list(range(int(lo), int(hi or lo) + 1))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _load_scene_arg(name: str):
    if name in FIXTURES:
        return fixture(name)
    if not os.path.exists(name):
        raise CliError(f"{name}: no such scene file (bundled fixtures: {', '.join(FIXTURES)})")
    return load_scene(name)


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "time_limit", None) is not None:
        cfg = replace(cfg, time_limit_s=args.time_limit)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "rank_mode", None):
        cfg = replace(cfg, rank_mode=RankMode(args.rank_mode))
    if getattr(args, "check_safety", False):
        cfg = replace(cfg, check_safety=True)
    return cfg


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for n in args.sizes:
        for seed in args.seeds:
            scene = bench.scene_for_seed(seed, n)
            path = os.path.join(args.out, f"scene-n{n}-s{seed}.json")
            save_scene(scene, path)
            print(path)
    return 0


def cmd_run(args) -> int:
    path = bench.REFERENCE_MANIFEST if args.manifest == "reference" else args.manifest
    specs = bench.load_manifest(path)
    workers = args.workers or bench.default_workers()
    rows, outcomes = bench.run_benchmark(specs, workers, keep_outcomes=True)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", newline="") as f:
        bench.write_csv(rows, f)
    if args.log_dir:
        os.makedirs(args.log_dir, exist_ok=True)
        for row, out in zip(rows, outcomes):
            path = os.path.join(args.log_dir, f"{row.trial_id}-{row.algorithm}.jsonl")
            with open(path, "w") as f:
                for line in (out.log_lines() if out else []):
                    f.write(line + "\n")
    n_ok = sum(r.status == "success" for r in rows)
    print(f"{len(rows)} trials, {n_ok} solved -> {args.out}")
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.csv, newline="") as f:
            rows = bench.read_csv(f)
    except (KeyError, TypeError) as exc:
        raise CliError(f"{args.csv}: malformed row: {exc}") from exc
    if not rows:
        raise CliError(f"{args.csv}: no result rows")
    from .plotting import write_report

    paths = write_report(rows, args.out, not args.no_figures)
    sys.stdout.write(bench.summary_table(bench.aggregate(rows)))
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    return 0


def cmd_solve(args) -> int:
    scene = _load_scene_arg(args.scene)
    cfg = _config(args)
    if args.algorithm == "Random":
        out = random_pipeline(scene, scene.target, cfg)
    else:
        cfg = bench.config_for(args.algorithm, cfg)
        out = rc_pipeline(scene, scene.target, cfg)
    for line in out.log_lines():
        print(line)
    print(f"# status {out.status.value} actions {out.n_actions} elapsed_s {out.elapsed_s:.4f} "
          f"discovered {out.objects_discovered}")
    for v in out.safety_violations:
        print(f"# safety {v}")
    return 0


def cmd_dump(args) -> int:
    scene = _load_scene_arg(args.scene)
    os.makedirs(args.out, exist_ok=True)
    trial = Trial(scene, scene.target, _config(args), np.random.default_rng(0))
    obs = trial.observe()
    write_pgm(os.path.join(args.out, "depth.pgm"), obs.sense.depth)
    write_ppm(os.path.join(args.out, "seg.ppm"), obs.sense.seg)
    with open(os.path.join(args.out, "grid.txt"), "w") as f:
        dump_grid(obs.grid, f)
    with open(os.path.join(args.out, "graph.dot"), "w") as f:
        f.write(to_dot(obs.dg))
    try:
        order, ranks = rank_sinks(scene.target, obs.dg)
    except NoSinks:
        order, ranks = [], {}
    info = {"target": scene.target, "visible": sorted(obs.visible),
            "sinks": order, "ranks": {str(k): v for k, v in ranks.items()},
            "counts": {"occupied": obs.grid.count("occupied"), "occluded": obs.grid.count("occluded")}}
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        json.dump(info, f, indent=1)
        f.write("\n")
    print(json.dumps(info))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shelf-retrieval",
                                description="Occluded-object retrieval planner and benchmark")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write seeded random scenes as JSON")
    g.add_argument("--seeds", type=_int_list, default=list(range(20)), help="e.g. 0-19")
    g.add_argument("--sizes", type=_int_list, default=[6, 8, 10], help="e.g. 6,8,10")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="run the trials of a manifest and write CSV")
    r.add_argument("manifest", help="manifest JSON, or 'reference' for the bundled one")
    r.add_argument("--out", required=True, help="CSV path")
    r.add_argument("--log-dir", help="write one action log per trial here")
    r.add_argument("--workers", type=int, help="worker processes (default: $SHELF_RETRIEVAL_WORKERS or 1)")
    r.set_defaults(fn=cmd_run)

    rp = sub.add_parser("report", help="aggregate a results CSV into tables and figures")
    rp.add_argument("csv")
    rp.add_argument("--out", required=True, help="output directory")
    rp.add_argument("--no-figures", action="store_true")
    rp.set_defaults(fn=cmd_report)

    for name, fn, hlp in (("solve", cmd_solve, "run one scene and print the action trace"),
                          ("dump", cmd_dump, "export depth, segmentation, voxel grid and graph")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("scene", help=f"scene JSON or a bundled fixture ({', '.join(FIXTURES)})")
        s.add_argument("--time-limit", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--rank-mode", choices=[m.value for m in RankMode])
        s.set_defaults(fn=fn)
        if name == "solve":
            s.add_argument("--algorithm", choices=bench.ALGORITHMS, default="RC_Heuristic")
            s.add_argument("--check-safety", action="store_true")
        else:
            s.add_argument("--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (CliError, SceneError, ValueError, bench.GenerationExhausted, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
