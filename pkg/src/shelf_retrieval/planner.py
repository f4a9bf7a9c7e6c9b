"""The resolution-complete retrieval loop, its uniform variant and the random baseline."""

from __future__ import annotations

import enum
import json
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import safety
from .depgraph import (DependencyGraph, NoSinks, RankMode, biased_shuffle, build_dep_graph, rank_sinks,
                       sinks)
from .manipulation import (ArmModel, GraspCandidate, evaluate_grasps, plan_pick, swept_prisms)
from .occlusion import VoxelGrid, did_discover_object, update_voxels_from_image
from .placement import sample_placement
from .scene import (BeliefScene, ObjectInstance, Pose, Scene, apply_pick, apply_place,
                    apply_restore)
from .sensor import SenseResult, render, visible_objects


class Heuristic(enum.Enum):
    RANK_BIASED = "rank_biased"
    UNIFORM_SINKS = "uniform_sinks"


class Status(enum.Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    INFEASIBLE = "infeasible"


class ActionKind(enum.Enum):
    SENSE = "sense"
    PICK = "pick"
    PLACE = "place"
    TEMPORARY_HOLD = "temporary_hold"
    PLACE_BACK = "place_back"
    RETRIEVE = "retrieve"


# Virtual seconds charged per primitive. The default clock is virtual so that
# (scene, config, seed) fixes every byte of a trial's outcome.
COSTS = {
    "sense": 0.2,
    "grasp_check": 0.01,
    "anchor": 0.01,
    "motion": 0.5,
}


@dataclass(frozen=True)
class PipelineConfig:
    time_limit_s: float = 30.0
    voxel_size: float = 0.01
    n_grasps: int = 16
    yaw_bins: int = 8
    max_place_tries: int = 50
    heuristic: Heuristic = Heuristic.RANK_BIASED
    rank_mode: RankMode = RankMode.PROPORTIONAL
    seed: int = 0
    clock: str = "virtual"
    check_safety: bool = False
    arm: ArmModel = ArmModel()

    def __post_init__(self):
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if min(self.n_grasps, self.yaw_bins, self.max_place_tries) < 1:
            raise ValueError("counts must be at least 1")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.clock not in ("virtual", "wall"):
            raise ValueError(f"unknown clock {self.clock!r}")


@dataclass(frozen=True)
class ActionRecord:
    index: int
    kind: ActionKind
    object: int | None
    from_pose: Pose | None
    to_pose: Pose | None
    wallclock_s: float

    def to_dict(self) -> dict:
        def pose(p):
            return None if p is None else [p.x, p.y, p.z, p.yaw]

        return {"index": self.index, "kind": self.kind.value, "object": self.object,
                "from_pose": pose(self.from_pose), "to_pose": pose(self.to_pose),
                "wallclock_s": round(self.wallclock_s, 6)}


PHYSICAL = frozenset(ActionKind) - {ActionKind.SENSE}


@dataclass
class TrialOutcome:
    status: Status
    actions: list[ActionRecord]
    elapsed_s: float
    objects_discovered: int
    safety_violations: list[str] = field(default_factory=list)

    @property
    def n_actions(self) -> int:
        """Physical actions only; sensing steps are logged but not counted."""
        return sum(1 for a in self.actions if a.kind in PHYSICAL)

    def kinds(self, physical_only: bool = True) -> list[ActionKind]:
        return [a.kind for a in self.actions if not physical_only or a.kind in PHYSICAL]

    def log_lines(self) -> list[str]:
        return [json.dumps(a.to_dict()) for a in self.actions]


class _Timeout(Exception):
    pass


class SimClock:
    def __init__(self, mode: str = "virtual"):
        self.mode = mode
        self._virtual = 0.0
        self._start = time.perf_counter()

    def charge(self, kind: str, n: float = 1) -> None:
        self._virtual += COSTS[kind] * n

    def now(self) -> float:
        if self.mode == "virtual":
            return self._virtual
        return time.perf_counter() - self._start


@dataclass
class Observation:
    sense: SenseResult
    visible: frozenset[int]
    belief: BeliefScene
    grid: VoxelGrid
    reports: dict
    dg: DependencyGraph
    grasp_checks: int


class Trial:
    """Mutable per-trial state: the ground-truth world, clock, rng and action log."""

    def __init__(self, world: Scene, target: int, config: PipelineConfig,
                 rng: np.random.Generator | None = None):
        self.world = world
        self.target = target
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.clock = SimClock(config.clock)
        self.log: list[ActionRecord] = []
        self.violations: list[str] = []
        self._cache: OrderedDict = OrderedDict()
        self.initial_visible: frozenset[int] | None = None
        self.seen: set[int] = set()
        self.visible_history: list[frozenset[int]] = []

    # -- bookkeeping -------------------------------------------------------

    def check_time(self) -> None:
        if self.clock.now() > self.config.time_limit_s:
            raise _Timeout

    def _record(self, kind, obj=None, from_pose=None, to_pose=None) -> None:
        self.log.append(ActionRecord(len(self.log), kind, obj, from_pose, to_pose, self.clock.now()))

    def outcome(self, status: Status) -> TrialOutcome:
        init = self.initial_visible or frozenset()
        return TrialOutcome(status, list(self.log), self.clock.now(), len(self.seen - init),
                            list(self.violations))

    # -- sensing -----------------------------------------------------------

    def _compute_observation(self) -> Observation:
        cfg = self.config
        world = self.world
        sense = render(world)
        visible = visible_objects(sense)
        belief = world.belief(visible)
        models = {o.id: o for o in belief.objects}
        grid = update_voxels_from_image(sense, world.camera, models, world.workspace, cfg.voxel_size)
        reports = evaluate_grasps(belief, grid, cfg.arm, cfg.n_grasps)
        dg = build_dep_graph(belief, grid, self.target, reports, cfg.n_grasps, cfg.rank_mode)
        checks = sum(len(r) for r in reports.values())
        return Observation(sense, visible, belief, grid, reports, dg, checks)

    def observe(self, check: bool = True) -> Observation:
        if check:
            self.check_time()
        key = (self.world.objects, self.world.held)
        obs = self._cache.get(key)
        if obs is None:
            obs = self._compute_observation()
            self._cache[key] = obs
            if len(self._cache) > 32:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        self.clock.charge("sense")
        self.clock.charge("grasp_check", obs.grasp_checks)
        if self.initial_visible is None:
            self.initial_visible = obs.visible
        self.seen |= obs.visible
        self.visible_history.append(obs.visible)
        self._record(ActionKind.SENSE)
        return obs

    def target_pickable(self, obs: Observation) -> GraspCandidate | None:
        if self.target not in obs.visible or self.target not in sinks(obs.dg):
            return None
        return plan_pick(self.target, obs.belief, obs.grid, report=obs.reports[self.target])

    # -- execution ---------------------------------------------------------

    def _audit(self, obj: ObjectInstance, cand: GraspCandidate, grid: VoxelGrid, what: str) -> None:
        if not self.config.check_safety:
            return
        prisms = swept_prisms(obj, cand, self.world.workspace, self.config.arm)
        hits = safety.swept_hits_objects(prisms, self.world.objects, obj.id)
        if hits:
            self.violations.append(f"action {len(self.log)} {what} {obj.id}: swept volume hits objects {hits}")
        n = safety.swept_hits_occluded(prisms, grid)
        if n:
            self.violations.append(f"action {len(self.log)} {what} {obj.id}: swept volume enters {n} occluded voxels")

    def pick(self, oid: int, cand: GraspCandidate, grid: VoxelGrid,
             kind: ActionKind = ActionKind.PICK) -> ObjectInstance:
        obj = self.world.get(oid)
        self._audit(obj, cand, grid, kind.value)
        self.world = apply_pick(self.world, oid)
        self.clock.charge("motion")
        self._record(kind, oid, obj.pose, None)
        return obj

    def place(self, obj: ObjectInstance, pose: Pose, cand: GraspCandidate, grid: VoxelGrid) -> None:
        moved = obj.moved(Pose(pose.x, pose.y, self.world.workspace.table_z + obj.height / 2, pose.yaw))
        if self.config.check_safety:
            self._audit(moved, cand, grid, "place")
            n = safety.placement_hits_occluded_columns(moved, grid)
            if n:
                self.violations.append(f"action {len(self.log)} place {obj.id}: footprint covers {n} occluded columns")
        self.world = apply_place(self.world, obj.id, pose)
        self.clock.charge("motion")
        self._record(ActionKind.PLACE, obj.id, obj.pose, moved.pose)

    def hold(self, obj: ObjectInstance) -> None:
        self.clock.charge("motion")
        self._record(ActionKind.TEMPORARY_HOLD, obj.id, obj.pose, None)

    def place_back(self, obj: ObjectInstance, cand: GraspCandidate, grid: VoxelGrid) -> None:
        self._audit(obj, cand, grid, "place_back")
        self.world = apply_restore(self.world, obj.id, obj.pose)
        self.clock.charge("motion")
        self._record(ActionKind.PLACE_BACK, obj.id, None, obj.pose)

    # -- Algorithm building blocks -----------------------------------------

    def try_move_one(self, candidates: Iterable[int], ranks: dict | None, obs: Observation) -> bool:
        """Move the first sink (in rank-biased shuffled order) that has a full pick-and-place plan."""
        cfg = self.config
        for s in biased_shuffle(list(candidates), ranks, self.rng):
            self.check_time()
            if s not in obs.visible:
                continue
            cand = plan_pick(s, obs.belief, obs.grid, report=obs.reports[s])
            if cand is None:
                continue
            stats: dict = {}
            res = sample_placement(obs.belief.get(s), obs.belief, obs.grid, self.rng, cfg.arm,
                                   cfg.yaw_bins, cfg.max_place_tries, cfg.n_grasps, stats=stats,
                                   eye=self.world.camera.eye)
            self.clock.charge("anchor", stats.get("anchors", 0))
            if res is None:
                continue
            obj = self.pick(s, cand, obs.grid)
            self.place(obj, res.pose, res.grasp, obs.grid)
            return True
        return False

    def move_or_placeback(self, sink: int, obs: Observation) -> bool:
        """Lift a sink out of view, look, then re-place it or put it back."""
        cfg = self.config
        self.check_time()
        if sink not in obs.visible:
            return False
        cand = plan_pick(sink, obs.belief, obs.grid, report=obs.reports[sink])
        if cand is None:
            return False
        obj = self.pick(sink, cand, obs.grid)
        self.hold(obj)
        held_obs = self.observe(check=False)
        stats: dict = {}
        res = sample_placement(obj, held_obs.belief, held_obs.grid, self.rng, cfg.arm,
                               cfg.yaw_bins, cfg.max_place_tries, cfg.n_grasps, stats=stats,
                               eye=self.world.camera.eye)
        self.clock.charge("anchor", stats.get("anchors", 0))
        if res is not None:
            self.place(obj, res.pose, res.grasp, held_obs.grid)
        else:
            self.place_back(obj, cand, obs.grid)
        return True

    def retrieve(self, cand: GraspCandidate, grid: VoxelGrid) -> None:
        self.pick(self.target, cand, grid, kind=ActionKind.RETRIEVE)

    # -- pipelines ---------------------------------------------------------

    def run_rc(self) -> Status:
        heuristic = self.config.heuristic is Heuristic.RANK_BIASED
        failure = False
        grasp = None
        while not failure:
            obs = self.observe()
            try:
                snk, ranks = rank_sinks(self.target, obs.dg)
            except NoSinks:
                snk, ranks = [], {}
            grasp = self.target_pickable(obs)
            if grasp is not None:
                break
            if not self.try_move_one(snk, ranks if heuristic else None, obs):
                failure = True
                order = snk if heuristic else sorted(snk)
                # discovery means an object never seen before in this trial
                known = frozenset(self.seen)
                for s in order:
                    if not self.move_or_placeback(s, obs):
                        continue
                    after = self.observe()
                    if did_discover_object(known, self.seen):
                        failure = False
                        break
                    if not self.try_move_one(snk, None, after):
                        continue
                    failure = False
                    break
        if failure:
            return Status.INFEASIBLE
        self.retrieve(grasp, obs.grid)
        return Status.SUCCESS

    def run_random(self) -> Status:
        cfg = self.config
        while True:
            obs = self.observe()
            grasp = self.target_pickable(obs)
            if grasp is not None:
                self.retrieve(grasp, obs.grid)
                return Status.SUCCESS
            snk = sinks(obs.dg)
            if not snk:
                continue
            s = snk[int(self.rng.integers(len(snk)))]
            cand = plan_pick(s, obs.belief, obs.grid, report=obs.reports[s])
            if cand is None:
                continue
            stats: dict = {}
            res = sample_placement(obs.belief.get(s), obs.belief, obs.grid, self.rng, cfg.arm,
                                   cfg.yaw_bins, cfg.max_place_tries, cfg.n_grasps, stats=stats,
                                   eye=self.world.camera.eye)
            self.clock.charge("anchor", stats.get("anchors", 0))
            if res is None:
                continue
            obj = self.pick(s, cand, obs.grid)
            self.place(obj, res.pose, res.grasp, obs.grid)


def _run(world: Scene, target: int, config: PipelineConfig, rng, method: str) -> TrialOutcome:
    trial = Trial(world, target, config, rng)
    try:
        status = trial.run_rc() if method == "rc" else trial.run_random()
    except _Timeout:
        status = Status.TIMEOUT
    return trial.outcome(status)


def rc_pipeline(world: Scene, target: int | None = None, config: PipelineConfig = PipelineConfig(),
                rng: np.random.Generator | None = None) -> TrialOutcome:
    return _run(world, world.target if target is None else target, config, rng, "rc")


def random_pipeline(world: Scene, target: int | None = None, config: PipelineConfig = PipelineConfig(),
                    rng: np.random.Generator | None = None) -> TrialOutcome:
    return _run(world, world.target if target is None else target, config, rng, "random")
