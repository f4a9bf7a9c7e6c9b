"""Weighted dependency graph over visible objects and the (possibly unseen) target."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .occlusion import VoxelGrid, occlusion_volume_by_stack
from .scene import BeliefScene, below_pairs, stacks

RANK_FLOOR = 1e-6
MAX_RANK_NODES = 25


class RelationKind(enum.Enum):
    BELOW = "below"
    GRASP_BLOCKED_BY = "grasp_blocked_by"
    HIDDEN_BY = "hidden_by"


class RankMode(enum.Enum):
    PROPORTIONAL = "proportional"
    INVERSE = "inverse"


class NoSinks(RuntimeError):
    """The graph has no pickable object."""


@dataclass(frozen=True)
class DepEdge:
    src: int
    dst: int
    kind: RelationKind
    weight: float

    def __post_init__(self):
        if not 0 < self.weight <= 1:
            raise ValueError(f"edge weight must lie in (0, 1]: {self}")


@dataclass(frozen=True)
class DependencyGraph:
    """Edge (x, y) means y has to be picked and placed before x can be picked."""

    nodes: tuple[int, ...]
    edges: tuple[DepEdge, ...]
    target: int
    target_visible: bool

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate graph nodes")
        for e in self.edges:
            if e.kind is RelationKind.HIDDEN_BY and e.src != self.target:
                raise ValueError("hidden-by edges must leave the target node")

    def out_edges(self, node: int) -> list[DepEdge]:
        return [e for e in self.edges if e.src == node]

    def successors(self) -> dict[int, list[DepEdge]]:
        out: dict[int, list[DepEdge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            out[e.src].append(e)
        return out


def build_dep_graph(belief: BeliefScene, grid: VoxelGrid, target: int,
                    grasp_reports: Mapping[int, Sequence] | None = None,
                    n_grasps: int = 16, rank_mode: RankMode = RankMode.PROPORTIONAL,
                    arm=None) -> DependencyGraph:
    """Build the graph from the belief.

    ``grasp_reports`` maps each visible object to its evaluated grasp candidates
    as ``(candidate, Feasibility)`` pairs; computed here when not supplied.
    """
    from .manipulation import ArmModel, evaluate_grasps

    if grasp_reports is None:
        grasp_reports = evaluate_grasps(belief, grid, arm or ArmModel(), n_grasps)
    ids = sorted(belief.ids())
    target_visible = target in ids
    nodes = tuple(ids if target_visible else ids + [target])
    edges: list[DepEdge] = []

    for x, y in below_pairs(belief):
        edges.append(DepEdge(x, y, RelationKind.BELOW, 1.0))

    for x in ids:
        report = grasp_reports.get(x, ())
        if not report or any(f.is_free for _, f in report):
            continue
        n = len(report)
        counts: dict[int, int] = {}
        for _, f in report:
            for y in f.objects:
                counts[y] = counts.get(y, 0) + 1
        for y in sorted(counts):
            edges.append(DepEdge(x, y, RelationKind.GRASP_BLOCKED_BY, counts[y] / n))

    if not target_visible:
        # a stack not on the table rests on something unseen, possibly the target itself
        for base, w in hidden_by_weights(grid, stacks(belief), rank_mode).items():
            edges.append(DepEdge(target, base, RelationKind.HIDDEN_BY, w))

    return DependencyGraph(nodes, tuple(edges), target, target_visible)


def hidden_by_weights(grid: VoxelGrid, table_stacks, rank_mode: RankMode) -> dict[int, float]:
    """Normalised hidden-by weight per stack base; stacks hiding no volume get no edge."""
    vols = {s.base: v for s, v in occlusion_volume_by_stack(grid, table_stacks).items() if v > 0}
    if not vols:
        return {}
    if rank_mode is RankMode.PROPORTIONAL:
        raw = vols
    else:
        raw = {b: 1.0 / v for b, v in vols.items()}
    total = sum(raw.values())
    return {b: min(1.0, raw[b] / total) for b in sorted(raw)}


def sinks(dg: DependencyGraph) -> list[int]:
    """Object nodes without outgoing edges; an unseen target is never a sink."""
    has_out = {e.src for e in dg.edges}
    return [n for n in dg.nodes
            if n not in has_out and (dg.target_visible or n != dg.target)]


def path_ranks(dg: DependencyGraph) -> dict[int, float]:
    """Sum over simple directed paths from the target of the product of edge weights."""
    if len(dg.nodes) > MAX_RANK_NODES:
        raise ValueError(f"simple-path ranking refuses graphs above {MAX_RANK_NODES} nodes")
    succ = dg.successors()
    acc = {n: 0.0 for n in dg.nodes}
    if dg.target not in succ:
        return acc
    on_path = {dg.target}

    def walk(node, prod):
        for e in succ[node]:
            if e.dst in on_path:
                continue
            p = prod * e.weight
            acc[e.dst] += p
            on_path.add(e.dst)
            walk(e.dst, p)
            on_path.discard(e.dst)

    walk(dg.target, 1.0)
    return acc


def rank_sinks(target: int, dg: DependencyGraph,
               floor: float = RANK_FLOOR) -> tuple[list[int], dict[int, float]]:
    """Sinks ordered by descending rank (ties by id) and their ranks."""
    if target != dg.target:
        raise ValueError(f"graph was built for target {dg.target}, not {target}")
    snk = sinks(dg)
    if not snk:
        raise NoSinks("no pickable object in the dependency graph")
    acc = path_ranks(dg)
    ranks = {s: (acc[s] if acc[s] > 0 else floor) for s in snk}
    return sorted(snk, key=lambda s: (-ranks[s], s)), ranks


def biased_shuffle(items: Sequence[int], ranks: Mapping[int, float] | None,
                   rng: np.random.Generator) -> list[int]:
    """Weighted sampling without replacement; uniform when ranks is empty or None."""
    pool = list(items)
    w = [1.0 if not ranks else float(ranks[i]) for i in pool]
    out = []
    while pool:
        total = sum(w)
        u = rng.random() * total
        acc = 0.0
        pick = len(pool) - 1
        for idx, wi in enumerate(w):
            acc += wi
            if u < acc:
                pick = idx
                break
        out.append(pool.pop(pick))
        w.pop(pick)
    return out


def to_dot(dg: DependencyGraph, labels: Mapping[int, str] | None = None) -> str:
    lines = ["digraph dependencies {"]
    for n in dg.nodes:
        name = "T" if n == dg.target else str(n)
        extra = "" if labels is None or n not in labels else f", color=\"{labels[n]}\""
        style = ", style=dashed" if n == dg.target and not dg.target_visible else ""
        lines.append(f"  n{n} [label=\"{name}\"{extra}{style}];")
    for e in dg.edges:
        lines.append(f"  n{e.src} -> n{e.dst} [label=\"{e.kind.value} {e.weight:.3g}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"
