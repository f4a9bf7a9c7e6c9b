import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from shelf_retrieval.bench import scene_for_seed
from shelf_retrieval.depgraph import (MAX_RANK_NODES, RANK_FLOOR, DepEdge, DependencyGraph, NoSinks,
                                      RankMode, RelationKind, biased_shuffle, build_dep_graph,
                                      hidden_by_weights, path_ranks, rank_sinks, sinks, to_dot)
from shelf_retrieval.manipulation import ArmModel, evaluate_grasps
from shelf_retrieval.occlusion import update_voxels_from_image
from shelf_retrieval.scene import Stack
from shelf_retrieval.sensor import render, visible_objects

from helpers import box, cyl, make_scene
from oracles import path_rank_oracle

B, G, H = RelationKind.BELOW, RelationKind.GRASP_BLOCKED_BY, RelationKind.HIDDEN_BY


def _observe(sc, voxel=0.02):
    s = render(sc)
    vis = visible_objects(s)
    belief = sc.belief(vis)
    grid = update_voxels_from_image(s, sc.camera, {o.id: o for o in belief.objects}, sc.workspace, voxel)
    return belief, grid


@st.composite
def graphs(draw, max_nodes=8):
    n = draw(st.integers(2, max_nodes))
    nodes = list(range(n))
    target = draw(st.sampled_from(nodes))
    edges = []
    for a, b in itertools.permutations(nodes, 2):
        for kind in (B, G):
            if draw(st.floats(0, 1)) < 0.2:
                edges.append(DepEdge(a, b, kind, draw(st.floats(1e-3, 1.0))))
    return DependencyGraph(tuple(nodes), tuple(edges), target, True)


def test_single_visible_object_graph():
    sc = make_scene([cyl(0, 0.3, 0.2)])
    belief, grid = _observe(sc)
    dg = build_dep_graph(belief, grid, 0)
    assert dg.nodes == (0,) and dg.edges == ()
    assert sinks(dg) == [0]


def test_stacked_pair_gives_below_edge():
    sc = make_scene([box(0, 0.3, 0.1, 0.08, 0.08, 0.1), cyl(1, 0.3, 0.1, h=0.08, z=0.14)], target=0)
    belief, grid = _observe(sc)
    dg = build_dep_graph(belief, grid, 0)
    below = [e for e in dg.edges if e.kind is B]
    assert below == [DepEdge(0, 1, B, 1.0)]
    assert 0 not in sinks(dg)


def test_grasp_blocked_weights_are_candidate_fractions():
    # the back cylinder sits right behind a wide box: every approach crosses the box
    front = box(0, 0.3, 0.06, 0.3, 0.04, 0.2)
    back = cyl(1, 0.3, 0.2, r=0.03, h=0.12)
    sc = make_scene([front, back], target=1)
    belief = sc.belief(frozenset({0, 1}))
    _, grid = _observe(sc)
    arm = ArmModel()
    reports = evaluate_grasps(belief, grid, arm, 16)
    dg = build_dep_graph(belief, grid, 1, reports, 16)
    blocked = [e for e in dg.edges if e.kind is G and e.src == 1]
    assert blocked, "the back object should be blocked"
    for e in blocked:
        n = sum(e.dst in f.objects for _, f in reports[1])
        assert e.weight == pytest.approx(n / 16)


def test_hidden_by_weights_normalise():
    s1, s2 = Stack(1, frozenset({1})), Stack(2, frozenset({2}))

    class FakeGrid:
        voxel = 1.0
        occluded = np.array([True] * 4)
        occluders = np.array([2, 2, 2, 4], dtype=np.uint64)  # 3 voxels behind 1, one behind 2

    w = hidden_by_weights(FakeGrid, [s1, s2], RankMode.PROPORTIONAL)
    assert w == {1: pytest.approx(0.75), 2: pytest.approx(0.25)}
    w = hidden_by_weights(FakeGrid, [s1, s2], RankMode.INVERSE)
    assert w == {1: pytest.approx(0.25), 2: pytest.approx(0.75)}


def test_hidden_by_sum_is_one_on_generated_scenes():
    for seed in range(8):
        sc = scene_for_seed(seed, 8)
        belief, grid = _observe(sc)
        dg = build_dep_graph(belief, grid, sc.target)
        ws = [e.weight for e in dg.edges if e.kind is H]
        assert not dg.target_visible
        assert sum(ws) == pytest.approx(1.0, abs=1e-9)
        assert all(e.src == sc.target for e in dg.edges if e.kind is H)


def test_edge_weight_bounds_and_hidden_by_source():
    with pytest.raises(ValueError):
        DepEdge(0, 1, B, 0.0)
    with pytest.raises(ValueError):
        DependencyGraph((0, 1, 2), (DepEdge(0, 1, H, 0.5),), 2, False)


def test_sinks_examples():
    assert sinks(DependencyGraph((0, 1, 2), (), 0, True)) == [0, 1, 2]
    assert sinks(DependencyGraph((0, 1), (DepEdge(0, 1, B, 1.0),), 0, True)) == [1]
    # an unseen target is never a sink
    assert sinks(DependencyGraph((0, 9), (), 9, False)) == [0]


@given(graphs())
def test_sinks_equals_outdegree_scan(dg):
    outdeg = {n: 0 for n in dg.nodes}
    for e in dg.edges:
        outdeg[e.src] += 1
    assert set(sinks(dg)) == {n for n, d in outdeg.items() if d == 0}


def test_rank_examples():
    dg = DependencyGraph((9, 1, 2), (DepEdge(9, 1, H, 0.5), DepEdge(1, 2, G, 1.0)), 9, False)
    order, ranks = rank_sinks(9, dg)
    assert order == [2] and ranks[2] == pytest.approx(0.5)
    dg = DependencyGraph((9, 1, 2, 3), (DepEdge(9, 1, H, 0.6), DepEdge(9, 2, H, 0.4),
                                         DepEdge(1, 3, G, 0.5), DepEdge(2, 3, G, 0.5)), 9, False)
    order, ranks = rank_sinks(9, dg)
    assert ranks[3] == pytest.approx(0.5)


@given(graphs())
def test_path_ranks_match_networkx_enumeration(dg):
    got = path_ranks(dg)
    ref = path_rank_oracle(dg)
    for n in dg.nodes:
        assert abs(got[n] - ref[n]) <= 1e-12


def test_rank_floor_and_no_sinks():
    dg = DependencyGraph((0, 1, 2), (DepEdge(0, 1, G, 0.5),), 0, True)
    order, ranks = rank_sinks(0, dg)
    assert ranks == {1: pytest.approx(0.5), 2: RANK_FLOOR}
    assert order == [1, 2]
    cyclic = DependencyGraph((0, 1), (DepEdge(0, 1, G, 1.0), DepEdge(1, 0, G, 1.0)), 0, True)
    with pytest.raises(NoSinks):
        rank_sinks(0, cyclic)
    with pytest.raises(ValueError):
        rank_sinks(1, dg)


def test_rank_guard_on_large_graphs():
    n = MAX_RANK_NODES + 1
    dg = DependencyGraph(tuple(range(n)), (DepEdge(0, 1, G, 1.0),), 0, True)
    with pytest.raises(ValueError):
        rank_sinks(0, dg)


@given(graphs(6), st.permutations(range(6)))
def test_ranks_invariant_under_relabeling(dg, perm):
    m = {n: perm[n] + 100 for n in dg.nodes}
    relabeled = DependencyGraph(tuple(m[n] for n in dg.nodes),
                                tuple(DepEdge(m[e.src], m[e.dst], e.kind, e.weight) for e in dg.edges),
                                m[dg.target], True)
    a, b = path_ranks(dg), path_ranks(relabeled)
    for n in dg.nodes:
        assert a[n] == pytest.approx(b[m[n]], abs=1e-12)


def test_biased_shuffle_uniform_when_ranks_equal():
    rng = np.random.default_rng(7)
    perms = list(itertools.permutations(range(3)))
    counts = dict.fromkeys(perms, 0)
    for _ in range(10_000):
        counts[tuple(biased_shuffle([0, 1, 2], {0: 1.0, 1: 1.0, 2: 1.0}, rng))] += 1
    assert stats.chisquare(list(counts.values())).pvalue > 0.001
    assert biased_shuffle([4], None, rng) == [4]


def test_biased_shuffle_first_element_frequency():
    rng = np.random.default_rng(11)
    first = sum(biased_shuffle([0, 1], {0: 0.9, 1: 0.1}, rng)[0] == 0 for _ in range(10_000))
    assert abs(first / 10_000 - 0.9) <= 0.02


def test_objects_with_something_on_top_are_never_sinks():
    for seed in range(10):
        sc = scene_for_seed(seed, 10)
        belief, grid = _observe(sc)
        dg = build_dep_graph(belief, grid, sc.target)
        snk = set(sinks(dg))
        for e in dg.edges:
            if e.kind is B:
                assert e.weight == 1.0
                assert e.src not in snk


def test_dot_export():
    dg = DependencyGraph((9, 1), (DepEdge(9, 1, H, 1.0),), 9, False)
    text = to_dot(dg)
    assert text.startswith("digraph")
    assert "n9 -> n1" in text and "hidden_by" in text
