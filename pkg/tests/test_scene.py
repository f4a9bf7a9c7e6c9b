import json
import math
from itertools import combinations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given

from shelf_retrieval.geometry import Cylinder
from shelf_retrieval.scene import (CONTACT_EPS, ObjectInstance, PickBlocked, PlaceCollision, Pose,
                                   SceneError, Workspace, apply_pick, apply_place, apply_restore,
                                   below_pairs, contacts, load_scene, object_distance, resting_on,
                                   save_scene, scene_from_dict, scene_to_dict, stacks)
from shelf_retrieval.bench import scene_for_seed

from helpers import WS, box, cyl, make_scene, table_objects


def test_pose_yaw_normalised():
    assert Pose(0, 0, 0, -math.pi / 2).yaw == pytest.approx(3 * math.pi / 2)
    assert Pose(0, 0, 0, 2 * math.pi).yaw == 0.0
    with pytest.raises(ValueError):
        Pose(float("nan"), 0, 0)


def test_workspace_validation():
    with pytest.raises(ValueError):
        Workspace((0, 0, 0), (0.0, 1, 1))


def test_scene_rejects_bad_configurations():
    with pytest.raises(SceneError, match="interpenetrate"):
        make_scene([cyl(0, 0.3, 0.2), cyl(1, 0.32, 0.2)])
    with pytest.raises(SceneError, match="workspace"):
        make_scene([cyl(0, 0.01, 0.2)])
    with pytest.raises(SceneError, match="supported"):
        make_scene([cyl(0, 0.3, 0.2, z=0.2)])
    with pytest.raises(SceneError, match="duplicate"):
        make_scene([cyl(0, 0.1, 0.2), cyl(0, 0.4, 0.2)])
    with pytest.raises(SceneError, match="target"):
        make_scene([cyl(0, 0.1, 0.2)], target=5)


def test_stacked_scene_is_valid_and_relations_hold():
    base = box(0, 0.3, 0.2, 0.08, 0.08, 0.1)
    top = cyl(1, 0.3, 0.2, h=0.1, z=0.15)
    side = cyl(2, 0.3 + 0.04 + 0.03, 0.2, h=0.05)  # touching the base's side
    far = cyl(3, 0.1, 0.3)
    sc = make_scene([base, top, side, far])
    assert contacts(sc) == {frozenset({0, 1}), frozenset({0, 2})}
    assert below_pairs(sc) == [(0, 1), (2, 0)]
    st_ = {s.base: s.members for s in stacks(sc)}
    assert st_ == {0: frozenset({0, 1, 2}), 3: frozenset({3})}
    assert resting_on(sc, 0) == [1]


def _surface_points(o: ObjectInstance, n=64):
    """Points sampled on the boundary of a solid (side walls and caps)."""
    z0, z1 = o.zrange
    zs = np.linspace(z0, z1, 9)
    if isinstance(o.shape, Cylinder):
        th = np.linspace(0, 2 * math.pi, n, endpoint=False)
        ring = np.stack([o.pose.x + o.shape.radius * np.cos(th), o.pose.y + o.shape.radius * np.sin(th)], 1)
    else:
        pts = np.array(o.section().pts)
        ring = np.concatenate([np.linspace(pts[i], pts[(i + 1) % 4], n // 4, endpoint=False)
                               for i in range(4)])
    side = np.array([[x, y, z] for z in zs for x, y in ring])
    cap = np.array([[x, y, z] for z in (z0, z1) for x, y in ring])
    return np.concatenate([side, cap])


def _sampled_gap(a, b):
    pa, pb = _surface_points(a), _surface_points(b)
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    return d.min()


@given(table_objects(0), table_objects(1))
def test_object_distance_against_surface_sampling(a, b):
    d = object_distance(a, b)
    if d < 0:
        return
    gap = _sampled_gap(a, b)
    # sampling only overestimates the gap, by at most the sample spacing
    assert gap >= d - 1e-9
    assert gap <= d + 0.02


def test_contacts_oracle_on_generated_scenes():
    for seed in range(5):
        sc = scene_for_seed(seed, 8)
        got = contacts(sc)
        for a, b in combinations(sc.objects, 2):
            gap = _sampled_gap(a, b)
            pair = frozenset((a.id, b.id))
            if gap <= CONTACT_EPS:
                assert pair in got
            if pair in got:
                assert gap <= CONTACT_EPS + 0.02
            elif gap > 0.02:
                assert object_distance(a, b) > CONTACT_EPS


def test_stacks_match_connected_components():
    for seed in range(10):
        sc = scene_for_seed(seed, 10)
        g = nx.Graph()
        g.add_nodes_from(sc.ids())
        g.add_edges_from(below_pairs(sc))
        comps = {frozenset(c) for c in nx.connected_components(g)}
        got = stacks(sc)
        assert {s.members for s in got} == comps
        for s in got:
            on_table = [m for m in s.members if abs(sc.get(m).bottom - WS.table_z) < 1e-9]
            assert s.base == min(on_table)


def test_pick_place_restore_roundtrip():
    base = box(0, 0.3, 0.2, 0.08, 0.08, 0.1)
    top = cyl(1, 0.3, 0.2, h=0.1, z=0.15)
    other = cyl(2, 0.1, 0.1)
    sc = make_scene([base, top, other])
    with pytest.raises(PickBlocked):
        apply_pick(sc, 0)
    held = apply_pick(sc, 2)
    assert held.held.id == 2 and 2 not in held.ids()
    with pytest.raises(PlaceCollision):
        apply_place(held, 2, Pose(0.3, 0.2, 0.06))
    moved = apply_place(held, 2, Pose(0.5, 0.3, 0.0))
    assert moved.get(2).bottom == pytest.approx(WS.table_z)
    restored = apply_restore(held, 2, other.pose)
    assert restored == sc


def test_json_roundtrip_exact(tmp_path):
    sc = scene_for_seed(3, 8)
    path = tmp_path / "s.json"
    save_scene(sc, path)
    assert load_scene(path) == sc
    assert scene_from_dict(json.loads(json.dumps(scene_to_dict(sc)))) == sc


def test_json_rejects_malformed(tmp_path):
    with pytest.raises(SceneError):
        scene_from_dict({"format": "other"})
    d = scene_to_dict(scene_for_seed(0, 6))
    del d["objects"][0]["shape"]
    with pytest.raises(SceneError):
        scene_from_dict(d)
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SceneError):
        load_scene(p)
