import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ovsg.evaluation import (
    BB,
    POINTS,
    EvalRecord,
    RankedHit,
    generate_queries,
    iou_3d,
    iou_bb,
    run_eval,
    success_rate,
)
from ovsg.matching import GRAPH_METHODS, MatchParams, Method, leaf_options
from ovsg.query_dsl import parse_query
from ovsg.scene_model import NodeKind, Pose3D, SceneGraph, load_scene, local_star
from ovsg.synthetic import distractor_scene

from strategies import boxes


def unit_cube(x=0.0):
    return Pose3D((x + 0.5, 0.5, 0.5), (x, 0, 0), (x + 1, 1, 1))


def test_iou_bb_examples():
    assert iou_bb(unit_cube(), unit_cube()) == 1.0
    assert iou_bb(unit_cube(), unit_cube(3.0)) == 0.0
    assert abs(iou_bb(unit_cube(), unit_cube(0.5)) - 1 / 3) < 1e-12


def test_iou_3d_examples():
    assert iou_3d(range(10), range(10)) == 1.0
    assert iou_3d(range(10), range(10, 20)) == 0.0
    assert abs(iou_3d(range(100), range(50, 150)) - 50 / 150) < 1e-12
    assert iou_3d([], []) == 1.0


@given(boxes(), boxes())
def test_iou_bb_symmetric_and_bounded(a, b):
    assert iou_bb(a, b) == iou_bb(b, a)
    assert 0.0 <= iou_bb(a, b) <= 1.0
    if a.volume > 0:
        assert iou_bb(a, a) == 1.0


@given(boxes(), boxes(), st.floats(0, 1))
def test_shrinking_never_grows_intersection(a, b, t):
    shrunk = Pose3D(
        a.center,
        tuple(c - t * (c - lo) for c, lo in zip(a.center, a.min_corner)),
        tuple(c + t * (hi - c) for c, hi in zip(a.center, a.max_corner)),
    )

    def inter(x, y):
        return math.prod(max(0.0, min(x.max_corner[i], y.max_corner[i]) - max(x.min_corner[i], y.min_corner[i])) for i in range(3))

    assert inter(shrunk, b) <= inter(a, b) + 1e-12


def record(ious, points=None):
    """One query whose method "m" returned hits with the given box IoUs."""
    hits = tuple(RankedHit(f"h{i}", 1.0 - i / 10, v, None if points is None else points[i]) for i, v in enumerate(ious))
    gt_points = None if points is None else frozenset(range(3))
    return EvalRecord("q", "gt", unit_cube(), gt_points, {"m": hits})


def test_success_rate_counts():
    recs = [record([1.0])] * 6 + [record([0.1])] * 4
    assert success_rate(recs, BB, 1) == 60.0
    assert success_rate([record([0.9])] * 5, BB, 1) == 100.0


def test_top3_recovers_later_hits():
    recs = [record([1.0, 0, 0])] * 4 + [record([0.0, 0.0, 0.8])] * 2 + [record([0.0, 0.1, 0.2])] * 4
    assert success_rate(recs, BB, 1) == 40.0
    assert success_rate(recs, BB, 3) == 60.0


def test_box_threshold_inclusive_points_strict():
    recs = [record([0.5], points=[0.5])]
    assert success_rate(recs, BB, 1, 0.5) == 100.0
    assert success_rate(recs, POINTS, 1, 0.5) == 0.0


def test_success_rate_errors():
    with pytest.raises(ValueError):
        success_rate([], BB, 1)
    with pytest.raises(ValueError):
        success_rate([record([1.0])], BB, 1, threshold=0.0)


def test_failed_query_scores_zero():
    failed = EvalRecord("q", "gt", unit_cube(), None, error="line 2: boom")
    assert failed.failed
    assert success_rate([failed, record([1.0])], BB, 1, method="m") == 50.0


@given(
    st.lists(st.lists(st.floats(0, 1), min_size=1, max_size=5), min_size=1, max_size=12),
    st.floats(0.01, 1),
    st.floats(0.01, 1),
)
def test_success_rate_monotone(raw, t1, t2):
    recs = [record(ious) for ious in raw]
    lo, hi = sorted((t1, t2))
    for metric in (BB,):
        assert success_rate(recs, metric, 1, hi) <= success_rate(recs, metric, 1, lo)
        assert success_rate(recs, metric, 1, lo) <= success_rate(recs, metric, 3, lo)


@pytest.fixture
def synthetic(tmp_path, stub):
    def build(**kwargs):
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(distractor_scene(**kwargs)))
        return load_scene(path, stub)

    return build


def test_generation_is_deterministic(synthetic):
    scene = synthetic(n_rooms=2)
    a = generate_queries(scene, 30, seed=5)
    assert a == generate_queries(scene, 30, seed=5)
    assert a != generate_queries(scene, 30, seed=6)


def test_single_object_in_region(tmp_path, stub):
    scene = {
        "objects": [{"id": "o1", "label": "cup", "bbox": {"min": [0, 0, 0], "max": [0.2, 0.2, 0.2]}}],
        "regions": [{"id": "r1", "name": "kitchen", "bbox": {"min": [-4, -4, 0], "max": [4, 4, 3]}}],
    }
    path = tmp_path / "s.json"
    path.write_text(json.dumps(scene))
    g = load_scene(path, stub)
    (q,) = generate_queries(g, 1, seed=0)
    assert q.text == "target @ cup {object}\ncup {object} -- in [spatial] -- kitchen {region}"
    assert q.gt_id == "o1"


def test_generated_queries_reference_true_relations(synthetic, stub):
    scene = synthetic(n_rooms=2, n_labels=6, n_agents=6)
    assert len(scene.nodes) == 20
    queries = generate_queries(scene, 200, seed=1)
    assert len(queries) == 200
    for gq in queries:
        q = parse_query(gq.text, stub)
        assert q.warnings == () and len(q.leaves) >= 1
        table = leaf_options(q, local_star(scene, gq.gt_id))
        for opts in table:
            # some true neighbor carries the leaf's name and satisfies its relation
            assert any(dn < 1e-9 and de <= 0.5 + 1e-12 for dn, de, _ in opts)


def test_generation_needs_eligible_target(stub):
    with pytest.raises(ValueError):
        generate_queries(SceneGraph([]), 3, seed=0)


def test_run_eval_perfect_agent_queries(synthetic, stub):
    scene = synthetic(n_rooms=3)
    gen = generate_queries(scene, 50, seed=2, reference_kinds=[NodeKind.AGENT], max_leaves=1)
    corpus = [{"query": g.text, "gt_id": g.gt_id} for g in gen]
    report, _ = run_eval(scene, corpus, [Method.LIKELIHOOD], MatchParams(), stub)
    row = report.to_dict()["likelihood"]["top1"]
    assert row["sr_bb"] == 100.0 and row["iou_bb"] == 1.0


def test_run_eval_records_failures(synthetic, stub):
    scene = synthetic(n_rooms=2)
    corpus = [{"query": g.text, "gt_id": g.gt_id} for g in generate_queries(scene, 9, seed=3)]
    corpus.insert(4, {"query": "target @ cup {object}\ntom {user} -- like [spatial] -- cup {object}", "gt_id": corpus[0]["gt_id"]})
    report, records = run_eval(scene, corpus, list(GRAPH_METHODS), MatchParams(), stub, jobs=3)
    for m in GRAPH_METHODS:
        entry = report.to_dict()[m.value]
        assert (entry["queries"], entry["evaluated"], entry["failed"]) == (10, 9, 1)
        assert entry["top3"]["sr_bb"] >= entry["top1"]["sr_bb"]
    assert records[4].failed and "line 2" in records[4].error
    assert [r.query_id for r in records] == [str(i) for i in range(10)]


def test_run_eval_rejects_unknown_gt(synthetic, stub):
    scene = synthetic(n_rooms=1)
    with pytest.raises(ValueError, match="gt_id"):
        run_eval(scene, [{"query": "target @ cup {object}", "gt_id": "nope"}], [Method.LIKELIHOOD], MatchParams(), stub)


def test_run_eval_jobs_do_not_change_report(synthetic, stub):
    scene = synthetic(n_rooms=2)
    corpus = [{"query": g.text, "gt_id": g.gt_id} for g in generate_queries(scene, 40, seed=4)]
    one = run_eval(scene, corpus, list(Method), MatchParams(), stub, jobs=1)[0].to_json()
    four = run_eval(scene, corpus, list(Method), MatchParams(), stub, jobs=4)[0].to_json()
    assert one == four
