import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovsg.errors import QueryParseError
from ovsg.query_dsl import extract_star, parse_query, parse_structure
from ovsg.scene_model import Direction, NodeKind, RelationKind
from ovsg.spatial import CanonicalSpatialRelation as Rel

from strategies import provider, random_query


def read(data_dir, name):
    return (data_dir / "queries" / name).read_text()


def test_coffee_cup_block(data_dir, stub):
    q = parse_query(read(data_dir, "coffee_cup.txt"), stub)
    assert q.center.key == ("cup", NodeKind.OBJECT)
    assert [n.name for n in q.leaves] == ["zoro", "espresso machine", "trash can", "coffee kettle"]
    assert q.leaves[0].kind is NodeKind.AGENT
    got = [(e.leaf, e.direction, e.relationship.kind, e.relationship.relation_set) for e in q.leaf_edges]
    assert got == [
        (0, Direction.IN, RelationKind.ABSTRACT, None),
        (1, Direction.OUT, RelationKind.SPATIAL, frozenset({Rel.RIGHT_OF})),
        (2, Direction.OUT, RelationKind.SPATIAL, frozenset({Rel.LEFT_OF})),
        (3, Direction.IN, RelationKind.SPATIAL, frozenset({Rel.BEHIND})),
    ]
    assert q.leaf_edges[0].relationship.label == "like"
    assert q.warnings == ()


def test_fixture_query_matches_example_block(data_dir, stub):
    a = parse_query((data_dir / "cup_query.txt").read_text(), stub)
    b = parse_query(read(data_dir, "coffee_cup.txt"), stub)
    assert a.structure() == b.structure()


def test_mislabeled_spatial_like_reports_line(data_dir, stub):
    with pytest.raises(QueryParseError) as info:
        parse_query(read(data_dir, "drink.txt"), stub)
    assert info.value.line == 2
    assert "like" in str(info.value)


def test_user_relation_token_is_abstract(data_dir, stub):
    q = parse_query(read(data_dir, "favourite_cup.txt"), stub)
    kinds = {q.leaves[e.leaf].name: e.relationship.kind for e in q.leaf_edges}
    assert kinds == {"mary": RelationKind.ABSTRACT, "kitchen": RelationKind.SPATIAL}
    assert q.leaves[1].kind is NodeKind.REGION


def test_cracker_box_drops_table_kitchen(data_dir, stub):
    q = parse_query(read(data_dir, "cracker_box.txt"), stub)
    assert [n.name for n in q.leaves] == ["table"]
    assert q.leaf_edges[0].relationship.relation_set == {Rel.NEAR}
    assert len(q.warnings) == 1 and "kitchen" in q.warnings[0]


@pytest.mark.parametrize("name", ["coffee_cup.txt", "cracker_box.txt", "favourite_cup.txt", "drink.txt"])
def test_corpus_is_total(data_dir, stub, name):
    # every block yields a graph or an error carrying a line number
    try:
        q = parse_query(read(data_dir, name), stub)
    except QueryParseError as exc:
        assert exc.line is not None
    else:
        assert q.node_count == 1 + len(q.leaves)


def test_lone_target_line(stub):
    q = parse_query("target @ cup {object}", stub)
    assert q.leaves == () and q.leaf_edges == () and q.edge_count == 0


def test_three_incident_two_foreign(stub):
    text = "\n".join(
        [
            "target @ cup {object}",
            "cup {object} -- near [spatial] -- plate {object}",
            "tom {user} -- own [abstract] -- cup {object}",
            "cup {object} -- in [spatial] -- kitchen {region}",
            "plate {object} -- on [spatial] -- table {object}",
            "tom {user} -- like [abstract] -- plate {object}",
        ]
    )
    q = parse_query(text, stub)
    assert len(q.leaves) == 3
    assert len(q.warnings) == 2
    assert q.warnings[0].startswith("line 5:")


def test_star_input_is_identity(data_dir, stub):
    parsed = parse_structure(read(data_dir, "coffee_cup.txt"), stub)
    q = extract_star(parsed)
    assert len(q.leaf_edges) == len(parsed.relations)


def test_names_are_normalized(stub):
    a = parse_query("target @ Coffee  Cup {Object}\nTOM {user} -- like [abstract] -- coffee cup {object}", stub)
    assert a.center.name == "coffee cup" and a.leaves[0].name == "tom"
    assert len(a.leaves) == 1


def test_duplicate_lines_merge(stub):
    text = (
        "target @ cup {object}\n"
        "tom {user} -- like [abstract] -- cup {object}\n"
        "tom {user} -- like [abstract] -- cup {object}\n"
        "tom {user} -- own [abstract] -- cup {object}\n"
    )
    q = parse_query(text, stub)
    assert len(q.leaves) == 1
    assert [r.label for _, r in q.links(0)] == ["like", "own"]


@pytest.mark.parametrize(
    "text, line",
    [
        ("cup {object} -- near [spatial] -- plate {object}", None),
        ("target @ cup {object}\ntarget @ plate {object}", 2),
        ("target @ cup {thing}", 1),
        ("target @ cup {object}\ncup {object} -- near [temporal] -- plate {object}", 2),
        ("target @ cup {object}\ncup {object} near plate", 2),
        ("target cup", 1),
    ],
)
def test_parse_errors(stub, text, line):
    with pytest.raises(QueryParseError) as info:
        parse_query(text, stub)
    assert info.value.line == line


def test_self_relation_is_dropped(stub):
    q = parse_query("target @ cup {object}\ncup {object} -- near [spatial] -- cup {object}", stub)
    assert q.leaves == () and len(q.warnings) == 1


def test_dsl_round_trip_example(data_dir, stub):
    q = parse_query(read(data_dir, "favourite_cup.txt"), stub)
    again = parse_query(q.to_dsl(), stub)
    assert again.structure() == q.structure()


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_round_trip_random(seed):
    p = provider()
    q = random_query(random.Random(seed), p)
    again = parse_query(q.to_dsl(), p)
    # re-parsing merges exact duplicates and leaves that share a name with the center
    assert again.center.key == q.center.key
    for e in again.leaf_edges:
        assert again.leaves[e.leaf].key != again.center.key
    assert parse_query(again.to_dsl(), p).structure() == again.structure()
    keys = [n.key for n in q.leaves]
    sigs = [(e.leaf, e.direction, e.relationship.kind, e.relationship.label) for e in q.leaf_edges]
    if len(set(keys)) == len(keys) and q.center.key not in keys and len(set(sigs)) == len(sigs):
        assert again.structure() == q.structure()
