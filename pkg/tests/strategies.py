"""Random scene/query builders shared by the property and acceptance tests."""

from __future__ import annotations

import random

from hypothesis import strategies as st

from ovsg import embedding as emb
from ovsg.embedding import EmbeddingProvider
from ovsg.query_dsl import LeafEdge, QueryGraph, QueryNode
from ovsg.scene_model import (
    NODE_SPACE,
    Direction,
    NodeKind,
    Pose3D,
    RelationEdge,
    RelationKind,
    Relationship,
    SceneGraph,
    SceneNode,
)
from ovsg.spatial import default_vocabulary, derive_spatial_edges

WORDS = {
    NodeKind.OBJECT: ["cup", "mug", "table", "book"],
    NodeKind.AGENT: ["tom", "mary", "zoro"],
    NodeKind.REGION: ["kitchen", "office", "lab"],
}
ABSTRACT_WORDS = ["like", "own", "use"]


def provider(dim: int = 16) -> EmbeddingProvider:
    return EmbeddingProvider(stub=True, stub_seed=7, stub_dim=dim)


def random_pose(rng: random.Random, span: float = 4.0) -> Pose3D:
    c = [rng.uniform(0, span) for _ in range(3)]
    h = [rng.uniform(0.05, 1.0) for _ in range(3)]
    return Pose3D(tuple(c), tuple(a - b for a, b in zip(c, h)), tuple(a + b for a, b in zip(c, h)))


def random_scene(rng: random.Random, p: EmbeddingProvider, max_nodes: int = 12) -> SceneGraph:
    n = rng.randint(0, max_nodes)
    nodes = []
    for i in range(n):
        kind = rng.choice(list(NodeKind))
        word = rng.choice(WORDS[kind])
        posed = kind is not NodeKind.AGENT or rng.random() < 0.5
        nodes.append(
            SceneNode(
                id=f"n{i:02d}",
                kind=kind,
                feature=p.embed(NODE_SPACE[kind], word),
                label=word,
                pose=random_pose(rng) if posed else None,
            )
        )
    edges = []
    for _ in range(rng.randint(0, 2 * n)):
        if n < 2:
            break
        a, b = rng.sample(nodes, 2)
        word = rng.choice(ABSTRACT_WORDS)
        edges.append(
            RelationEdge(a.id, b.id, (Relationship(RelationKind.ABSTRACT, word, p.embed(emb.ABSTRACT, word)),))
        )
    partial = SceneGraph(nodes, edges)
    return SceneGraph(nodes, [*edges, *derive_spatial_edges(partial)])


def random_relationship(rng: random.Random, p: EmbeddingProvider) -> Relationship:
    if rng.random() < 0.5:
        word = rng.choice(ABSTRACT_WORDS)
        return Relationship(RelationKind.ABSTRACT, word, p.embed(emb.ABSTRACT, word))
    vocab = default_vocabulary()
    text = rng.choice(sorted(vocab.descriptions))
    return Relationship(RelationKind.SPATIAL, text, relation_set=vocab.descriptions[text])


def random_query(rng: random.Random, p: EmbeddingProvider, max_leaves: int = 4) -> QueryGraph:
    def node() -> QueryNode:
        kind = rng.choice(list(NodeKind))
        word = rng.choice(WORDS[kind])
        return QueryNode(word, kind, p.embed(NODE_SPACE[kind], word))

    center = node()
    leaves, edges = [], []
    for k in range(rng.randint(0, max_leaves)):
        leaves.append(node())
        for _ in range(rng.randint(1, 2)):
            edges.append(LeafEdge(k, rng.choice(list(Direction)), random_relationship(rng, p)))
    return QueryGraph(center, tuple(leaves), tuple(edges))


def query_from_star(rng: random.Random, scene: SceneGraph, center: str, max_leaves: int = 4) -> QueryGraph:
    """A query copied from the scene around ``center``; spatial signatures become their exact relation sets."""
    from ovsg.spatial import describe

    c = scene.nodes[center]
    nbrs = list(scene.neighbors(center))
    rng.shuffle(nbrs)
    leaves, edges = [], []
    for nid in nbrs[:max_leaves]:
        x = scene.nodes[nid]
        k = len(leaves)
        leaves.append(QueryNode(x.label, x.kind, x.feature))
        for direction, pair in ((Direction.OUT, (center, nid)), (Direction.IN, (nid, center))):
            e = scene.edge(*pair)
            if e is None:
                continue
            for r in e.relationships:
                if r.kind is RelationKind.SPATIAL:
                    text, rels = describe(r.signature)
                    r = Relationship(RelationKind.SPATIAL, text, relation_set=rels)
                edges.append(LeafEdge(k, direction, r))
    return QueryGraph(QueryNode(c.label, c.kind, c.feature), tuple(leaves), tuple(edges))


def boxes(span: float = 10.0):
    """Hypothesis strategy for valid poses with midpoint centers."""
    coord = st.floats(-span, span, allow_nan=False, allow_infinity=False)
    half = st.floats(0.0, span / 2, allow_nan=False, allow_infinity=False)
    return st.builds(
        lambda cx, cy, cz, hx, hy, hz: Pose3D((cx, cy, cz), (cx - hx, cy - hy, cz - hz), (cx + hx, cy + hy, cz + hz)),
        coord, coord, coord, half, half, half,
    )
