"""Line-oriented query language and star query graphs.

A query names one target and any number of relations::

    target @ cup {object}
    zoro {user} -- like [abstract] -- cup {object}
    cup {object} -- right to [spatial] -- espresso machine {object}

Relations that do not touch the target are dropped (with a warning) so the
result is always a star centered on the target.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterator

from . import embedding as emb
from .embedding import EmbeddingProvider, FeatureVec, normalize_text
from .errors import QueryParseError, UnknownSpatialRelationError
from .scene_model import NODE_SPACE, Direction, NodeKind, RelationKind, Relationship
from .spatial import SpatialVocabulary, resolve_descriptor

NODE_TYPES = {
    "object": NodeKind.OBJECT,
    "user": NodeKind.AGENT,
    "agent": NodeKind.AGENT,
    "region": NodeKind.REGION,
}
NODE_TOKENS = {NodeKind.OBJECT: "object", NodeKind.AGENT: "user", NodeKind.REGION: "region"}

# "[user]" appears in place of "[abstract]" in some LLM outputs
REL_TYPES = {
    "spatial": RelationKind.SPATIAL,
    "abstract": RelationKind.ABSTRACT,
    "user": RelationKind.ABSTRACT,
}

_TARGET = re.compile(r"^target\s*@\s*(?P<name>[^{}\[\]]+?)\s*\{\s*(?P<type>[^{}]*?)\s*\}$", re.IGNORECASE)
_RELATION = re.compile(
    r"^(?P<a>[^{}\[\]]+?)\s*\{\s*(?P<at>[^{}]*?)\s*\}"
    r"\s*--\s*(?P<rel>[^{}\[\]]+?)\s*\[\s*(?P<rt>[^\[\]]*?)\s*\]\s*--\s*"
    r"(?P<b>[^{}\[\]]+?)\s*\{\s*(?P<bt>[^{}]*?)\s*\}$"
)
_FENCE = re.compile(r"^(```|''')")


@dataclass(frozen=True)
class QueryNode:
    name: str
    kind: NodeKind
    feature: FeatureVec = field(compare=False)

    @property
    def key(self) -> tuple[str, NodeKind]:
        return (self.name, self.kind)


@dataclass(frozen=True)
class LeafEdge:
    leaf: int
    direction: Direction
    relationship: Relationship


@dataclass(frozen=True)
class QueryRelation:
    line: int
    src: QueryNode
    dst: QueryNode
    relationship: Relationship


@dataclass(frozen=True)
class ParsedQuery:
    target: QueryNode
    relations: tuple[QueryRelation, ...]


@dataclass(frozen=True)
class QueryGraph:
    center: QueryNode
    leaves: tuple[QueryNode, ...] = ()
    leaf_edges: tuple[LeafEdge, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        touched = set()
        for e in self.leaf_edges:
            if not 0 <= e.leaf < len(self.leaves):
                raise ValueError(f"leaf index {e.leaf} out of range")
            touched.add(e.leaf)
        if len(touched) != len(self.leaves):
            raise ValueError("every leaf needs at least one edge to the center")

    def links(self, leaf: int) -> tuple[tuple[Direction, Relationship], ...]:
        return tuple((e.direction, e.relationship) for e in self.leaf_edges if e.leaf == leaf)

    @property
    def node_count(self) -> int:
        return 1 + len(self.leaves)

    @property
    def edge_count(self) -> int:
        return len(self.leaves)

    def to_dsl(self) -> str:
        c = self.center
        lines = [f"target @ {c.name} {{{NODE_TOKENS[c.kind]}}}"]
        for e in self.leaf_edges:
            leaf = self.leaves[e.leaf]
            src, dst = (c, leaf) if e.direction is Direction.OUT else (leaf, c)
            lines.append(
                f"{src.name} {{{NODE_TOKENS[src.kind]}}} -- {e.relationship.label} "
                f"[{e.relationship.kind.value}] -- {dst.name} {{{NODE_TOKENS[dst.kind]}}}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        def node(n: QueryNode) -> dict[str, str]:
            return {"name": n.name, "kind": n.kind.value}

        def rel(r: Relationship) -> dict[str, Any]:
            out: dict[str, Any] = {"kind": r.kind.value, "label": r.label}
            if r.relation_set is not None:
                out["relation_set"] = sorted(x.value for x in r.relation_set)
            return out

        return {
            "center": node(self.center),
            "leaves": [node(n) for n in self.leaves],
            "edges": [
                {"leaf": e.leaf, "direction": e.direction.value, **rel(e.relationship)} for e in self.leaf_edges
            ],
            "warnings": list(self.warnings),
        }

    def structure(self) -> tuple:
        """Hashable summary used to compare graphs independent of features."""
        return (
            self.center.key,
            tuple(n.key for n in self.leaves),
            tuple(
                (e.leaf, e.direction, e.relationship.kind, e.relationship.label, e.relationship.relation_set)
                for e in self.leaf_edges
            ),
        )


def _content_lines(text: str) -> Iterator[tuple[int, str]]:
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or _FENCE.match(line):
            continue
        yield no, line


class _Builder:
    def __init__(self, provider: EmbeddingProvider, vocabulary: SpatialVocabulary | None):
        self.provider = provider
        self.vocabulary = vocabulary
        self.nodes: dict[tuple[str, NodeKind], QueryNode] = {}

    def node(self, name: str, type_token: str, line: int) -> QueryNode:
        kind = NODE_TYPES.get(type_token.strip().lower())
        if kind is None:
            raise QueryParseError(f"unknown node type {{{type_token}}}", line)
        key = normalize_text(name)
        if not key:
            raise QueryParseError("empty entity name", line)
        found = self.nodes.get((key, kind))
        if found is None:
            found = QueryNode(key, kind, self.provider.embed(NODE_SPACE[kind], key))
            self.nodes[(key, kind)] = found
        return found

    def relationship(self, text: str, type_token: str, line: int) -> Relationship:
        kind = REL_TYPES.get(type_token.strip().lower())
        if kind is None:
            raise QueryParseError(f"unknown relation type [{type_token}]", line)
        label = normalize_text(text)
        if kind is RelationKind.ABSTRACT:
            return Relationship(kind, label=label, feature=self.provider.embed(emb.ABSTRACT, label))
        try:
            desc = resolve_descriptor(label, self.provider, self.vocabulary)
        except UnknownSpatialRelationError as exc:
            raise QueryParseError(str(exc), line) from None
        return Relationship(kind, label=label, relation_set=desc.relations)


def parse_structure(
    text: str, provider: EmbeddingProvider, vocabulary: SpatialVocabulary | None = None
) -> ParsedQuery:
    """Parse every line into nodes and relations without enforcing the star shape."""
    b = _Builder(provider, vocabulary)
    target: QueryNode | None = None
    target_line = None
    relations = []
    for no, line in _content_lines(text):
        m = _TARGET.match(line)
        if m:
            if target is not None:
                raise QueryParseError(f"second target line (first on line {target_line})", no)
            target = b.node(m["name"], m["type"], no)
            target_line = no
            continue
        if line.lower().startswith("target"):
            raise QueryParseError("malformed target line", no)
        m = _RELATION.match(line)
        if not m:
            raise QueryParseError(f"cannot parse {line!r}", no)
        src = b.node(m["a"], m["at"], no)
        dst = b.node(m["b"], m["bt"], no)
        rel = b.relationship(m["rel"], m["rt"], no)
        relations.append(QueryRelation(no, src, dst, rel))
    if target is None:
        raise QueryParseError("no 'target @' line")
    return ParsedQuery(target, tuple(relations))


def extract_star(parsed: ParsedQuery) -> QueryGraph:
    """Keep relations incident to the target; everything else becomes a warning."""
    center = parsed.target
    leaves: list[QueryNode] = []
    index: dict[tuple[str, NodeKind], int] = {}
    edges: list[LeafEdge] = []
    seen = set()
    warnings = []
    for r in parsed.relations:
        src_is_c = r.src.key == center.key
        dst_is_c = r.dst.key == center.key
        if src_is_c == dst_is_c:
            why = "relates the target to itself" if src_is_c else "does not involve the target"
            warnings.append(f"line {r.line}: dropped {r.src.name} -- {r.relationship.label} -- {r.dst.name} ({why})")
            continue
        leaf, direction = (r.dst, Direction.OUT) if src_is_c else (r.src, Direction.IN)
        k = index.get(leaf.key)
        if k is None:
            k = index[leaf.key] = len(leaves)
            leaves.append(leaf)
        rel = r.relationship
        sig = (k, direction, rel.kind, rel.label)
        if sig in seen:
            continue
        seen.add(sig)
        edges.append(LeafEdge(k, direction, rel))
    return QueryGraph(center, tuple(leaves), tuple(edges), tuple(warnings))


def parse_query(
    text: str, provider: EmbeddingProvider, vocabulary: SpatialVocabulary | None = None
) -> QueryGraph:
    return extract_star(parse_structure(text, provider, vocabulary))
