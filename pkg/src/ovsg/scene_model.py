"""Scene graph domain types, scene-file ingestion and graph serialization."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from . import embedding as emb
from .embedding import EmbeddingProvider, FeatureVec
from .errors import DimensionMismatchError, SceneFormatError

if TYPE_CHECKING:
    from .spatial import CanonicalSpatialRelation, SpatialParams, SpatialSignature

logger = logging.getLogger(__name__)


class NodeKind(Enum):
    OBJECT = "object"
    AGENT = "agent"
    REGION = "region"

    @classmethod
    def parse(cls, text: str) -> NodeKind:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown node kind {text!r}") from None


class RelationKind(Enum):
    SPATIAL = "spatial"
    ABSTRACT = "abstract"

    @classmethod
    def parse(cls, text: str) -> RelationKind:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown relation kind {text!r}") from None


class Direction(Enum):
    """Orientation of a relationship relative to a star's center."""

    OUT = "out"  # center -> other
    IN = "in"  # other -> center

    def flipped(self) -> Direction:
        return Direction.IN if self is Direction.OUT else Direction.OUT


# embedding space used for each node kind's feature
NODE_SPACE = {
    NodeKind.OBJECT: emb.OBJECT,
    NodeKind.AGENT: emb.NAME,
    NodeKind.REGION: emb.NAME,
}

Vec3 = tuple[float, float, float]


def _vec3(value: Any, what: str) -> Vec3:
    try:
        x, y, z = (float(v) for v in value)
    except (TypeError, ValueError):
        raise SceneFormatError(f"{what} must be three numbers, got {value!r}") from None
    if not all(math.isfinite(c) for c in (x, y, z)):
        raise SceneFormatError(f"{what} must be finite, got {value!r}")
    return (x, y, z)


@dataclass(frozen=True)
class Pose3D:
    """Axis-aligned box plus a reference center (not necessarily the midpoint)."""

    center: Vec3
    min_corner: Vec3
    max_corner: Vec3

    def __post_init__(self) -> None:
        for lo, hi in zip(self.min_corner, self.max_corner):
            if lo > hi:
                raise SceneFormatError(f"min corner {self.min_corner} exceeds max corner {self.max_corner}")
        tol = 1e-6 * self.diagonal
        for c, lo, hi in zip(self.center, self.min_corner, self.max_corner):
            if c < lo - tol or c > hi + tol:
                raise SceneFormatError(f"center {self.center} outside box {self.min_corner}..{self.max_corner}")

    @classmethod
    def from_box(cls, min_corner: Iterable[float], max_corner: Iterable[float]) -> Pose3D:
        lo, hi = tuple(map(float, min_corner)), tuple(map(float, max_corner))
        mid = tuple((a + b) / 2.0 for a, b in zip(lo, hi))
        return cls(mid, lo, hi)  # type: ignore[arg-type]

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Pose3D:
        try:
            lo = _vec3(raw["min"], "bbox.min")
            hi = _vec3(raw["max"], "bbox.max")
        except (KeyError, TypeError):
            raise SceneFormatError(f"bbox needs 'min' and 'max', got {raw!r}") from None
        if "center" in raw:
            return cls(_vec3(raw["center"], "bbox.center"), lo, hi)
        return cls.from_box(lo, hi)

    def to_dict(self) -> dict[str, list[float]]:
        return {"min": list(self.min_corner), "max": list(self.max_corner), "center": list(self.center)}

    @property
    def extents(self) -> Vec3:
        return tuple(hi - lo for lo, hi in zip(self.min_corner, self.max_corner))  # type: ignore[return-value]

    @property
    def diagonal(self) -> float:
        return math.sqrt(sum(e * e for e in self.extents))

    @property
    def volume(self) -> float:
        x, y, z = self.extents
        return x * y * z

    def translated(self, offset: Iterable[float]) -> Pose3D:
        dx, dy, dz = offset
        shift = lambda v: (v[0] + dx, v[1] + dy, v[2] + dz)  # noqa: E731
        return Pose3D(shift(self.center), shift(self.min_corner), shift(self.max_corner))


@dataclass(frozen=True)
class SceneNode:
    id: str
    kind: NodeKind
    feature: FeatureVec
    label: str | None = None
    pose: Pose3D | None = None
    point_indices: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if self.kind is NodeKind.OBJECT and self.pose is None:
            raise SceneFormatError(f"object node {self.id!r} is missing its pose")


@dataclass(frozen=True)
class Relationship:
    kind: RelationKind
    label: str | None = None
    feature: FeatureVec | None = None
    relation_set: frozenset[CanonicalSpatialRelation] | None = None
    signature: SpatialSignature | None = None

    def __post_init__(self) -> None:
        if self.kind is RelationKind.ABSTRACT:
            if self.feature is None:
                raise ValueError("abstract relationship needs a feature")
        elif (self.relation_set is None) == (self.signature is None):
            raise ValueError("spatial relationship needs exactly one of relation_set or signature")


@dataclass(frozen=True)
class RelationEdge:
    src: str
    dst: str
    relationships: tuple[Relationship, ...]

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ValueError(f"self-loop on {self.src!r}")
        if not self.relationships:
            raise ValueError(f"edge {self.src!r}->{self.dst!r} has no relationships")


class SceneGraph:
    """Immutable typed graph; edges keyed by ordered ``(src, dst)`` pair.

    Duplicate ``(src, dst)`` edges passed to the constructor merge their
    relationship lists.
    """

    def __init__(self, nodes: Iterable[SceneNode], edges: Iterable[RelationEdge] = (), scene_id: str = ""):
        self.scene_id = scene_id
        node_map: dict[str, SceneNode] = {}
        for n in nodes:
            if n.id in node_map:
                raise SceneFormatError(f"duplicate node id {n.id!r}")
            node_map[n.id] = n
        merged: dict[tuple[str, str], list[Relationship]] = {}
        for e in edges:
            for end in (e.src, e.dst):
                if end not in node_map:
                    raise SceneFormatError(f"unknown node reference {end!r}")
            merged.setdefault((e.src, e.dst), []).extend(e.relationships)
        self._nodes = MappingProxyType(node_map)
        self._edges = MappingProxyType(
            {key: RelationEdge(key[0], key[1], tuple(rels)) for key, rels in sorted(merged.items())}
        )
        adj: dict[str, set[str]] = {nid: set() for nid in node_map}
        for src, dst in self._edges:
            adj[src].add(dst)
            adj[dst].add(src)
        self._neighbors = {nid: tuple(sorted(ns)) for nid, ns in adj.items()}

    @property
    def nodes(self) -> Mapping[str, SceneNode]:
        return self._nodes

    @property
    def edges(self) -> Mapping[tuple[str, str], RelationEdge]:
        return self._edges

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        return self._neighbors[node_id]

    def edge(self, src: str, dst: str) -> RelationEdge | None:
        return self._edges.get((src, dst))

    def __len__(self) -> int:
        return len(self._nodes)

    def __repr__(self) -> str:
        return f"SceneGraph({self.scene_id!r}, nodes={len(self._nodes)}, edges={len(self._edges)})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "nodes": [_node_to_dict(n) for n in self._nodes.values()],
            "edges": [
                {"src": e.src, "dst": e.dst, "relationships": [_rel_to_dict(r) for r in e.relationships]}
                for e in self._edges.values()
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> SceneGraph:
        try:
            nodes = [_node_from_dict(n) for n in raw["nodes"]]
            edges = [
                RelationEdge(e["src"], e["dst"], tuple(_rel_from_dict(r) for r in e["relationships"]))
                for e in raw["edges"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SceneFormatError):
                raise
            raise SceneFormatError(f"malformed graph file ({exc!r})") from exc
        return cls(nodes, edges, scene_id=raw.get("scene_id", ""))

    @classmethod
    def load(cls, path: str | os.PathLike) -> SceneGraph:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SceneFormatError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(raw)


def _feature_to_dict(f: FeatureVec) -> dict[str, Any]:
    return {"space": f.space, "values": f.tolist()}


def _node_to_dict(n: SceneNode) -> dict[str, Any]:
    out: dict[str, Any] = {"id": n.id, "kind": n.kind.value, "feature": _feature_to_dict(n.feature)}
    if n.label is not None:
        out["label"] = n.label
    if n.pose is not None:
        out["bbox"] = n.pose.to_dict()
    if n.point_indices is not None:
        out["point_indices"] = sorted(n.point_indices)
    return out


def _node_from_dict(raw: Mapping[str, Any]) -> SceneNode:
    f = raw["feature"]
    return SceneNode(
        id=str(raw["id"]),
        kind=NodeKind.parse(raw["kind"]),
        feature=FeatureVec(f["space"], f["values"]),
        label=raw.get("label"),
        pose=Pose3D.from_dict(raw["bbox"]) if "bbox" in raw else None,
        point_indices=frozenset(int(i) for i in raw["point_indices"]) if "point_indices" in raw else None,
    )


def _rel_to_dict(r: Relationship) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": r.kind.value}
    if r.label is not None:
        out["label"] = r.label
    if r.feature is not None:
        out["feature"] = _feature_to_dict(r.feature)
    if r.relation_set is not None:
        out["relation_set"] = sorted(rel.value for rel in r.relation_set)
    if r.signature is not None:
        out["signature"] = r.signature.to_dict()
    return out


def _rel_from_dict(raw: Mapping[str, Any]) -> Relationship:
    from .spatial import CanonicalSpatialRelation, SpatialSignature

    f = raw.get("feature")
    rs = raw.get("relation_set")
    sig = raw.get("signature")
    return Relationship(
        kind=RelationKind.parse(raw["kind"]),
        label=raw.get("label"),
        feature=FeatureVec(f["space"], f["values"]) if f is not None else None,
        relation_set=frozenset(CanonicalSpatialRelation(v) for v in rs) if rs is not None else None,
        signature=SpatialSignature.from_dict(sig) if sig is not None else None,
    )


@dataclass(frozen=True)
class StarView:
    """A node, its incident edges, and its neighbors.

    ``links`` merges both edge directions per neighbor, so the star has one
    logical edge per neighbor.
    """

    center: SceneNode
    neighbors: Mapping[str, SceneNode]
    edges: tuple[RelationEdge, ...]
    links: Mapping[str, tuple[tuple[Direction, Relationship], ...]] = field(repr=False)

    @property
    def node_count(self) -> int:
        return 1 + len(self.neighbors)

    @property
    def edge_count(self) -> int:
        return len(self.links)


def local_star(scene: SceneGraph, center: str) -> StarView:
    if center not in scene.nodes:
        raise KeyError(f"unknown center node {center!r}")
    neighbors = {}
    edges = []
    links = {}
    for nid in scene.neighbors(center):
        neighbors[nid] = scene.nodes[nid]
        oriented: list[tuple[Direction, Relationship]] = []
        out_edge = scene.edge(center, nid)
        in_edge = scene.edge(nid, center)
        if out_edge is not None:
            edges.append(out_edge)
            oriented.extend((Direction.OUT, r) for r in out_edge.relationships)
        if in_edge is not None:
            edges.append(in_edge)
            oriented.extend((Direction.IN, r) for r in in_edge.relationships)
        links[nid] = tuple(oriented)
    return StarView(scene.nodes[center], MappingProxyType(neighbors), tuple(edges), MappingProxyType(links))


def _read_bbox(rec: Mapping[str, Any], where: str, required: bool) -> Pose3D | None:
    raw = rec.get("bbox")
    if raw is None:
        if required:
            raise SceneFormatError(f"{where}: missing pose (bbox)")
        return None
    try:
        return Pose3D.from_dict(raw)
    except SceneFormatError as exc:
        raise SceneFormatError(f"{where}: {exc}") from None


def load_scene(
    path: str | os.PathLike,
    embeddings: EmbeddingProvider,
    spatial_params: SpatialParams | None = None,
) -> SceneGraph:
    """Read a scene description file into a SceneGraph.

    Objects keep their file features when given, otherwise their label is
    encoded in the object space. Agent and region names go to the name space,
    abstract relation labels to the abstract space. Spatial edges come from
    ``spatial_relations`` when the file lists them and are derived from
    poses otherwise.
    """
    from . import spatial

    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneFormatError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise SceneFormatError(f"{path}: top level must be an object")

    obj_dim = embeddings.dim(emb.OBJECT)
    nodes: list[SceneNode] = []
    try:
        for i, rec in enumerate(raw.get("objects", [])):
            where = f"{path}: objects[{i}]"
            label = str(rec["label"])
            if rec.get("feature") is not None:
                feat = FeatureVec(emb.OBJECT, rec["feature"])
                if feat.dim != obj_dim:
                    raise DimensionMismatchError(
                        f"{where}: feature dimension {feat.dim} does not match object space dimension {obj_dim}"
                    )
            else:
                feat = embeddings.embed(emb.OBJECT, label)
            pts = rec.get("point_indices")
            nodes.append(
                SceneNode(
                    id=str(rec["id"]),
                    kind=NodeKind.OBJECT,
                    feature=feat,
                    label=label,
                    pose=_read_bbox(rec, where, required=True),
                    point_indices=frozenset(int(p) for p in pts) if pts is not None else None,
                )
            )
        for key, kind in (("agents", NodeKind.AGENT), ("regions", NodeKind.REGION)):
            for i, rec in enumerate(raw.get(key, [])):
                where = f"{path}: {key}[{i}]"
                name = str(rec["name"])
                nodes.append(
                    SceneNode(
                        id=str(rec["id"]),
                        kind=kind,
                        feature=embeddings.embed(emb.NAME, name),
                        label=name,
                        pose=_read_bbox(rec, where, required=kind is NodeKind.REGION),
                    )
                )
    except KeyError as exc:
        raise SceneFormatError(f"{path}: missing field {exc}") from None

    ids = {n.id for n in nodes}
    if len(ids) != len(nodes):
        raise SceneFormatError(f"{path}: duplicate node id")

    def check_refs(rec: Mapping[str, Any], where: str) -> tuple[str, str]:
        try:
            src, dst = str(rec["src"]), str(rec["dst"])
        except KeyError as exc:
            raise SceneFormatError(f"{where}: missing field {exc}") from None
        for end in (src, dst):
            if end not in ids:
                raise SceneFormatError(f"{where}: unknown node reference {end!r}")
        if src == dst:
            raise SceneFormatError(f"{where}: relation from {src!r} to itself")
        return src, dst

    edges: list[RelationEdge] = []
    for i, rec in enumerate(raw.get("abstract_relations", [])):
        src, dst = check_refs(rec, f"{path}: abstract_relations[{i}]")
        label = str(rec["label"])
        rel = Relationship(RelationKind.ABSTRACT, label=label, feature=embeddings.embed(emb.ABSTRACT, label))
        edges.append(RelationEdge(src, dst, (rel,)))

    if raw.get("spatial_relations") is not None:
        for i, rec in enumerate(raw["spatial_relations"]):
            src, dst = check_refs(rec, f"{path}: spatial_relations[{i}]")
            label = str(rec["label"])
            desc = spatial.resolve_descriptor(label, embeddings)
            rel = Relationship(RelationKind.SPATIAL, label=label, signature=spatial.SpatialSignature.indicator(desc.relations))
            edges.append(RelationEdge(src, dst, (rel,)))
        graph = SceneGraph(nodes, edges, scene_id=str(raw.get("scene_id", "")))
    else:
        partial = SceneGraph(nodes, edges, scene_id=str(raw.get("scene_id", "")))
        derived = spatial.derive_spatial_edges(partial, spatial_params)
        graph = SceneGraph(nodes, [*edges, *derived], scene_id=partial.scene_id)
    logger.info("loaded %r", graph)
    return graph
