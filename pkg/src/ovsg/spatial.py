"""Closed-form spatial relation scoring between axis-aligned boxes.

World frame: +x right, +y front, +z up. Margins are degrees of satisfaction
in [0, 1] of "a <relation> b" for an ordered pose pair ``(a, b)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from . import embedding as emb
from .embedding import EmbeddingProvider, normalize_text
from .errors import OvsgError, UnknownSpatialRelationError
from .scene_model import NodeKind, Pose3D, RelationEdge, RelationKind, Relationship, SceneGraph


class CanonicalSpatialRelation(Enum):
    LEFT_OF = "LeftOf"
    RIGHT_OF = "RightOf"
    IN_FRONT_OF = "InFrontOf"
    BEHIND = "Behind"
    ABOVE = "Above"
    UNDER = "Under"
    IN = "In"
    ON = "On"
    NEAR = "Near"

    def __lt__(self, other: CanonicalSpatialRelation) -> bool:
        return _ORDER[self] < _ORDER[other]


Rel = CanonicalSpatialRelation
_ORDER = {r: i for i, r in enumerate(Rel)}

EXCLUSIVE_PAIRS = (
    (Rel.LEFT_OF, Rel.RIGHT_OF),
    (Rel.IN_FRONT_OF, Rel.BEHIND),
    (Rel.ABOVE, Rel.UNDER),
)

# "a r b" <=> "b INVERSE[r] a"; In and On have no inverse in the vocabulary
INVERSE = MappingProxyType(
    {
        Rel.LEFT_OF: Rel.RIGHT_OF,
        Rel.RIGHT_OF: Rel.LEFT_OF,
        Rel.IN_FRONT_OF: Rel.BEHIND,
        Rel.BEHIND: Rel.IN_FRONT_OF,
        Rel.ABOVE: Rel.UNDER,
        Rel.UNDER: Rel.ABOVE,
        Rel.NEAR: Rel.NEAR,
    }
)


@dataclass(frozen=True)
class SpatialParams:
    contact_tol: float = 0.05
    near_scale: float = 2.0
    keep_floor: float = 0.25
    eps: float = 1e-6
    right_axis: int = 0
    front_axis: int = 1
    up_axis: int = 2

    def __post_init__(self) -> None:
        if sorted((self.right_axis, self.front_axis, self.up_axis)) != [0, 1, 2]:
            raise ValueError("axis mapping must be a permutation of (0, 1, 2)")
        if self.near_scale <= 0 or self.eps <= 0 or self.contact_tol < 0:
            raise ValueError("near_scale and eps must be positive, contact_tol non-negative")
        if not 0 < self.keep_floor <= 1:
            raise ValueError("keep_floor must be in (0, 1]")


DEFAULT_PARAMS = SpatialParams()


class SpatialSignature:
    """Per-relation satisfaction margins for one ordered pose pair."""

    __slots__ = ("margins",)

    def __init__(self, margins: Mapping[Rel, float]):
        full = {}
        for r in Rel:
            m = float(margins.get(r, 0.0))
            if not 0.0 <= m <= 1.0:
                raise ValueError(f"margin for {r.value} out of [0, 1]: {m}")
            full[r] = m
        for x, y in EXCLUSIVE_PAIRS:
            if full[x] > 0.5 and full[y] > 0.5:
                raise ValueError(f"{x.value} and {y.value} cannot both exceed 0.5")
        self.margins = MappingProxyType(full)

    @classmethod
    def indicator(cls, relations: Iterable[Rel]) -> SpatialSignature:
        return cls({r: 1.0 for r in relations})

    def __getitem__(self, rel: Rel) -> float:
        return self.margins[rel]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SpatialSignature) and dict(self.margins) == dict(other.margins)

    def __hash__(self) -> int:
        return hash(tuple(self.margins.values()))

    def __repr__(self) -> str:
        nz = ", ".join(f"{r.value}={m:.3g}" for r, m in self.margins.items() if m)
        return f"SpatialSignature({nz})"

    def max_margin(self) -> float:
        return max(self.margins.values())

    def to_dict(self) -> dict[str, float]:
        return {r.value: m for r, m in self.margins.items()}

    @classmethod
    def from_dict(cls, raw: Mapping[str, float]) -> SpatialSignature:
        return cls({Rel(k): v for k, v in raw.items()})


@dataclass(frozen=True)
class SpatialDescriptor:
    raw_text: str
    relations: frozenset[Rel]

    def __post_init__(self) -> None:
        if not self.relations:
            raise ValueError("spatial descriptor needs at least one relation")
        for x, y in EXCLUSIVE_PAIRS:
            if x in self.relations and y in self.relations:
                raise ValueError(f"{self.raw_text!r} combines exclusive relations {x.value} and {y.value}")


def inverse_relations(relations: Iterable[Rel]) -> frozenset[Rel] | None:
    """Relation set describing the reversed pair, or None when not expressible."""
    out = set()
    for r in relations:
        inv = INVERSE.get(r)
        if inv is None:
            return None
        out.add(inv)
    return frozenset(out)


def _clamp01(x: float) -> float:
    return 0.0 if x <= 0.0 else 1.0 if x >= 1.0 else x


def _padded(pose: Pose3D, eps: float) -> tuple[list[float], list[float]]:
    """Box corners with every extent raised to at least ``2 * eps``."""
    lo, hi = list(pose.min_corner), list(pose.max_corner)
    for i in range(3):
        if hi[i] - lo[i] < 2 * eps:
            mid = (lo[i] + hi[i]) / 2.0
            lo[i], hi[i] = mid - eps, mid + eps
    return lo, hi


_QUANTUM = 9  # decimal places kept for coordinate differences


def _snap(x: float) -> float:
    # rounding differences to 1e-9 absorbs the float noise a shared translation adds
    return round(x, _QUANTUM)


def _local(pose: Pose3D, origin: tuple[float, ...]) -> Pose3D:
    def rel(p):
        return tuple(_snap(x - o) for x, o in zip(p, origin))

    return Pose3D(rel(pose.center), rel(pose.min_corner), rel(pose.max_corner))


def _overlap(a_lo: float, a_hi: float, b_lo: float, b_hi: float) -> float:
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def evaluate_pair(a: Pose3D, b: Pose3D, params: SpatialParams = DEFAULT_PARAMS) -> SpatialSignature:
    """Margins for "a <relation> b"."""
    eps = params.eps
    margins: dict[Rel, float] = {}
    axes = (
        (params.right_axis, Rel.RIGHT_OF, Rel.LEFT_OF),
        (params.front_axis, Rel.IN_FRONT_OF, Rel.BEHIND),
        (params.up_axis, Rel.ABOVE, Rel.UNDER),
    )
    for axis, positive, negative in axes:
        ha = _snap(a.max_corner[axis] - a.min_corner[axis]) / 2.0
        hb = _snap(b.max_corner[axis] - b.min_corner[axis]) / 2.0
        gap = _snap(a.center[axis] - b.center[axis])
        scale = ha + hb + eps
        margins[positive] = _clamp01(gap / scale)
        margins[negative] = _clamp01(-gap / scale)

    origin = tuple(b.center)
    a, b = _local(a, origin), _local(b, origin)
    a_lo, a_hi = _padded(a, eps)
    b_lo, b_hi = _padded(b, eps)
    inter = 1.0
    vol_a = 1.0
    for i in range(3):
        inter *= _overlap(a_lo[i], a_hi[i], b_lo[i], b_hi[i])
        vol_a *= a_hi[i] - a_lo[i]
    margins[Rel.IN] = _clamp01(inter / vol_a)

    up = params.up_axis
    foot = [params.right_axis, params.front_axis]
    contact = abs(a.min_corner[up] - b.max_corner[up]) <= params.contact_tol
    area_a = (a_hi[foot[0]] - a_lo[foot[0]]) * (a_hi[foot[1]] - a_lo[foot[1]])
    shared = _overlap(a_lo[foot[0]], a_hi[foot[0]], b_lo[foot[0]], b_hi[foot[0]]) * _overlap(
        a_lo[foot[1]], a_hi[foot[1]], b_lo[foot[1]], b_hi[foot[1]]
    )
    frac = shared / area_a
    margins[Rel.ON] = _clamp01(frac) if contact and frac >= 0.25 else 0.0

    diag_a = math.dist(a_lo, a_hi)
    diag_b = math.dist(b_lo, b_hi)
    dist = math.dist(a.center, b.center)
    margins[Rel.NEAR] = _clamp01(1.0 - dist / (params.near_scale * (diag_a + diag_b) / 2.0))
    return SpatialSignature(margins)


def spatial_distance(sig: SpatialSignature, desc: SpatialDescriptor | Iterable[Rel]) -> float:
    """1 - the weakest required margin (all relations must hold)."""
    rels = desc.relations if isinstance(desc, SpatialDescriptor) else desc
    return 1.0 - min(sig[r] for r in rels)


class SpatialVocabulary:
    """Description text -> relation set, with one canonical text per set."""

    def __init__(self, descriptions: Mapping[str, Iterable[str]]):
        self.descriptions: dict[str, frozenset[Rel]] = {}
        self._canonical: dict[frozenset[Rel], str] = {}
        for text, names in descriptions.items():
            key = normalize_text(text)
            rels = frozenset(Rel(n) for n in names)
            SpatialDescriptor(key, rels)  # validates
            self.descriptions[key] = rels
            self._canonical.setdefault(rels, key)

    @classmethod
    def load(cls, path: str | None = None) -> SpatialVocabulary:
        if path is None:
            text = resources.files("ovsg").joinpath("data/spatial_vocabulary.json").read_text(encoding="utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        raw: dict[str, Any] = json.loads(text)
        return cls(raw["descriptions"])

    def __len__(self) -> int:
        return len(self.descriptions)

    @property
    def relation_sets(self) -> list[frozenset[Rel]]:
        return list(self._canonical)

    def canonical(self, relations: Iterable[Rel]) -> str | None:
        return self._canonical.get(frozenset(relations))


@lru_cache(maxsize=None)
def default_vocabulary() -> SpatialVocabulary:
    return SpatialVocabulary.load()


def resolve_descriptor(
    text: str,
    provider: EmbeddingProvider | None = None,
    vocabulary: SpatialVocabulary | None = None,
) -> SpatialDescriptor:
    """Map free-form spatial text onto a relation set.

    Exact (normalized) vocabulary hits win; otherwise the text is embedded in
    the spatial-text space and snapped to the most similar vocabulary entry
    whose cosine similarity clears the provider's floor.
    """
    vocab = vocabulary or default_vocabulary()
    key = normalize_text(text)
    if not key:
        raise ValueError("empty spatial text")
    hit = vocab.descriptions.get(key)
    if hit is not None:
        return SpatialDescriptor(key, hit)
    if provider is None:
        raise UnknownSpatialRelationError(text)
    try:
        probe = provider.embed(emb.SPATIAL_TEXT, key)
    except OvsgError:
        raise UnknownSpatialRelationError(text) from None
    best: tuple[float, str] | None = None
    for desc in sorted(vocab.descriptions):
        try:
            sim = probe.dot(provider.embed(emb.SPATIAL_TEXT, desc))
        except OvsgError:
            continue
        if best is None or sim > best[0]:
            best = (sim, desc)
    if best is None or best[0] < provider.floor:
        raise UnknownSpatialRelationError(text)
    return SpatialDescriptor(key, vocab.descriptions[best[1]])


def describe(sig: SpatialSignature, vocabulary: SpatialVocabulary | None = None) -> tuple[str, frozenset[Rel]]:
    """Canonical vocabulary text for the best-satisfied relation set.

    Ranked by spatial distance, then preferring sets without Near, then
    larger (more specific) sets, then vocabulary order.
    """
    vocab = vocabulary or default_vocabulary()
    order = {rels: i for i, rels in enumerate(vocab.relation_sets)}
    best = min(
        vocab.relation_sets,
        key=lambda rels: (spatial_distance(sig, rels), Rel.NEAR in rels, -len(rels), order[rels]),
    )
    return vocab.canonical(best), best  # type: ignore[return-value]


def _keep(sig: SpatialSignature, src_kind: NodeKind, dst_kind: NodeKind, floor: float) -> bool:
    if src_kind is NodeKind.OBJECT and dst_kind is NodeKind.REGION and sig[Rel.IN] > 0.0:
        return True
    # a region is described relative to other regions only; the reverse edge carries containment
    if src_kind is NodeKind.REGION and dst_kind is not NodeKind.REGION:
        return False
    if sig[Rel.IN] >= floor or sig[Rel.ON] >= floor:
        return True
    # directional relations only count between nearby entities
    return sig[Rel.NEAR] > 0.0 and sig.max_margin() >= floor


def derive_spatial_edges(scene: SceneGraph, params: SpatialParams | None = None) -> list[RelationEdge]:
    """Spatial edges for every ordered pair of posed nodes worth keeping."""
    params = params or DEFAULT_PARAMS
    posed = [n for n in scene.nodes.values() if n.pose is not None]
    edges = []
    for a in posed:
        for b in posed:
            if a.id == b.id:
                continue
            sig = evaluate_pair(a.pose, b.pose, params)  # type: ignore[arg-type]
            if _keep(sig, a.kind, b.kind, params.keep_floor):
                edges.append(RelationEdge(a.id, b.id, (Relationship(RelationKind.SPATIAL, signature=sig),)))
    return edges
