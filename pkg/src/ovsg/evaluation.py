"""Grounding metrics, synthetic query generation and the evaluation loop."""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

from .embedding import EmbeddingProvider, normalize_text
from .errors import OvsgError
from .matching import MatchParams, Method, ground
from .query_dsl import NODE_TOKENS, parse_query
from .scene_model import Direction, NodeKind, Pose3D, RelationKind, Relationship, SceneGraph
from .spatial import SpatialVocabulary, describe, spatial_distance

logger = logging.getLogger(__name__)

BB = "bb"
POINTS = "3d"
DEFAULT_THRESHOLD = 0.5


def iou_bb(a: Pose3D, b: Pose3D) -> float:
    inter = 1.0
    for i in range(3):
        lo = max(a.min_corner[i], b.min_corner[i])
        hi = min(a.max_corner[i], b.max_corner[i])
        if hi <= lo:
            return 0.0
        inter *= hi - lo
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


def iou_3d(a: Iterable[int], b: Iterable[int]) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        logger.warning("IoU of two empty point sets; defined as 1")
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass(frozen=True)
class RankedHit:
    id: str
    score: float
    iou_bb: float
    iou_3d: float | None


@dataclass(frozen=True)
class EvalRecord:
    query_id: str
    gt_id: str
    gt_bbox: Pose3D
    gt_points: frozenset[int] | None
    ranked: Mapping[str, tuple[RankedHit, ...]] = field(default_factory=dict)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def best_iou(self, method: str, metric: str, k: int) -> float | None:
        """Best IoU among the top ``k`` hits; None when the metric is unavailable."""
        if metric == POINTS and self.gt_points is None:
            return None
        hits = self.ranked.get(method, ())[:k]
        vals = [h.iou_bb if metric == BB else h.iou_3d for h in hits]
        return max((v for v in vals if v is not None), default=0.0)


def _meets(value: float, metric: str, threshold: float) -> bool:
    # box overlap counts at the threshold, point overlap must exceed it
    return value >= threshold if metric == BB else value > threshold


def _only_method(records: Sequence[EvalRecord]) -> str:
    names = {m for r in records for m in r.ranked}
    if len(names) != 1:
        raise ValueError(f"records hold methods {sorted(names)}; name one explicitly")
    return names.pop()


def success_rate(
    records: Sequence[EvalRecord],
    metric: str = BB,
    k: int = 1,
    threshold: float = DEFAULT_THRESHOLD,
    method: str | None = None,
) -> float:
    """Percent of queries whose best top-``k`` IoU meets ``threshold``."""
    if not records:
        raise ValueError("success rate of an empty record set is undefined")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    if metric not in (BB, POINTS):
        raise ValueError(f"unknown metric {metric!r}")
    method = method or _only_method(records)
    vals = [r.best_iou(method, metric, k) for r in records]
    vals = [v for v in vals if v is not None]
    if not vals:
        raise ValueError(f"no record carries ground-truth data for metric {metric!r}")
    return 100.0 * sum(_meets(v, metric, threshold) for v in vals) / len(vals)


@dataclass
class Report:
    methods: dict[str, dict[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        return self.methods

    def to_json(self) -> str:
        return json.dumps(self.methods, indent=2, sort_keys=True) + "\n"


def build_report(
    records: Sequence[EvalRecord], methods: Sequence[str], threshold: float = DEFAULT_THRESHOLD
) -> Report:
    out: dict[str, dict[str, Any]] = {}
    for m in methods:
        entry: dict[str, Any] = {}
        for k in (1, 3):
            row: dict[str, float | None] = {}
            for metric in (BB, POINTS):
                vals = [v for v in (r.best_iou(m, metric, k) for r in records) if v is not None]
                suffix = "bb" if metric == BB else "3d"
                row[f"iou_{suffix}"] = fmean(vals) if vals else None
                row[f"sr_{suffix}"] = success_rate(records, metric, k, threshold, m) if vals else None
            entry[f"top{k}"] = row
        entry["queries"] = len(records)
        entry["failed"] = sum(r.failed for r in records)
        entry["evaluated"] = entry["queries"] - entry["failed"]
        out[m] = entry
    return Report(out)


def _hits(scene: SceneGraph, gt: Any, results) -> tuple[RankedHit, ...]:
    hits = []
    for res in results:
        node = scene.nodes[res.candidate_id]
        bb = iou_bb(node.pose, gt.pose) if node.pose is not None else 0.0
        pts = None
        if gt.point_indices is not None:
            pts = iou_3d(node.point_indices or (), gt.point_indices)
        hits.append(RankedHit(res.candidate_id, res.score, bb, pts))
    return tuple(hits)


def evaluate_query(
    scene: SceneGraph,
    entry: Mapping[str, Any],
    query_id: str,
    methods: Sequence[Method],
    params: MatchParams,
    provider: EmbeddingProvider,
    vocabulary: SpatialVocabulary | None = None,
) -> EvalRecord:
    gt = scene.nodes[entry["gt_id"]]
    record = EvalRecord(query_id, gt.id, gt.pose, gt.point_indices)  # type: ignore[arg-type]
    try:
        query = parse_query(entry["query"], provider, vocabulary)
    except OvsgError as exc:
        return replace(record, error=str(exc))
    ranked = {}
    for m in methods:
        p = replace(params, method=m, top_k=max(params.top_k, 3))
        ranked[m.value] = _hits(scene, gt, ground(scene, query, p))
    return replace(record, ranked=ranked)


def run_eval(
    scene: SceneGraph,
    corpus: Sequence[Mapping[str, Any]],
    methods: Sequence[Method],
    params: MatchParams,
    provider: EmbeddingProvider,
    *,
    jobs: int = 1,
    threshold: float = DEFAULT_THRESHOLD,
    vocabulary: SpatialVocabulary | None = None,
) -> tuple[Report, list[EvalRecord]]:
    """Ground every corpus query with every method and aggregate.

    Queries that fail to parse count as failures with IoU 0.
    """
    for i, entry in enumerate(corpus):
        if entry.get("gt_id") not in scene.nodes:
            raise ValueError(f"corpus entry {i}: gt_id {entry.get('gt_id')!r} is not a scene node")
        if scene.nodes[entry["gt_id"]].pose is None:
            raise ValueError(f"corpus entry {i}: gt node {entry['gt_id']!r} has no pose")
    ids = [str(e.get("query_id", i)) for i, e in enumerate(corpus)]

    def one(i: int) -> EvalRecord:
        return evaluate_query(scene, corpus[i], ids[i], methods, params, provider, vocabulary)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(one, range(len(corpus))))
    else:
        records = [one(i) for i in range(len(corpus))]
    return build_report(records, [m.value for m in methods], threshold), records


_FORBIDDEN = set("{}[]@")


def _renderable(label: str | None) -> bool:
    return bool(label) and "--" not in label and not (_FORBIDDEN & set(label))  # type: ignore[arg-type]


@dataclass(frozen=True)
class GeneratedQuery:
    text: str
    gt_id: str


def _render_relationship(rel: Relationship, vocabulary: SpatialVocabulary | None, min_margin: float) -> str | None:
    if rel.kind is RelationKind.ABSTRACT:
        return normalize_text(rel.label) if _renderable(rel.label) else None
    if rel.signature is not None:
        text, rels = describe(rel.signature, vocabulary)
        return text if 1.0 - spatial_distance(rel.signature, rels) >= min_margin else None
    return None


def generate_queries(
    scene: SceneGraph,
    n: int,
    seed: int,
    *,
    min_leaves: int = 1,
    max_leaves: int = 3,
    reference_kinds: Iterable[NodeKind] = tuple(NodeKind),
    relation_kinds: Iterable[RelationKind] = tuple(RelationKind),
    vocabulary: SpatialVocabulary | None = None,
    min_margin: float = 0.5,
) -> list[GeneratedQuery]:
    """Sample target objects and render a few of their true relations as queries.

    Spatial relations are rendered with the canonical vocabulary text of the
    best-satisfied relation set and only when its weakest margin reaches
    ``min_margin``. Leaves never share a name with the target or with each
    other, so every query re-parses as a star without warnings.
    """
    if not 1 <= min_leaves <= max_leaves:
        raise ValueError("need 1 <= min_leaves <= max_leaves")
    ref_kinds = set(reference_kinds)
    rel_kinds = set(relation_kinds)
    rng = random.Random(seed)

    # target id -> {(leaf name, kind): [(line-as-text)]}
    options: dict[str, dict[tuple[str, NodeKind], list[str]]] = {}
    for tid in sorted(scene.nodes):
        t = scene.nodes[tid]
        if t.kind is not NodeKind.OBJECT or not _renderable(t.label):
            continue
        t_name = normalize_text(t.label)  # type: ignore[arg-type]
        t_tok = f"{t_name} {{{NODE_TOKENS[t.kind]}}}"
        per_leaf: dict[tuple[str, NodeKind], list[str]] = {}
        for nid in scene.neighbors(tid):
            x = scene.nodes[nid]
            if x.kind not in ref_kinds or not _renderable(x.label):
                continue
            x_name = normalize_text(x.label)  # type: ignore[arg-type]
            if (x_name, x.kind) == (t_name, t.kind):
                continue
            x_tok = f"{x_name} {{{NODE_TOKENS[x.kind]}}}"
            for direction, (a, b) in ((Direction.OUT, (tid, nid)), (Direction.IN, (nid, tid))):
                edge = scene.edge(a, b)
                if edge is None:
                    continue
                for rel in edge.relationships:
                    if rel.kind not in rel_kinds:
                        continue
                    text = _render_relationship(rel, vocabulary, min_margin)
                    if text is None:
                        continue
                    src, dst = (t_tok, x_tok) if direction is Direction.OUT else (x_tok, t_tok)
                    per_leaf.setdefault((x_name, x.kind), []).append(f"{src} -- {text} [{rel.kind.value}] -- {dst}")
        if per_leaf:
            options[tid] = per_leaf
    if not options:
        raise ValueError("scene has no object with a renderable relation to sample")

    targets = sorted(options)
    out = []
    for _ in range(n):
        tid = rng.choice(targets)
        t = scene.nodes[tid]
        per_leaf = options[tid]
        keys = sorted(per_leaf, key=lambda k: (k[0], k[1].value))
        count = min(rng.randint(min_leaves, max_leaves), len(keys))
        lines = [f"target @ {normalize_text(t.label)} {{{NODE_TOKENS[t.kind]}}}"]  # type: ignore[arg-type]
        for key in rng.sample(keys, count):
            lines.append(rng.choice(sorted(set(per_leaf[key]))))
        out.append(GeneratedQuery("\n".join(lines), tid))
    return out
