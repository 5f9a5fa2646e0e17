"""Star-subgraph matching: candidate proposal and re-ranking.

Candidates are scene nodes ranked by distance to the query center; each
candidate's local star is then scored against the query star with one of

* likelihood: product of exponentiated node and edge distances, best scene
  neighbor chosen independently per query leaf;
* jaccard / simpson: thresholded overlap of node+edge sets.

Ties are broken by node id everywhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Protocol, Sequence

from .embedding import FeatureVec, feature_distance
from .errors import OracleLimitError, RelationMismatchError
from .query_dsl import QueryGraph
from .scene_model import Direction, NodeKind, RelationEdge, RelationKind, Relationship, SceneGraph, StarView, local_star
from .spatial import inverse_relations, spatial_distance

INF = math.inf

ORACLE_MAX_NODES = 15
ORACLE_MAX_LEAVES = 5


class Method(Enum):
    LIKELIHOOD = "likelihood"
    JACCARD = "jaccard"
    SIMPSON = "simpson"
    SEMANTIC = "semantic"

    @classmethod
    def parse(cls, text: str) -> Method:
        key = text.strip().lower().replace("_", "-")
        key = {"semantic-only": "semantic", "semanticonly": "semantic"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown method {text!r}; expected one of {[m.value for m in cls]}") from None


GRAPH_METHODS = (Method.LIKELIHOOD, Method.JACCARD, Method.SIMPSON)


@dataclass(frozen=True)
class MatchParams:
    sigma_v: float = 1.0
    sigma_e: float = 2.0
    eps_v: float = 0.5
    eps_e: float = 0.5
    method: Method = Method.LIKELIHOOD
    top_k: int = 3
    candidate_cap: int | None = None
    injective: bool = False

    def __post_init__(self) -> None:
        if not (self.sigma_v > 0 and self.sigma_e > 0):
            raise ValueError("sigma_v and sigma_e must be positive")
        if not (0 < self.eps_v <= 2 and 0 < self.eps_e <= 2):
            raise ValueError("eps_v and eps_e must be in (0, 2]")
        if self.top_k < 1:
            raise ValueError("top_k must be a positive integer")
        if self.candidate_cap is not None and self.candidate_cap < 1:
            raise ValueError("candidate_cap must be a positive integer")


@dataclass(frozen=True)
class MatchResult:
    candidate_id: str
    score: float
    method: Method
    association: Mapping[int, str] = field(default_factory=dict)
    dropped: tuple[int, ...] = ()


class _Typed(Protocol):
    kind: NodeKind
    feature: FeatureVec


def _exp(d: float, sigma: float) -> float:
    # exp(-inf) is exactly 0
    return 0.0 if d == INF else math.exp(-d / sigma)


def node_distance(a: _Typed, b: _Typed) -> float:
    if a.kind is not b.kind:
        return INF
    return feature_distance(a.feature, b.feature)


def _spatial_pair(r1: Relationship, r2: Relationship):
    if r1.signature is not None and r2.relation_set is not None:
        return r1.signature, r2.relation_set
    if r2.signature is not None and r1.relation_set is not None:
        return r2.signature, r1.relation_set
    raise RelationMismatchError("spatial comparison needs one signature and one relation set")


def relationship_distance(r1: Relationship, r2: Relationship) -> float:
    """Distance between two relationships read in the same direction."""
    if r1.kind is not r2.kind:
        return INF
    if r1.kind is RelationKind.ABSTRACT:
        return feature_distance(r1.feature, r2.feature)  # type: ignore[arg-type]
    sig, rels = _spatial_pair(r1, r2)
    return spatial_distance(sig, rels)


def oriented_distance(d1: Direction, r1: Relationship, d2: Direction, r2: Relationship) -> float:
    """Relationship distance where each side carries its direction w.r.t. its star center.

    Abstract relationships must agree in direction. Spatial ones in opposite
    directions are compared through the inverse relation set.
    """
    if r1.kind is not r2.kind:
        return INF
    if d1 is d2:
        return relationship_distance(r1, r2)
    if r1.kind is RelationKind.ABSTRACT:
        return INF
    sig, rels = _spatial_pair(r1, r2)
    inv = inverse_relations(rels)
    return INF if inv is None else spatial_distance(sig, inv)


def edge_distance(
    e1: RelationEdge | Iterable[Relationship], e2: RelationEdge | Iterable[Relationship]
) -> float:
    """Minimum relationship distance over the cross product of two edges."""
    rs1 = e1.relationships if isinstance(e1, RelationEdge) else tuple(e1)
    rs2 = e2.relationships if isinstance(e2, RelationEdge) else tuple(e2)
    return min((relationship_distance(a, b) for a in rs1 for b in rs2), default=INF)


def link_distance(
    q_links: Sequence[tuple[Direction, Relationship]], s_links: Sequence[tuple[Direction, Relationship]]
) -> float:
    return min((oriented_distance(qd, qr, sd, sr) for qd, qr in q_links for sd, sr in s_links), default=INF)


def propose_candidates(scene: SceneGraph, query: QueryGraph, params: MatchParams = MatchParams()) -> list[str]:
    scored = []
    for nid, node in scene.nodes.items():
        d = node_distance(query.center, node)
        if d != INF:
            scored.append((d, nid))
    scored.sort()
    ids = [nid for _, nid in scored]
    return ids if params.candidate_cap is None else ids[: params.candidate_cap]


# (node distance, edge distance, neighbor id), neighbors in id order
LeafOptions = list[tuple[float, float, str]]


def leaf_options(query: QueryGraph, star: StarView) -> list[LeafOptions]:
    table = []
    for k, leaf in enumerate(query.leaves):
        q_links = query.links(k)
        opts = []
        for nid in sorted(star.neighbors):
            opts.append((node_distance(leaf, star.neighbors[nid]), link_distance(q_links, star.links[nid]), nid))
        table.append(opts)
    return table


def likelihood_from_distances(
    center_distance: float, table: Sequence[LeafOptions], params: MatchParams = MatchParams()
) -> tuple[float, dict[int, str], tuple[int, ...]]:
    """Score, leaf -> neighbor association, and unmatched leaves."""
    factors: list[list[tuple[float, str]]] = [
        [(_exp(dn, params.sigma_v) * _exp(de, params.sigma_e), nid) for dn, de, nid in opts] for opts in table
    ]
    best: dict[int, tuple[float, str]] = {}
    if params.injective:
        ranked = sorted(
            ((f, k, nid) for k, fs in enumerate(factors) for f, nid in fs if f > 0.0),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        used = set()
        for f, k, nid in ranked:
            if k not in best and nid not in used:
                best[k] = (f, nid)
                used.add(nid)
    else:
        for k, fs in enumerate(factors):
            top = None
            for f, nid in fs:
                if f > 0.0 and (top is None or f > top[0]):
                    top = (f, nid)
            if top is not None:
                best[k] = top
    score = _exp(center_distance, params.sigma_v)
    for k in range(len(table)):
        score *= best[k][0] if k in best else 0.0
    assoc = {k: nid for k, (_, nid) in sorted(best.items())}
    dropped = tuple(k for k in range(len(table)) if k not in best)
    return score, assoc, dropped


def overlap_from_distances(
    center_distance: float, table: Sequence[LeafOptions], params: MatchParams = MatchParams()
) -> tuple[int, int, dict[int, str]]:
    """Matched node and edge counts under the thresholds, plus the association.

    Each leaf associates to its closest neighbor by (node distance, edge
    distance, id). Scene elements are counted once even when several leaves
    associate to the same neighbor, keeping the overlap a set intersection.
    """
    assoc: dict[int, tuple[float, float, str]] = {}
    if params.injective:
        ranked = sorted((opt[0], opt[1], k, opt[2]) for k, opts in enumerate(table) for opt in opts)
        used = set()
        for dn, de, k, nid in ranked:
            if k not in assoc and nid not in used:
                assoc[k] = (dn, de, nid)
                used.add(nid)
    else:
        for k, opts in enumerate(table):
            if opts:
                assoc[k] = min(opts)
    center_ok = center_distance < params.eps_v
    nodes, edges = set(), set()
    for dn, de, nid in assoc.values():
        if dn < params.eps_v:
            nodes.add(nid)
            if center_ok and de < params.eps_e:
                edges.add(nid)
    return int(center_ok) + len(nodes), len(edges), {k: v[2] for k, v in sorted(assoc.items())}


def _set_sizes(query: QueryGraph, star: StarView) -> tuple[int, int]:
    return query.node_count + query.edge_count, star.node_count + star.edge_count


def jaccard_index(m: int, q: int, s: int) -> float:
    return m / (q + s - m)


def simpson_index(m: int, q: int, s: int) -> float:
    return m / min(q, s)


def likelihood_score(query: QueryGraph, star: StarView, params: MatchParams = MatchParams()) -> float:
    d_c = node_distance(query.center, star.center)
    return likelihood_from_distances(d_c, leaf_options(query, star), params)[0]


def overlap_set_size(
    query: QueryGraph, star: StarView, params: MatchParams = MatchParams()
) -> tuple[int, int, dict[int, str]]:
    d_c = node_distance(query.center, star.center)
    return overlap_from_distances(d_c, leaf_options(query, star), params)


def jaccard_score(query: QueryGraph, star: StarView, params: MatchParams = MatchParams()) -> float:
    n, e, _ = overlap_set_size(query, star, params)
    return jaccard_index(n + e, *_set_sizes(query, star))


def simpson_score(query: QueryGraph, star: StarView, params: MatchParams = MatchParams()) -> float:
    n, e, _ = overlap_set_size(query, star, params)
    return simpson_index(n + e, *_set_sizes(query, star))


def score_star(query: QueryGraph, star: StarView, params: MatchParams) -> MatchResult:
    method = params.method
    d_c = node_distance(query.center, star.center)
    cid = star.center.id
    if method is Method.SEMANTIC:
        return MatchResult(cid, _exp(d_c, params.sigma_v), method)
    table = leaf_options(query, star)
    if method is Method.LIKELIHOOD:
        score, assoc, dropped = likelihood_from_distances(d_c, table, params)
        return MatchResult(cid, score, method, assoc, dropped)
    n, e, assoc = overlap_from_distances(d_c, table, params)
    q, s = _set_sizes(query, star)
    score = jaccard_index(n + e, q, s) if method is Method.JACCARD else simpson_index(n + e, q, s)
    dropped = tuple(
        k for k in range(len(query.leaves)) if k not in assoc or node_distance(query.leaves[k], star.neighbors[assoc[k]]) >= params.eps_v
    )
    return MatchResult(cid, score, method, assoc, dropped)


def _rank(results: Iterable[MatchResult], top_k: int) -> list[MatchResult]:
    return sorted(results, key=lambda r: (-r.score, r.candidate_id))[:top_k]


def ground(scene: SceneGraph, query: QueryGraph, params: MatchParams = MatchParams()) -> list[MatchResult]:
    candidates = propose_candidates(scene, query, params)
    return _rank((score_star(query, local_star(scene, c), params) for c in candidates), params.top_k)


def brute_force_ground(scene: SceneGraph, query: QueryGraph, params: MatchParams = MatchParams()) -> list[MatchResult]:
    """Exhaustive reference for :func:`ground` on small inputs.

    Every scene node is tried as the center, neighbors are found by scanning
    the raw edge table, and the likelihood maximum is taken over every full
    leaf-to-neighbor assignment rather than leaf by leaf.
    """
    if len(scene.nodes) > ORACLE_MAX_NODES or len(query.leaves) > ORACLE_MAX_LEAVES:
        raise OracleLimitError(
            f"oracle limited to {ORACLE_MAX_NODES} scene nodes and {ORACLE_MAX_LEAVES} leaves"
        )
    if params.injective:
        raise OracleLimitError("the oracle covers the non-injective association only")
    method = params.method
    q_size = 1 + 2 * len(query.leaves)
    results = []
    for cid in sorted(scene.nodes):
        center = scene.nodes[cid]
        d_c = node_distance(query.center, center)
        if d_c == INF:
            continue
        if method is Method.SEMANTIC:
            results.append(MatchResult(cid, _exp(d_c, params.sigma_v), method))
            continue
        links: dict[str, list[tuple[Direction, Relationship]]] = {}
        for (src, dst), edge in scene.edges.items():
            if src == cid:
                links.setdefault(dst, []).extend((Direction.OUT, r) for r in edge.relationships)
            elif dst == cid:
                links.setdefault(src, []).extend((Direction.IN, r) for r in edge.relationships)
        nbrs = sorted(links)
        dist = {
            (k, j): (
                node_distance(leaf, scene.nodes[j]),
                min(oriented_distance(qd, qr, sd, sr) for qd, qr in query.links(k) for sd, sr in links[j]),
            )
            for k, leaf in enumerate(query.leaves)
            for j in nbrs
        }
        if method is Method.LIKELIHOOD:
            best_score, best_assign = 0.0, None
            for assign in itertools.product(nbrs, repeat=len(query.leaves)):
                s = _exp(d_c, params.sigma_v)
                for k, j in enumerate(assign):
                    dn, de = dist[(k, j)]
                    s *= _exp(dn, params.sigma_v) * _exp(de, params.sigma_e)
                if best_assign is None or s > best_score:
                    best_score, best_assign = s, assign
            assoc = dict(enumerate(best_assign)) if best_assign and best_score > 0 else {}
            results.append(MatchResult(cid, best_score, method, assoc))
            continue
        matched_nodes = {cid} if d_c < params.eps_v else set()
        matched_edges = set()
        for k in range(len(query.leaves)):
            if not nbrs:
                continue
            dn, de, j = min((*dist[(k, j)], j) for j in nbrs)
            if dn < params.eps_v:
                matched_nodes.add(j)
                if d_c < params.eps_v and de < params.eps_e:
                    matched_edges.add(j)
        m = len(matched_nodes) + len(matched_edges)
        s_size = 1 + 2 * len(nbrs)
        score = m / (q_size + s_size - m) if method is Method.JACCARD else m / min(q_size, s_size)
        results.append(MatchResult(cid, score, method))
    return _rank(results, params.top_k)
