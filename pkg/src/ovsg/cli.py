"""``ovsg`` command line: build | parse | ground | eval | gen-queries.

Exit codes: 0 success, 1 query resolved to nothing, 2 usage/IO/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .embedding import DEFAULT_FLOOR, DEFAULT_STUB_DIM, SPACES, EmbeddingProvider
from .errors import OvsgError
from .evaluation import DEFAULT_THRESHOLD, generate_queries, run_eval
from .matching import MatchParams, Method, ground
from .query_dsl import parse_query
from .scene_model import NodeKind, RelationKind, SceneGraph, load_scene
from .spatial import SpatialParams

logger = logging.getLogger("ovsg")

EXIT_OK = 0
EXIT_EMPTY = 1
EXIT_USAGE = 2


class CliError(Exception):
    pass


def _space_map(items: Sequence[str] | None, flag: str) -> dict[str, str]:
    out = {}
    for item in items or ():
        space, sep, path = item.partition("=")
        if not sep or space not in SPACES:
            raise CliError(f"{flag} expects SPACE=PATH with SPACE in {list(SPACES)}, got {item!r}")
        out[space] = path
    return out


def _provider(args: argparse.Namespace) -> EmbeddingProvider:
    try:
        return EmbeddingProvider.from_files(
            _space_map(args.table, "--table"),
            _space_map(args.lexicon, "--lexicon"),
            stub=not args.no_stub,
            stub_dim=args.stub_dim,
            floor=args.floor,
        )
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None


def _match_params(args: argparse.Namespace, method: str | None = None) -> MatchParams:
    return MatchParams(
        sigma_v=args.sigma_v,
        sigma_e=args.sigma_e,
        eps_v=args.eps_v,
        eps_e=args.eps_e,
        method=Method.parse(method or args.method),
        top_k=args.top_k,
        candidate_cap=args.candidate_cap,
        injective=args.injective,
    )


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _read_query_inputs(args: argparse.Namespace) -> list[dict[str, Any]]:
    if args.query is not None:
        return [{"query_id": "0", "query": args.query.replace("\\n", "\n")}]
    path = Path(args.query_file)
    if not path.is_file():
        raise CliError(f"query file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        return _read_jsonl(path)
    return [{"query_id": path.stem, "query": text}]


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    if not path.is_file():
        raise CliError(f"file not found: {path}")
    entries = []
    for no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}:{no}: {exc.msg}") from None
        if not isinstance(entry, dict) or "query" not in entry:
            raise CliError(f"{path}:{no}: expected an object with a 'query' field")
        entry.setdefault("query_id", str(len(entries)))
        entries.append(entry)
    return entries


def _load_graph(path: str) -> SceneGraph:
    if not Path(path).is_file():
        raise CliError(f"graph file not found: {path}")
    return SceneGraph.load(path)


def _jobs(args: argparse.Namespace) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def cmd_build(args: argparse.Namespace) -> int:
    provider = _provider(args)
    spatial = SpatialParams(
        contact_tol=args.contact_tol, near_scale=args.near_scale, keep_floor=args.keep_floor, eps=args.spatial_eps
    )
    if not Path(args.scene).is_file():
        raise CliError(f"scene file not found: {args.scene}")
    graph = load_scene(args.scene, provider, spatial)
    _write(graph.dumps() + "\n", args.out)
    logger.info("wrote %r", graph)
    return EXIT_OK


def cmd_parse(args: argparse.Namespace) -> int:
    provider = _provider(args)
    lines = []
    for entry in _read_query_inputs(args):
        q = parse_query(entry["query"], provider)
        lines.append(json.dumps({"query_id": entry["query_id"], "graph": q.to_dict()}, sort_keys=True))
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _ground_one(graph: SceneGraph, entry: dict[str, Any], params: MatchParams, provider: EmbeddingProvider) -> dict:
    query = parse_query(entry["query"], provider)
    results = ground(graph, query, params)
    ranked = []
    for r in results:
        node = graph.nodes[r.candidate_id]
        ranked.append(
            {"id": r.candidate_id, "score": r.score, "bbox": node.pose.to_dict() if node.pose is not None else None}
        )
    out: dict[str, Any] = {"query_id": entry["query_id"], "method": params.method.value, "ranked": ranked}
    if len(results) > 1 and results[0].score == results[1].score:
        out["tied"] = [r.candidate_id for r in results if r.score == results[0].score]
    if query.warnings:
        out["warnings"] = list(query.warnings)
    return out


def cmd_ground(args: argparse.Namespace) -> int:
    params = _match_params(args)
    provider = _provider(args)
    entries = _read_query_inputs(args)
    if args.parse_only:
        return cmd_parse(args)
    graph = _load_graph(args.graph)
    with ThreadPoolExecutor(max_workers=_jobs(args)) as pool:
        outputs = list(pool.map(lambda e: _ground_one(graph, e, params, provider), entries))
    _write("".join(json.dumps(o, sort_keys=True) + "\n" for o in outputs), args.out)
    return EXIT_EMPTY if any(not o["ranked"] for o in outputs) else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    methods = [Method.parse(m) for m in args.methods.split(",") if m.strip()]
    params = _match_params(args, methods[0].value)
    provider = _provider(args)
    graph = _load_graph(args.graph)
    corpus = _read_jsonl(Path(args.corpus))
    for entry in corpus:
        if "gt_id" not in entry:
            raise CliError(f"corpus entry {entry['query_id']!r} has no gt_id")
    report, records = run_eval(
        graph, corpus, methods, params, provider, jobs=_jobs(args), threshold=args.threshold
    )
    _write(report.to_json(), args.out)
    for r in records:
        if r.failed:
            logger.warning("query %s failed: %s", r.query_id, r.error)
    return EXIT_OK


def cmd_gen_queries(args: argparse.Namespace) -> int:
    graph = _load_graph(args.graph)
    kinds = [NodeKind.parse(k) for k in args.kinds.split(",")]
    rels = [RelationKind.parse(k) for k in args.relations.split(",")]
    queries = generate_queries(
        graph,
        args.n,
        args.seed,
        min_leaves=args.min_leaves,
        max_leaves=args.max_leaves,
        reference_kinds=kinds,
        relation_kinds=rels,
    )
    lines = [
        json.dumps({"query_id": f"q{i:05d}", "query": q.text, "gt_id": q.gt_id}, sort_keys=True)
        for i, q in enumerate(queries)
    ]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _add_embedding_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("embeddings")
    g.add_argument("--table", action="append", metavar="SPACE=PATH", help="embedding table for a space")
    g.add_argument("--lexicon", action="append", metavar="SPACE=PATH", help="lexicon for nearest-entry snapping")
    g.add_argument("--no-stub", action="store_true", help="fail on texts missing from the tables")
    g.add_argument("--stub-dim", type=int, default=DEFAULT_STUB_DIM)
    g.add_argument("--floor", type=float, default=DEFAULT_FLOOR, help="cosine floor for nearest-entry snapping")


def _add_match_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("matching")
    g.add_argument("--method", default="likelihood", help="likelihood | jaccard | simpson | semantic")
    g.add_argument("--sigma-v", type=float, default=1.0)
    g.add_argument("--sigma-e", type=float, default=2.0)
    g.add_argument("--eps-v", type=float, default=0.5)
    g.add_argument("--eps-e", type=float, default=0.5)
    g.add_argument("--top-k", type=int, default=3)
    g.add_argument("--candidate-cap", type=int, default=None)
    g.add_argument("--injective", action="store_true", help="one scene neighbor per query leaf (greedy)")
    g.add_argument("--jobs", type=int, default=None, help="parallel queries (default: all cores)")


def _add_query_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--query", help="inline DSL text; '\\n' separates lines")
    src.add_argument("--query-file", help="DSL file, or .jsonl corpus of {'query': ...}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovsg", description="Context-aware 3D scene graph grounding.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="scene file -> serialized graph")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--contact-tol", type=float, default=0.05)
    p.add_argument("--near-scale", type=float, default=2.0)
    p.add_argument("--keep-floor", type=float, default=0.25)
    p.add_argument("--spatial-eps", type=float, default=1e-6)
    _add_embedding_args(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("parse", help="dump parsed query graphs as JSON")
    _add_query_args(p)
    p.add_argument("--out", default=None)
    _add_embedding_args(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("ground", help="rank scene nodes for queries (JSONL)")
    p.add_argument("--graph", required=True)
    _add_query_args(p)
    p.add_argument("--out", default=None)
    p.add_argument("--parse-only", action="store_true", help="print the parsed query graph and stop")
    _add_match_args(p)
    _add_embedding_args(p)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("eval", help="ground a labeled corpus and report metrics")
    p.add_argument("--graph", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--methods", default="likelihood,jaccard,simpson,semantic")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", default=None)
    _add_match_args(p)
    _add_embedding_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-queries", help="synthesize a labeled query corpus from a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-leaves", type=int, default=1)
    p.add_argument("--max-leaves", type=int, default=3)
    p.add_argument("--kinds", default="object,agent,region", help="node kinds allowed as references")
    p.add_argument("--relations", default="spatial,abstract", help="relation kinds allowed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_queries)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (CliError, OvsgError, OSError, ValueError, KeyError) as exc:
        print(f"ovsg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
