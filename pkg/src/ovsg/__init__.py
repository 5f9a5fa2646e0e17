"""Open-vocabulary 3D scene graphs and context-aware grounding by star-subgraph matching."""

__version__ = "0.1.0"

from .embedding import EmbeddingProvider, FeatureVec, feature_distance
from .matching import MatchParams, MatchResult, Method, brute_force_ground, ground
from .query_dsl import QueryGraph, parse_query
from .scene_model import NodeKind, Pose3D, RelationKind, SceneGraph, load_scene, local_star

__all__ = [
    "EmbeddingProvider",
    "FeatureVec",
    "MatchParams",
    "MatchResult",
    "Method",
    "NodeKind",
    "Pose3D",
    "QueryGraph",
    "RelationKind",
    "SceneGraph",
    "brute_force_ground",
    "feature_distance",
    "ground",
    "load_scene",
    "local_star",
    "parse_query",
]
