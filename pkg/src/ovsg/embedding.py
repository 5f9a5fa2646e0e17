"""Text-to-vector providers for the named embedding spaces.

Each space is backed by an optional table of known texts, an optional lexicon
used to snap out-of-table words onto their nearest table entry, and a
deterministic hash stub for everything else.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DimensionMismatchError, SceneFormatError, SpaceMismatchError, UnencodableTextError

logger = logging.getLogger(__name__)

OBJECT = "object"
NAME = "name"
ABSTRACT = "abstract"
SPATIAL_TEXT = "spatial-text"
SPACES = (OBJECT, NAME, ABSTRACT, SPATIAL_TEXT)

DEFAULT_STUB_DIM = 128
DEFAULT_STUB_SEED = 42
DEFAULT_FLOOR = 0.75
STUB_SEED_ENV = "OVSG_STUB_SEED"

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Case-fold and collapse runs of whitespace."""
    return _WS.sub(" ", text.strip()).casefold()


class FeatureVec:
    """Unit-norm vector tagged with the embedding space it lives in."""

    __slots__ = ("space", "values")

    def __init__(self, space: str, values: Iterable[float]):
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(arr))
        if arr.size == 0 or not np.isfinite(norm) or norm == 0.0:
            raise ValueError(f"cannot normalize feature in space {space!r}")
        if abs(norm - 1.0) > 1e-12:  # leave stored unit vectors bit-identical
            arr = arr / norm
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        self.space = space
        self.values = arr

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def dot(self, other: FeatureVec) -> float:
        if self.space != other.space:
            raise SpaceMismatchError(f"cannot compare {self.space!r} feature with {other.space!r} feature")
        return float(np.dot(self.values, other.values))

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def __repr__(self) -> str:
        return f"FeatureVec(space={self.space!r}, dim={self.dim})"


def feature_distance(a: FeatureVec, b: FeatureVec) -> float:
    """Cosine distance ``1 - dot(a, b)`` clamped to [0, 2]."""
    d = 1.0 - a.dot(b)
    return min(2.0, max(0.0, d))


@dataclass(frozen=True)
class EmbeddingSpace:
    name: str
    dim: int

    def __post_init__(self) -> None:
        if self.name not in SPACES:
            raise ValueError(f"unknown embedding space {self.name!r}")
        if self.dim <= 0:
            raise ValueError("embedding dimension must be positive")


class EmbeddingTable:
    """Exact text -> normalized vector map for one space."""

    def __init__(self, space: EmbeddingSpace, entries: Mapping[str, Iterable[float]]):
        self.space = space
        self.entries: dict[str, FeatureVec] = {}
        for text, vec in entries.items():
            key = normalize_text(text)
            fv = FeatureVec(space.name, vec)
            if fv.dim != space.dim:
                raise DimensionMismatchError(
                    f"entry {text!r} has dimension {fv.dim}, space {space.name!r} expects {space.dim}"
                )
            if key in self.entries:
                raise SceneFormatError(f"duplicate table entry {key!r} in space {space.name!r}")
            self.entries[key] = fv
        self._keys = sorted(self.entries)
        if self._keys:
            self._matrix = np.stack([self.entries[k].values for k in self._keys])
        else:
            self._matrix = np.zeros((0, space.dim))

    @classmethod
    def load(cls, path: str | os.PathLike) -> EmbeddingTable:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            space = EmbeddingSpace(raw["space"], int(raw["dim"]))
            entries = raw["entries"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneFormatError(f"{path}: malformed embedding table ({exc})") from exc
        return cls(space, entries)

    def __contains__(self, text: str) -> bool:
        return normalize_text(text) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, text: str) -> FeatureVec | None:
        return self.entries.get(normalize_text(text))

    def nearest(self, vec: np.ndarray) -> tuple[str, float] | None:
        """Most cosine-similar entry; ties resolve to the lexicographically first key."""
        if not self._keys:
            return None
        sims = self._matrix @ vec
        i = int(np.argmax(sims))
        return self._keys[i], float(sims[i])


def stub_vector(text: str, dim: int, seed: int) -> np.ndarray:
    h = int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")
    rng = np.random.Generator(np.random.Philox(key=(seed << 64) | h))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _env_seed() -> int:
    raw = os.environ.get(STUB_SEED_ENV)
    if raw is None or raw == "":
        return DEFAULT_STUB_SEED
    seed = int(raw)
    if not 0 <= seed < 2**64:
        raise ValueError(f"{STUB_SEED_ENV} must be an unsigned 64-bit integer")
    return seed


class EmbeddingProvider:
    """One active provider per space: table, lexicon snap, then optional stub.

    Lookup order for ``embed(space, text)``:

    1. exact hit in the space's table;
    2. if ``text`` has a lexicon vector, the nearest table entry when its
       cosine similarity is at least ``floor``;
    3. the seeded hash stub, when enabled.
    """

    def __init__(
        self,
        tables: Iterable[EmbeddingTable] = (),
        lexicons: Iterable[EmbeddingTable] = (),
        *,
        stub: bool = True,
        stub_seed: int | None = None,
        stub_dim: int = DEFAULT_STUB_DIM,
        floor: float = DEFAULT_FLOOR,
    ):
        self.tables: dict[str, EmbeddingTable] = {}
        self.lexicons: dict[str, EmbeddingTable] = {}
        for t in tables:
            if t.space.name in self.tables:
                raise ValueError(f"more than one table for space {t.space.name!r}")
            self.tables[t.space.name] = t
        for t in lexicons:
            table = self.tables.get(t.space.name)
            if table is not None and table.space.dim != t.space.dim:
                raise DimensionMismatchError(f"lexicon and table dimensions differ in space {t.space.name!r}")
            self.lexicons[t.space.name] = t
        if not 0.0 < floor <= 1.0:
            raise ValueError("similarity floor must be in (0, 1]")
        self.stub = stub
        self.stub_seed = _env_seed() if stub_seed is None else stub_seed
        self.stub_dim = stub_dim
        self.floor = floor
        self._stub_cache: dict[tuple[str, str], FeatureVec] = {}

    @classmethod
    def from_files(
        cls,
        tables: Mapping[str, str | os.PathLike] | None = None,
        lexicons: Mapping[str, str | os.PathLike] | None = None,
        **kwargs,
    ) -> EmbeddingProvider:
        """Load ``{space: path}`` maps; a missing file raises naming the space."""
        loaded = []
        for group in (tables or {}, lexicons or {}):
            out = []
            for space, path in group.items():
                if not Path(path).is_file():
                    raise FileNotFoundError(f"embedding table for space {space!r} not found: {path}")
                table = EmbeddingTable.load(path)
                if table.space.name != space:
                    raise SceneFormatError(f"{path} declares space {table.space.name!r}, expected {space!r}")
                out.append(table)
            loaded.append(out)
        return cls(loaded[0], loaded[1], **kwargs)

    def dim(self, space: str) -> int:
        table = self.tables.get(space) or self.lexicons.get(space)
        if table is not None:
            return table.space.dim
        if space not in SPACES:
            raise ValueError(f"unknown embedding space {space!r}")
        return self.stub_dim

    def space(self, name: str) -> EmbeddingSpace:
        return EmbeddingSpace(name, self.dim(name))

    def embed(self, space: str, text: str) -> FeatureVec:
        key = normalize_text(text)
        if not key:
            raise ValueError("cannot embed empty text")
        if space not in SPACES:
            raise ValueError(f"unknown embedding space {space!r}")
        table = self.tables.get(space)
        if table is not None:
            hit = table.entries.get(key)
            if hit is not None:
                return hit
            lex = self.lexicons.get(space)
            probe = lex.entries.get(key) if lex is not None else None
            if probe is not None:
                found = table.nearest(probe.values)
                if found is not None and found[1] >= self.floor:
                    logger.debug("snapped %r to %r in %s (cos=%.3f)", key, found[0], space, found[1])
                    return table.entries[found[0]]
        if not self.stub:
            raise UnencodableTextError(space, text)
        cached = self._stub_cache.get((space, key))
        if cached is None:
            cached = FeatureVec(space, stub_vector(key, self.dim(space), self.stub_seed))
            self._stub_cache[(space, key)] = cached
        return cached
