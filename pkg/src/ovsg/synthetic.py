"""Synthetic scene files with repeated object labels across rooms.

Every room holds one instance of every label, so each object has
``n_rooms - 1`` same-label distractors that only context can tell apart.
"""

from __future__ import annotations

import random
from typing import Any, Sequence

ROOM_NAMES = ("kitchen", "office", "laboratory", "garage", "bedroom", "library", "studio", "lounge")
AGENT_NAMES = ("tom", "mary", "zoro", "nami", "luffy", "sanji", "robin", "usopp")
LABELS = ("cup", "bottle", "book", "lamp", "plant", "laptop", "chair", "clock")

ROOM_SIZE = (8.0, 8.0, 3.0)
ROOM_SPACING = 30.0
GRID = 3
POINTS_PER_OBJECT = 50


def _box(lo: Sequence[float], hi: Sequence[float]) -> dict[str, list[float]]:
    return {"min": list(lo), "max": list(hi), "center": [(a + b) / 2 for a, b in zip(lo, hi)]}


def distractor_scene(
    n_rooms: int = 4,
    n_labels: int = 5,
    n_agents: int = 4,
    likes_per_agent: int = 3,
    seed: int = 0,
    scene_id: str = "synthetic",
) -> dict[str, Any]:
    """Scene-file dict: rooms far apart, objects spread on a grid inside each room.

    Each agent likes at most one object per label, so an agent reference
    always singles out one instance.
    """
    if not 1 <= n_rooms <= len(ROOM_NAMES):
        raise ValueError(f"n_rooms must be in [1, {len(ROOM_NAMES)}]")
    if not 1 <= n_labels <= min(len(LABELS), GRID * GRID):
        raise ValueError("too many labels for the room grid")
    if not 0 <= n_agents <= len(AGENT_NAMES):
        raise ValueError(f"n_agents must be in [0, {len(AGENT_NAMES)}]")
    rng = random.Random(seed)
    labels = LABELS[:n_labels]
    cell = ROOM_SIZE[0] / GRID
    objects, regions = [], []
    next_point = 0
    for r in range(n_rooms):
        x0 = r * ROOM_SPACING
        regions.append({"id": f"region_{r}", "name": ROOM_NAMES[r], "bbox": _box((x0, 0, 0), (x0 + 8, 8, 3))})
        cells = rng.sample(range(GRID * GRID), n_labels)
        for label, c in zip(labels, cells):
            cx = x0 + (c % GRID + 0.5) * cell
            cy = (c // GRID + 0.5) * cell
            half = [rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.4)]
            lo = (cx - half[0], cy - half[1], 0.0)
            hi = (cx + half[0], cy + half[1], 2 * half[2])
            objects.append(
                {
                    "id": f"obj_{rng.randrange(16**6):06x}_{r}",
                    "label": label,
                    "bbox": _box(lo, hi),
                    "point_indices": list(range(next_point, next_point + POINTS_PER_OBJECT)),
                }
            )
            next_point += POINTS_PER_OBJECT
    agents, likes = [], []
    for a in range(n_agents):
        agents.append({"id": f"agent_{a}", "name": AGENT_NAMES[a]})
        for label in rng.sample(labels, min(likes_per_agent, n_labels)):
            obj = rng.choice([o for o in objects if o["label"] == label])
            likes.append({"src": f"agent_{a}", "dst": obj["id"], "label": "like"})
    return {
        "scene_id": scene_id,
        "objects": objects,
        "agents": agents,
        "regions": regions,
        "abstract_relations": likes,
    }
