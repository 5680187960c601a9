"""Procedural stepping-stone terrains, heightmaps and the success curriculum.

Four families are generated: ``upstairs``, ``downstairs``, ``flat_stones`` and
``height_varying``. All randomness flows through a numpy ``Generator`` backed
by PCG64 and seeded from ``SeedSequence(seed, spawn_key=(family_index,))`` so
that a (family, difficulty, seed) triple fully determines the terrain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "FAMILIES",
    "Stone",
    "StoneSequence",
    "TerrainParams",
    "CurriculumState",
    "sample_params",
    "param_ranges",
    "generate_terrain",
    "contains",
    "heightmap",
    "curriculum_update",
    "level_difficulty",
    "virtual_slope",
    "terrain_rng",
    "dump_terrain",
    "load_terrain",
    "terrain_to_obj",
]

FAMILIES = ("upstairs", "downstairs", "flat_stones", "height_varying")
MAX_LEVEL = 9
STREAK_TO_ADVANCE = 3
TERRAIN_SCHEMA = "planc.terrain/1"


@dataclass(frozen=True, slots=True)
class Stone:
    center: tuple[float, float, float]
    depth_x: float
    width_y: float
    block_height: float

    def __post_init__(self):
        if not (self.depth_x > 0 and self.width_y > 0 and self.block_height > 0):
            raise ValueError(f"stone extents must be positive: {self}")

    @property
    def top(self) -> float:
        return self.center[2]


@dataclass(frozen=True)
class StoneSequence:
    kind: str
    stones: tuple[Stone, ...]
    platform_drop: float
    difficulty: float
    seed: int

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown terrain family {self.kind!r}")
        if not 0.0 <= self.platform_drop <= 1.0:
            raise ValueError(f"platform_drop out of [0, 1]: {self.platform_drop}")
        xs = [s.center[0] for s in self.stones]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("stone centers must be strictly increasing in x")

    def __len__(self) -> int:
        return len(self.stones)

    @property
    def pit_height(self) -> float:
        return min(s.top for s in self.stones) - self.platform_drop

    def gaps(self) -> list[float]:
        return [
            b.center[0] - a.center[0] - 0.5 * (a.depth_x + b.depth_x)
            for a, b in zip(self.stones, self.stones[1:])
        ]

    def as_array(self) -> np.ndarray:
        """Rows of (cx, cy, top, depth_x, width_y, block_height)."""
        return np.array(
            [(*s.center, s.depth_x, s.width_y, s.block_height) for s in self.stones],
            dtype=np.float64,
        )


@dataclass(frozen=True, slots=True)
class TerrainParams:
    gap: float
    height_variation: float
    stone_depth: float
    block_height: float
    stair_depth: float
    stair_height: float
    platform_drop: float


def _check_difficulty(d: float) -> None:
    if not (isinstance(d, (int, float)) and 0.0 <= d <= 1.0):
        raise ValueError(f"difficulty must lie in [0, 1], got {d!r}")


def param_ranges(d: float) -> dict[str, tuple[float, float]]:
    """Closed sampling interval of every terrain parameter at difficulty ``d``."""
    _check_difficulty(d)
    return {
        "gap": (0.3, 0.3 + 0.4 * d),
        "height_variation": (-0.2 * d, 0.2 * d),
        "stone_depth": (0.13, 0.3),
        "block_height": (0.75, 1.25),
        "stair_depth": (0.2, 0.3),
        "stair_height": (0.0, 0.2 * d),
        "platform_drop": (0.0, 1.0),
    }


def sample_params(kind: str, d: float, rng: np.random.Generator) -> TerrainParams:
    """One uniform draw of every parameter, in the documented field order."""
    if kind not in FAMILIES:
        raise ValueError(f"unknown terrain family {kind!r}; choose from {', '.join(FAMILIES)}")
    ranges = param_ranges(d)
    return TerrainParams(**{name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()})


def terrain_rng(kind: str, seed: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(FAMILIES.index(kind),))
    return np.random.Generator(np.random.PCG64(ss))


def generate_terrain(
    kind: str,
    d: float,
    seed: int,
    n_stones: int = 20,
    stone_width: float = 0.4,
) -> StoneSequence:
    """Stones placed left to right starting with stone 0 centred at the origin.

    Terrain-level quantities (stair depth, stair rise, platform drop) come from
    the first draw; each following stone takes gap, depth, block height and
    height offset from its own draw. Stairs are contiguous treads.
    """
    if n_stones < 2:
        raise ValueError(f"need at least 2 stones, got {n_stones}")
    _check_difficulty(d)
    rng = terrain_rng(kind, seed)
    base = sample_params(kind, d, rng)
    stairs = kind in ("upstairs", "downstairs")
    rise = {"upstairs": base.stair_height, "downstairs": -base.stair_height}.get(kind, 0.0)

    stones: list[Stone] = []
    x = 0.0
    prev_depth = None
    for i in range(n_stones):
        draw = base if i == 0 else sample_params(kind, d, rng)
        if stairs:
            depth = base.stair_depth
            top = i * rise
            gap = 0.0
        else:
            depth = draw.stone_depth
            top = draw.height_variation if kind == "height_varying" else 0.0
            gap = draw.gap
        if prev_depth is not None:
            x += 0.5 * (prev_depth + depth) + gap
        stones.append(Stone((x, 0.0, top), depth, stone_width, draw.block_height))
        prev_depth = depth
    return StoneSequence(kind, tuple(stones), base.platform_drop, float(d), int(seed))


def contains(stone: Stone, point_xy) -> bool:
    """Closed-rectangle membership of a foothold in the stone's top face."""
    cx, cy = stone.center[0], stone.center[1]
    return abs(point_xy[0] - cx) <= 0.5 * stone.depth_x and abs(point_xy[1] - cy) <= 0.5 * stone.width_y


def heightmap(seq: StoneSequence, center_xy, size: float = 1.0, spacing: float = 0.1) -> np.ndarray:
    """Point-sampled terrain height on a square grid with inclusive endpoints.

    Returns an ``(n, n)`` array indexed ``[ix, iy]``; the default is 11x11.
    """
    n = int(round(size / spacing)) + 1
    offs = (np.arange(n) - (n - 1) / 2) * spacing
    gx = center_xy[0] + offs[:, None] * np.ones((1, n))
    gy = center_xy[1] + np.ones((n, 1)) * offs[None, :]
    out = np.full((n, n), seq.pit_height)
    for s in seq.stones:
        inside = (np.abs(gx - s.center[0]) <= 0.5 * s.depth_x) & (np.abs(gy - s.center[1]) <= 0.5 * s.width_y)
        out[inside] = s.top
    return out


@dataclass(frozen=True, slots=True)
class CurriculumState:
    level: int = 0
    consecutive_successes: int = 0

    def __post_init__(self):
        if not 0 <= self.level <= MAX_LEVEL or self.consecutive_successes < 0:
            raise ValueError(f"invalid curriculum state {self}")

    @property
    def difficulty(self) -> float:
        return level_difficulty(self.level)


def level_difficulty(level: int) -> float:
    return level / MAX_LEVEL


def curriculum_update(state: CurriculumState, success: bool) -> CurriculumState:
    if not success:
        return replace(state, consecutive_successes=0)
    streak = state.consecutive_successes + 1
    if streak >= STREAK_TO_ADVANCE:
        return CurriculumState(min(state.level + 1, MAX_LEVEL), 0)
    return CurriculumState(state.level, streak)


def virtual_slope(stance: Stone, nxt: Stone) -> tuple[float, float, float]:
    """(horizontal distance, rise, heading) of the line between stone top-centres."""
    dx = nxt.center[0] - stance.center[0]
    dy = nxt.center[1] - stance.center[1]
    return dx, nxt.top - stance.top, math.atan2(dy, dx)


# -- export -----------------------------------------------------------------


def terrain_document(seq: StoneSequence) -> dict:
    return {
        "schema": TERRAIN_SCHEMA,
        "kind": seq.kind,
        "seed": seq.seed,
        "difficulty": seq.difficulty,
        "platform_drop": seq.platform_drop,
        "stones": [
            {
                "center": list(s.center),
                "depth_x": s.depth_x,
                "width_y": s.width_y,
                "block_height": s.block_height,
            }
            for s in seq.stones
        ],
    }


def dump_terrain(seq: StoneSequence) -> str:
    return json.dumps(terrain_document(seq), indent=2) + "\n"


def load_terrain(text: str) -> StoneSequence:
    doc = json.loads(text)
    if doc.get("schema") != TERRAIN_SCHEMA:
        raise ValueError(f"unsupported terrain schema {doc.get('schema')!r}")
    stones = tuple(
        Stone(tuple(float(c) for c in s["center"]), s["depth_x"], s["width_y"], s["block_height"])
        for s in doc["stones"]
    )
    return StoneSequence(doc["kind"], stones, doc["platform_drop"], doc["difficulty"], doc["seed"])


def _box(cx, cy, ztop, dx, dy, h) -> tuple[list, list]:
    xs = (cx - dx / 2, cx + dx / 2)
    ys = (cy - dy / 2, cy + dy / 2)
    zs = (ztop - h, ztop)
    verts = [(x, y, z) for z in zs for y in ys for x in xs]
    # vertex index = 4*iz + 2*iy + ix
    quads = [
        (0, 2, 3, 1), (4, 5, 7, 6),  # bottom, top
        (0, 1, 5, 4), (2, 6, 7, 3),  # -y, +y
        (0, 4, 6, 2), (1, 3, 7, 5),  # -x, +x
    ]
    tris = [t for a, b, c, d in quads for t in ((a, b, c), (a, c, d))]
    return verts, tris


def terrain_to_obj(seq: StoneSequence, margin: float = 0.5) -> str:
    """Wavefront OBJ triangle mesh: one box per stone plus the pit floor."""
    lines = [f"# {seq.kind} d={seq.difficulty} seed={seq.seed}"]
    parts: list[tuple[list, list]] = []
    for s in seq.stones:
        parts.append(_box(s.center[0], s.center[1], s.top, s.depth_x, s.width_y, s.block_height))
    x0 = seq.stones[0].center[0] - seq.stones[0].depth_x / 2 - margin
    x1 = seq.stones[-1].center[0] + seq.stones[-1].depth_x / 2 + margin
    w = max(s.width_y for s in seq.stones) + 2 * margin
    zf = seq.pit_height
    floor = [(x0, -w / 2, zf), (x1, -w / 2, zf), (x1, w / 2, zf), (x0, w / 2, zf)]
    parts.append((floor, [(0, 1, 2), (0, 2, 3)]))
    offset = 1
    for verts, tris in parts:
        lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in verts]
        lines += [f"f {a + offset} {b + offset} {c + offset}" for a, b, c in tris]
        offset += len(verts)
    return "\n".join(lines) + "\n"
