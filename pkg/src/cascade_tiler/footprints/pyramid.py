from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError

from .exceptions import TileGeometryError
from .raster import WHITE, AffineGeo, Raster
from .utils import to_decimal_text

TileSize = Tuple[int, int]

# Trade-off study tile sizes, coarse to fine.
TABLE_LEVELS: Tuple[TileSize, ...] = ((1792, 768), (256, 256), (128, 128), (64, 64))
DEFAULT_LEVELS: Tuple[TileSize, ...] = TABLE_LEVELS[:2]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class TileRect:
    x0: int
    y0: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def intersects(self, other: "TileRect") -> bool:
        return (
            self.x0 < other.x1 and other.x0 < self.x1 and self.y0 < other.y1 and other.y0 < self.y1
        )

    def clip(self, width: int, height: int) -> Optional["TileRect"]:
        """The part of this rect inside a width x height map, or None."""

        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return TileRect(x0, y0, x1 - x0, y1 - y0)

    def grow(self, margin: int) -> "TileRect":
        return TileRect(
            self.x0 - margin, self.y0 - margin, self.w + 2 * margin, self.h + 2 * margin
        )


@dataclass(frozen=True, order=True)
class TileRef:
    level: int
    row: int
    col: int
    rect: TileRect = field(compare=False)

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.level, self.row, self.col)

    @property
    def tile_id(self) -> str:
        return f"L{self.level}_R{self.row}_C{self.col}"

    @property
    def size(self) -> TileSize:
        return (self.rect.w, self.rect.h)


@dataclass(frozen=True)
class LevelSchedule:
    """
    Tile sizes per cascade level, coarse to fine. The first ``depth`` levels
    are classified; the final entry is the segmentation tile size. Levels past
    ``depth`` are subdivided without classification.
    """

    levels: Tuple[TileSize, ...] = DEFAULT_LEVELS
    depth: Optional[int] = None

    def __post_init__(self):
        levels = tuple((int(w), int(h)) for w, h in self.levels)
        if not levels:
            raise ValidationError("A level schedule needs at least one tile size.")
        for index, (w, h) in enumerate(levels):
            if w < 1 or h < 1:
                raise ValidationError(f"Level {index + 1} tile size {w}x{h} must be positive.")
            if index and (w > levels[index - 1][0] or h > levels[index - 1][1]):
                raise ValidationError(
                    f"Level {index + 1} tile {w}x{h} is larger than level {index} "
                    f"tile {levels[index - 1][0]}x{levels[index - 1][1]}."
                )
        depth = len(levels) if self.depth is None else int(self.depth)
        if not 0 <= depth <= len(levels):
            raise ValidationError(f"Depth {depth} must lie in [0, {len(levels)}].")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "depth", depth)

    @property
    def segment_size(self) -> TileSize:
        return self.levels[-1]

    @property
    def final_level(self) -> int:
        return len(self.levels)

    @property
    def classified_sizes(self) -> Tuple[TileSize, ...]:
        return self.levels[: self.depth]

    def describe(self) -> str:
        classified = ", ".join(f"{w}x{h}" for w, h in self.classified_sizes) or "none"
        w, h = self.segment_size
        return f"n={self.depth} classify [{classified}] segment {w}x{h}"


def table_schedule(n: int) -> LevelSchedule:
    """
    Trade-off study presets. n = 0 segments everything at 256x256, n = 1
    classifies 1792x768 and segments 256x256, n >= 2 classifies the first n
    sizes and segments at the last of them.
    """
    if not 0 <= n <= len(TABLE_LEVELS):
        raise ValidationError(f"Preset depth must lie in [0, {len(TABLE_LEVELS)}], got {n}.")
    if n == 0:
        return LevelSchedule(levels=(TABLE_LEVELS[1],), depth=0)
    if n == 1:
        return LevelSchedule(levels=TABLE_LEVELS[:2], depth=1)
    return LevelSchedule(levels=TABLE_LEVELS[:n], depth=n)


def _grid(
    x0: int,
    y0: int,
    width: int,
    height: int,
    tile_w: int,
    tile_h: int,
    *,
    level: int,
    row_base: int = 0,
    col_base: int = 0,
    bounds: Optional[TileSize] = None,
) -> List[TileRef]:
    rows = math.ceil(height / tile_h)
    cols = math.ceil(width / tile_w)
    tiles = []
    for row in range(rows):
        for col in range(cols):
            rect = TileRect(x0 + col * tile_w, y0 + row * tile_h, tile_w, tile_h)
            if bounds is not None and rect.clip(*bounds) is None:
                continue
            tiles.append(TileRef(level, row_base + row, col_base + col, rect))
    return tiles


def tile_grid(
    width: int, height: int, tile_w: int, tile_h: int, *, level: int = 1
) -> List[TileRef]:
    """Row-major disjoint cover of the ceil-padded width x height extent."""

    if min(width, height, tile_w, tile_h) < 1:
        raise TileGeometryError(
            f"Tile grid arguments must be positive, got {width}x{height} / {tile_w}x{tile_h}."
        )
    return _grid(0, 0, width, height, tile_w, tile_h, level=level)


def subdivide(
    tile: TileRef,
    next_size: TileSize,
    *,
    bounds: Optional[TileSize] = None,
) -> List[TileRef]:
    """
    Children of ``tile`` at the next level, covering its (padded) rect. Child
    indices are global: parent index times children per axis plus the local
    index, which matches ``tile_grid`` whenever the sizes divide. With
    ``bounds`` given, children lying wholly outside the map are skipped.
    """
    tile_w, tile_h = next_size
    parent = tile.rect
    if tile_w < 1 or tile_h < 1:
        raise TileGeometryError(f"Child tile size {tile_w}x{tile_h} must be positive.")
    if tile_w > parent.w or tile_h > parent.h:
        raise TileGeometryError(
            f"Child tile {tile_w}x{tile_h} is larger than parent {tile.tile_id} "
            f"({parent.w}x{parent.h})."
        )
    per_row = math.ceil(parent.h / tile_h)
    per_col = math.ceil(parent.w / tile_w)
    return _grid(
        parent.x0,
        parent.y0,
        parent.w,
        parent.h,
        tile_w,
        tile_h,
        level=tile.level + 1,
        row_base=tile.row * per_row,
        col_base=tile.col * per_col,
        bounds=bounds,
    )


def level_tiles(width: int, height: int, schedule: LevelSchedule) -> List[List[TileRef]]:
    """The complete tiling of every level, as if no tile were ever rejected."""

    levels = schedule.levels
    tiles = tile_grid(width, height, *levels[0])
    result = [tiles]
    for size in levels[1:]:
        tiles = [
            child for parent in tiles for child in subdivide(parent, size, bounds=(width, height))
        ]
        result.append(tiles)
    return result


def grid_index(tiles: Iterable[TileRef]) -> Dict[Tuple[int, int], TileRef]:
    return {(tile.row, tile.col): tile for tile in tiles}


def extract(
    map_raster: Raster, tile: TileRef, pad_value: int = WHITE, *, context_px: int = 0
) -> Raster:
    """
    Crop ``tile`` (optionally grown by ``context_px`` on every side) out of the
    map, filling out-of-bounds pixels with ``pad_value``.

    Raises
    ------
    TileGeometryError
        When the tile rect does not overlap the map at all.
    """
    rect = tile.rect.grow(context_px) if context_px else tile.rect
    if tile.rect.clip(map_raster.width, map_raster.height) is None:
        raise TileGeometryError(
            f"Tile {tile.tile_id} at ({rect.x0}, {rect.y0}) lies outside the "
            f"{map_raster.width}x{map_raster.height} map."
        )
    inside = rect.clip(map_raster.width, map_raster.height)
    if inside == rect:
        return Raster(map_raster.pixels[rect.y0 : rect.y1, rect.x0 : rect.x1])
    out = np.full((rect.h, rect.w), pad_value, dtype=np.uint8)
    out[
        inside.y0 - rect.y0 : inside.y1 - rect.y0,
        inside.x0 - rect.x0 : inside.x1 - rect.x0,
    ] = map_raster.pixels[inside.y0 : inside.y1, inside.x0 : inside.x1]
    return Raster(out)


def pixel_to_world(geo: AffineGeo, x: float, y: float) -> Tuple[float, float]:
    return (geo.origin_x + x * geo.px_size_x, geo.origin_y + y * geo.px_size_y)


def world_to_pixel(geo: AffineGeo, world_x: float, world_y: float) -> Tuple[float, float]:
    return ((world_x - geo.origin_x) / geo.px_size_x, (world_y - geo.origin_y) / geo.px_size_y)


def read_world_file(path: Union[str, Path]) -> AffineGeo:
    """
    Four-line sidecar: px_size_x, px_size_y, origin_x, origin_y.

    Raises
    ------
    ValidationError
        When the file does not hold exactly four decimal numbers.
    """
    lines = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if len(lines) != 4:
        raise ValidationError(f"World file {path} must have 4 values, found {len(lines)}.")
    try:
        px_size_x, px_size_y, origin_x, origin_y = (float(line) for line in lines)
    except ValueError as exc:
        raise ValidationError(f"World file {path} holds a non-numeric value: {exc}") from exc
    return AffineGeo(origin_x=origin_x, origin_y=origin_y, px_size_x=px_size_x, px_size_y=px_size_y)


def write_world_file(geo: AffineGeo, path: Union[str, Path]) -> Path:
    path = Path(path)
    values: Sequence[float] = (geo.px_size_x, geo.px_size_y, geo.origin_x, geo.origin_y)
    path.write_text("".join(f"{to_decimal_text(value)}\n" for value in values))
    return path


def sidecar_path(image_path: Union[str, Path]) -> Path:
    """``map.png`` pairs with ``map.pgw``."""

    return Path(image_path).with_suffix(".pgw")
