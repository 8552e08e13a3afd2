"""
Seeded rural-map generator with exact ground truth.

Every object class draws from its own PCG64 stream spawned from one
``SeedSequence(seed)``, so adding distractors never moves a building.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import SynthesisError
from .pyramid import TileRect, TileRef, sidecar_path, write_world_file
from .raster import BLACK, WHITE, AffineGeo, BinaryMask, Raster, save_mask, save_png
from .utils import to_decimal_text

PathLike = Union[str, Path]

# Straddling buildings are centred on a corner of this grid.
STRADDLE_GRID = 256
STREAMS = ("buildings", "field_lines", "wetland", "specks")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthParams:
    width: int = 7168
    height: int = 2304
    building_count_mean: float = 20.0
    cluster_size_mean: float = 3.5
    cluster_radius: int = 120
    building_size_range: Tuple[int, int] = (12, 60)
    # Distractor densities are expected objects per megapixel.
    field_line_density: float = 1.5
    wetland_density: float = 0.25
    speck_density: float = 3.0
    hatch_spacing: int = 4
    border_px: int = 2
    margin_px: int = 4
    max_placement_retries: int = 30
    force_straddle: bool = True
    seed: int = 42
    origin_x: float = 499500.0
    origin_y: float = 722500.0
    px_size: float = 0.2136

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise SynthesisError("Map width and height must be at least 1.")
        lo, hi = self.building_size_range
        if lo < 2 * self.border_px + 1 or hi < lo:
            raise SynthesisError(f"Building size range {lo}..{hi} is not usable.")
        if hi > min(self.width, self.height):
            raise SynthesisError(
                f"Building size {hi} does not fit a {self.width}x{self.height} map."
            )
        densities = (
            "building_count_mean",
            "field_line_density",
            "wetland_density",
            "speck_density",
        )
        for name in densities:
            if getattr(self, name) < 0:
                raise SynthesisError(f"{name} must be non-negative.")
        if self.cluster_size_mean < 1:
            raise SynthesisError("Clusters hold at least one building on average.")
        if self.hatch_spacing < 2 or self.margin_px < 0 or self.max_placement_retries < 1:
            raise SynthesisError("Hatch spacing, margin and retries are out of range.")
        if not 0 <= self.seed < 2**64:
            raise SynthesisError("Seed must be a 64-bit unsigned integer.")

    @property
    def geo(self) -> AffineGeo:
        return AffineGeo(
            origin_x=self.origin_x,
            origin_y=self.origin_y,
            px_size_x=self.px_size,
            px_size_y=-self.px_size,
        )

    def with_seed(self, seed: int) -> "SynthParams":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class Building:
    rect: TileRect

    @property
    def centroid(self) -> Tuple[float, float]:
        """Center of mass of the filled rect."""

        return (self.rect.x0 + (self.rect.w - 1) / 2, self.rect.y0 + (self.rect.h - 1) / 2)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    buildings: Tuple[Building, ...]
    truth_mask: BinaryMask
    requested: int = 0
    dropped: int = 0

    @property
    def centroids(self) -> List[Tuple[float, float]]:
        return [building.centroid for building in self.buildings]

    def count_in(self, rect: TileRect) -> int:
        inside = rect.clip(self.truth_mask.width, self.truth_mask.height)
        if inside is None:
            return 0
        window = self.truth_mask.bits[inside.y0 : inside.y1, inside.x0 : inside.x1]
        return int(np.count_nonzero(window))

    @classmethod
    def from_buildings(cls, buildings: Sequence[Building], width: int, height: int, **kwargs):
        bits = np.zeros((height, width), dtype=bool)
        for building in buildings:
            rect = building.rect
            bits[rect.y0 : rect.y1, rect.x0 : rect.x1] = True
        return cls(buildings=tuple(buildings), truth_mask=BinaryMask(bits), **kwargs)


def truth_tile_label(truth: GroundTruth, tile: TileRef) -> bool:
    return truth.count_in(tile.rect) > 0


def _streams(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {
        name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(STREAMS, children)
    }


def draw_building(
    pixels: np.ndarray,
    rect: TileRect,
    border_px: int = 2,
    hatch_spacing: int = 4,
) -> None:
    """Solid border plus diagonal cross-hatching, phased on global coordinates."""

    ys, xs = np.ogrid[rect.y0 : rect.y1, rect.x0 : rect.x1]
    ink = ((xs + ys) % hatch_spacing == 0) | ((xs - ys) % hatch_spacing == 0)
    ink = np.broadcast_to(ink, (rect.h, rect.w)).copy()
    ink[:border_px, :] = True
    ink[-border_px:, :] = True
    ink[:, :border_px] = True
    ink[:, -border_px:] = True
    window = pixels[rect.y0 : rect.y1, rect.x0 : rect.x1]
    window[:] = np.where(ink, BLACK, WHITE)


def _fits(rect: TileRect, placed: Sequence[TileRect], margin: int) -> bool:
    grown = rect.grow(margin)
    return not any(grown.intersects(other) for other in placed)


def _place_buildings(
    params: SynthParams,
    rng: np.random.Generator,
) -> Tuple[List[TileRect], int, int]:
    mean_clusters = params.building_count_mean / params.cluster_size_mean
    cluster_count = int(rng.poisson(mean_clusters)) if mean_clusters > 0 else 0
    sizes_lo, sizes_hi = params.building_size_range
    placed: List[TileRect] = []
    requested = 0

    corners = [
        (x, y)
        for y in range(STRADDLE_GRID, params.height - STRADDLE_GRID + 1, STRADDLE_GRID)
        for x in range(STRADDLE_GRID, params.width - STRADDLE_GRID + 1, STRADDLE_GRID)
    ]
    for cluster in range(cluster_count):
        members = 1 + int(rng.poisson(params.cluster_size_mean - 1))
        requested += members
        straddle = params.force_straddle and cluster == 0 and bool(corners)
        if straddle:
            cx, cy = corners[int(rng.integers(len(corners)))]
        else:
            cx, cy = int(rng.integers(params.width)), int(rng.integers(params.height))
        for member in range(members):
            for _attempt in range(params.max_placement_retries):
                w = int(rng.integers(sizes_lo, sizes_hi + 1))
                h = int(rng.integers(sizes_lo, sizes_hi + 1))
                if straddle and member == 0:
                    x0, y0 = cx - w // 2, cy - h // 2
                else:
                    dx, dy = rng.integers(-params.cluster_radius, params.cluster_radius + 1, size=2)
                    x0 = min(max(cx + int(dx) - w // 2, 0), params.width - w)
                    y0 = min(max(cy + int(dy) - h // 2, 0), params.height - h)
                rect = TileRect(x0, y0, w, h)
                if _fits(rect, placed, params.margin_px):
                    placed.append(rect)
                    break
    return placed, requested, requested - len(placed)


def _poisson_count(rng: np.random.Generator, density: float, params: SynthParams) -> int:
    expected = density * params.width * params.height / 1e6
    return int(rng.poisson(expected)) if expected > 0 else 0


def _field_lines(ink: np.ndarray, params: SynthParams, rng: np.random.Generator) -> None:
    for _ in range(_poisson_count(rng, params.field_line_density, params)):
        horizontal = bool(rng.random() < 0.5)
        span = params.width if horizontal else params.height
        length = int(rng.integers(max(span // 8, 1), span + 1))
        start = int(rng.integers(0, span - length + 1))
        if horizontal:
            ink[int(rng.integers(params.height)), start : start + length] = True
        else:
            ink[start : start + length, int(rng.integers(params.width))] = True


def _wetland(ink: np.ndarray, params: SynthParams, rng: np.random.Generator) -> None:
    """Patches of short vertical strokes three pixels apart."""

    for _ in range(_poisson_count(rng, params.wetland_density, params)):
        w = int(rng.integers(40, 161))
        h = int(rng.integers(30, 101))
        x0 = int(rng.integers(0, max(params.width - w, 0) + 1))
        y0 = int(rng.integers(0, max(params.height - h, 0) + 1))
        ys, xs = np.ogrid[0:h, 0:w]
        strokes = (xs % 3 == 0) & (ys % 6 < 4)
        target = ink[y0 : y0 + h, x0 : x0 + w]
        target |= strokes[: target.shape[0], : target.shape[1]]


def _specks(ink: np.ndarray, params: SynthParams, rng: np.random.Generator) -> None:
    """Text-like rows of short dashes and dots."""

    for _ in range(_poisson_count(rng, params.speck_density, params)):
        rows = int(rng.integers(1, 3))
        x = int(rng.integers(params.width))
        y = int(rng.integers(params.height))
        for row in range(rows):
            cursor = x
            for _dash in range(int(rng.integers(3, 9))):
                length = int(rng.integers(1, 6))
                line_y = y + 3 * row
                if 0 <= line_y < params.height:
                    ink[line_y, cursor : min(cursor + length, params.width)] = True
                cursor += length + int(rng.integers(2, 4))


def generate(params: Optional[SynthParams] = None) -> Tuple[Raster, GroundTruth]:
    """
    Render one synthetic map and its ground truth. Buildings that cannot be
    placed within the retry budget are dropped and counted in the truth.
    """
    params = params or SynthParams()
    rngs = _streams(params.seed)
    rects, requested, dropped = _place_buildings(params, rngs["buildings"])
    if dropped:
        logger.warning(
            "Dropped %s of %s buildings after placement retries (seed %s)",
            dropped,
            requested,
            params.seed,
        )

    ink = np.zeros((params.height, params.width), dtype=bool)
    _field_lines(ink, params, rngs["field_lines"])
    _wetland(ink, params, rngs["wetland"])
    _specks(ink, params, rngs["specks"])
    for rect in rects:
        clear = rect.grow(params.margin_px).clip(params.width, params.height)
        ink[clear.y0 : clear.y1, clear.x0 : clear.x1] = False

    pixels = np.where(ink, BLACK, WHITE).astype(np.uint8)
    for rect in rects:
        draw_building(pixels, rect, params.border_px, params.hatch_spacing)

    buildings = [Building(rect) for rect in rects]
    truth = GroundTruth.from_buildings(
        buildings, params.width, params.height, requested=requested, dropped=dropped
    )
    logger.debug("Generated seed %s with %s buildings", params.seed, len(buildings))
    return Raster(pixels, geo=params.geo), truth


def truth_lines(truth: GroundTruth) -> str:
    """One ``x0,y0,w,h,cx,cy`` line per building."""

    lines = []
    for building in truth.buildings:
        rect = building.rect
        cx, cy = building.centroid
        values = (rect.x0, rect.y0, rect.w, rect.h, to_decimal_text(cx), to_decimal_text(cy))
        lines.append(",".join(str(value) for value in values) + "\n")
    return "".join(lines)


def read_truth(path: PathLike) -> List[Building]:
    buildings = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise SynthesisError(f"{path}:{number}: expected 6 comma-separated values.")
        try:
            x0, y0, w, h = (int(value) for value in fields[:4])
        except ValueError as exc:
            raise SynthesisError(f"{path}:{number}: {exc}") from exc
        buildings.append(Building(TileRect(x0, y0, w, h)))
    return buildings


@dataclass(frozen=True)
class SynthOutputs:
    map_path: Path
    mask_path: Path
    truth_path: Path
    world_path: Path
    building_count: int = field(default=0, compare=False)


def write_outputs(raster: Raster, truth: GroundTruth, out_dir: PathLike, stem: str) -> SynthOutputs:
    out_dir = Path(out_dir)
    map_path = save_png(raster, out_dir / f"{stem}.png")
    mask_path = save_mask(truth.truth_mask, out_dir / f"{stem}_mask.png")
    truth_path = out_dir / f"{stem}_truth.txt"
    truth_path.write_text(truth_lines(truth))
    world_path = write_world_file(raster.geo, sidecar_path(map_path)) if raster.geo else None
    logger.info("Wrote %s (%s buildings)", map_path, len(truth.buildings))
    return SynthOutputs(map_path, mask_path, truth_path, world_path, len(truth.buildings))
