from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from scipy import ndimage

from .pyramid import TileRect, TileRef, TileSize, pixel_to_world
from .raster import AffineGeo, BinaryMask

Pixel = Tuple[int, int]
GridKey = Tuple[int, int]

DEFAULT_CONNECTIVITY = 8
DEFAULT_MIN_AREA = 6

NEIGHBOR_STEPS = tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0))

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Region:
    """Positive tiles plus their featureless halo, mosaicked over the covering rect."""

    region_id: int
    tiles: FrozenSet[TileRef]
    mosaic: BinaryMask
    offset: Pixel

    @property
    def rect(self) -> TileRect:
        return TileRect(self.offset[0], self.offset[1], self.mosaic.width, self.mosaic.height)


@dataclass(frozen=True)
class Detection:
    centroid_px: Tuple[float, float]
    area_px: int
    region_id: int = 0
    centroid_world: Optional[Tuple[float, float]] = None

    @property
    def sort_key(self) -> Tuple[float, float, int]:
        return (self.centroid_px[1], self.centroid_px[0], self.area_px)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity not in (4, 8):
        raise ValidationError(f"Connectivity must be 4 or 8, got {connectivity}.")
    return ndimage.generate_binary_structure(2, 2 if connectivity == 8 else 1)


class _UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, item: int) -> int:
        while self.parent[item] != item:
            self.parent[item] = self.parent[self.parent[item]]
            item = self.parent[item]
        return item

    def union(self, a: int, b: int) -> None:
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def _grow(seed: GridKey, positive: Set[GridKey], grid: Mapping[GridKey, TileRef]) -> Set[GridKey]:
    region = {seed}
    frontier = deque([seed])
    expanded = {seed}
    while frontier:
        row, col = frontier.popleft()
        for dr, dc in NEIGHBOR_STEPS:
            key = (row + dr, col + dc)
            if key not in grid:
                continue
            region.add(key)
            if key in positive and key not in expanded:
                expanded.add(key)
                frontier.append(key)
    return region


def _mosaic(
    keys: Iterable[GridKey],
    grid: Mapping[GridKey, TileRef],
    masks: Mapping[GridKey, BinaryMask],
    bounds: Optional[TileSize],
) -> Tuple[BinaryMask, Pixel]:
    rects = [grid[key].rect for key in keys]
    x0, y0 = min(r.x0 for r in rects), min(r.y0 for r in rects)
    x1, y1 = max(r.x1 for r in rects), max(r.y1 for r in rects)
    if bounds is not None:
        x1, y1 = min(x1, bounds[0]), min(y1, bounds[1])
    bits = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for key in keys:
        mask = masks.get(key)
        if mask is None or mask.is_empty:
            continue
        rect = grid[key].rect
        w, h = min(rect.w, x1 - rect.x0), min(rect.h, y1 - rect.y0)
        bits[rect.y0 - y0 : rect.y0 - y0 + h, rect.x0 - x0 : rect.x0 - x0 + w] |= mask.bits[:h, :w]
    return BinaryMask(bits), (x0, y0)


def grow_regions(
    masks: Mapping[TileRef, BinaryMask],
    grid: Mapping[GridKey, TileRef],
    bounds: Optional[TileSize] = None,
) -> List[Region]:
    """
    Group positive final-level tiles into tile-disjoint regions.

    Growth runs breadth-first from every positive tile over its 8 neighbours
    that exist in ``grid``; positive neighbours keep growing, empty ones stay
    as the halo. Regions sharing a tile are merged. Tiles absent from
    ``masks`` (never segmented) count as empty. ``bounds`` clips mosaics to
    the map so padding never reaches a mosaic.
    """
    by_key = {(tile.row, tile.col): mask for tile, mask in masks.items()}
    positive = {key for key, mask in by_key.items() if not mask.is_empty and key in grid}
    grown: List[Set[GridKey]] = []
    assigned: Set[GridKey] = set()
    for seed in sorted(positive):
        if seed in assigned:
            continue
        tiles = _grow(seed, positive, grid)
        assigned |= tiles & positive
        grown.append(tiles)

    union = _UnionFind(len(grown))
    owner: Dict[GridKey, int] = {}
    for index, tiles in enumerate(grown):
        for key in tiles:
            if key in owner:
                union.union(owner[key], index)
            else:
                owner[key] = index
    merged: Dict[int, Set[GridKey]] = {}
    for index, tiles in enumerate(grown):
        merged.setdefault(union.find(index), set()).update(tiles)

    regions = []
    for region_id, keys in enumerate(sorted(merged.values(), key=min)):
        mosaic, offset = _mosaic(keys, grid, by_key, bounds)
        regions.append(
            Region(
                region_id=region_id,
                tiles=frozenset(grid[key] for key in keys),
                mosaic=mosaic,
                offset=offset,
            )
        )
    logger.info("Grew %s regions from %s positive tiles", len(regions), len(positive))
    return regions


def connected_components(
    mask: BinaryMask,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> List[FrozenSet[Pixel]]:
    """Maximal connected sets of positive pixels, as (x, y) sets in scan order."""

    labels, count = ndimage.label(mask.bits, structure=_structure(connectivity))
    components = []
    for label in range(1, count + 1):
        ys, xs = np.nonzero(labels == label)
        components.append(frozenset(zip(xs.tolist(), ys.tolist())))
    return components


def centroid(component: Iterable[Pixel]) -> Tuple[float, float]:
    pixels = list(component)
    if not pixels:
        raise ValidationError("The centroid of an empty component is undefined.")
    coords = np.asarray(pixels, dtype=float)
    return (float(coords[:, 0].mean()), float(coords[:, 1].mean()))


def extract_detections(
    regions: Iterable[Region],
    geo: Optional[AffineGeo] = None,
    min_area: int = DEFAULT_MIN_AREA,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> List[Detection]:
    """
    One detection per connected component of every region mosaic, at its
    center of mass in map pixels. Components smaller than ``min_area`` are
    dropped. Sorted by (y, x).
    """
    structure = _structure(connectivity)
    detections = []
    for region in regions:
        labels, count = ndimage.label(region.mosaic.bits, structure=structure)
        if not count:
            continue
        for label, window in enumerate(ndimage.find_objects(labels), start=1):
            if window is None:
                continue
            ys, xs = np.nonzero(labels[window] == label)
            area = int(xs.size)
            if area < max(min_area, 1):
                continue
            x = float(xs.mean()) + window[1].start + region.offset[0]
            y = float(ys.mean()) + window[0].start + region.offset[1]
            world = pixel_to_world(geo, x, y) if geo is not None else None
            detections.append(
                Detection(
                    centroid_px=(x, y),
                    area_px=area,
                    region_id=region.region_id,
                    centroid_world=world,
                )
            )
    detections.sort(key=lambda detection: detection.sort_key)
    return detections


def detections_from_mask(
    mask: BinaryMask,
    geo: Optional[AffineGeo] = None,
    min_area: int = DEFAULT_MIN_AREA,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> List[Detection]:
    """Detections of a whole-map mask, treated as a single region."""

    region = Region(region_id=0, tiles=frozenset(), mosaic=mask, offset=(0, 0))
    return extract_detections([region], geo, min_area, connectivity)
