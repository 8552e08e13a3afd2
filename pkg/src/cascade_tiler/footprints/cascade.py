from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from django.core.exceptions import ValidationError

from .backends import (
    DEFAULT_THRESHOLD,
    ZERO_ERRORS,
    Classifier,
    ErrorModel,
    OracleClassifier,
    OracleSegmenter,
    Segmenter,
)
from .costmodel import CostParams, estimate_params, estimate_R, normalized_time
from .evaluation import match
from .exceptions import DomainError
from .pyramid import (
    LevelSchedule,
    TileRef,
    TileSize,
    extract,
    grid_index,
    level_tiles,
    subdivide,
    tile_grid,
)
from .raster import WHITE, BinaryMask, Raster
from .stitch import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_MIN_AREA,
    Detection,
    Region,
    extract_detections,
    grow_regions,
)

# The last classified level leans towards passing tiles.
LAST_LEVEL_THRESHOLD = 0.35
# Positive verdicts closer than this to the threshold count as low confidence.
LOW_CONFIDENCE_BAND = 0.1

Masks = Dict[TileRef, BinaryMask]

logger = logging.getLogger(__name__)


def default_thresholds(depth: int) -> Tuple[float, ...]:
    if depth == 0:
        return ()
    return (DEFAULT_THRESHOLD,) * (depth - 1) + (LAST_LEVEL_THRESHOLD,)


@dataclass(frozen=True)
class CascadeConfig:
    """One classifier and threshold per classified level, one segmenter."""

    schedule: LevelSchedule
    classifiers: Tuple[Classifier, ...]
    segmenter: Segmenter
    thresholds: Tuple[float, ...] = ()
    pad_value: int = WHITE
    workers: int = 1
    connectivity: int = DEFAULT_CONNECTIVITY
    min_area: int = DEFAULT_MIN_AREA

    def __post_init__(self):
        depth = self.schedule.depth
        classifiers = tuple(self.classifiers)
        if len(classifiers) != depth:
            raise ValidationError(
                f"Schedule classifies {depth} levels but {len(classifiers)} classifiers were given."
            )
        thresholds = tuple(float(t) for t in self.thresholds) or default_thresholds(depth)
        if len(thresholds) != depth:
            raise ValidationError(f"Expected {depth} thresholds, got {len(thresholds)}.")
        if any(not 0.0 <= t <= 1.0 for t in thresholds):
            raise ValidationError("Thresholds must lie in [0, 1].")
        if not 0 <= self.pad_value <= 255:
            raise ValidationError(f"Pad value {self.pad_value} is not an 8-bit intensity.")
        if self.workers < 1:
            raise ValidationError("At least one worker is needed.")
        if self.connectivity not in (4, 8):
            raise ValidationError("Connectivity must be 4 or 8.")
        if self.min_area < 0:
            raise ValidationError("min_area must be non-negative.")
        object.__setattr__(self, "classifiers", classifiers)
        object.__setattr__(self, "thresholds", thresholds)


@dataclass
class LevelStats:
    level: int
    tile_w: int
    tile_h: int
    tiles_in: int = 0
    tiles_passed: int = 0
    low_confidence: int = 0
    wall_ms: float = 0.0

    @property
    def pass_fraction(self) -> float:
        return self.tiles_passed / self.tiles_in if self.tiles_in else 0.0

    def to_dict(self, record_timings: bool = True) -> Dict[str, Any]:
        return {
            "level": self.level,
            "tile_w": self.tile_w,
            "tile_h": self.tile_h,
            "tiles_in": self.tiles_in,
            "tiles_passed": self.tiles_passed,
            "pass_fraction": self.pass_fraction,
            "low_confidence": self.low_confidence,
            "wall_ms": self.wall_ms if record_timings else None,
        }


@dataclass
class RunStats:
    segment_tile_w: int
    segment_tile_h: int
    levels: List[LevelStats] = field(default_factory=list)
    segmenter_calls: int = 0
    segment_wall_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return sum(level.wall_ms for level in self.levels) + self.segment_wall_ms

    def estimated_params(self) -> Optional[CostParams]:
        try:
            return estimate_params(self)
        except DomainError:
            return None

    def to_dict(self, record_timings: bool = True) -> Dict[str, Any]:
        params = self.estimated_params() if record_timings else None
        return {
            "levels": [level.to_dict(record_timings) for level in self.levels],
            "segment_tile_w": self.segment_tile_w,
            "segment_tile_h": self.segment_tile_h,
            "segmenter_calls": self.segmenter_calls,
            "segment_wall_ms": self.segment_wall_ms if record_timings else None,
            "estimated_R": estimate_R(self),
            "estimated_A": params.A if params else None,
        }


class CascadeResult(NamedTuple):
    masks: Masks
    stats: RunStats


class PipelineResult(NamedTuple):
    masks: Masks
    stats: RunStats
    regions: List[Region]
    detections: List[Detection]


def _loader(map_raster: Raster, pad_value: int, context_px: int = 0):
    def load(tile: TileRef) -> Raster:
        return extract(map_raster, tile, pad_value, context_px=context_px)

    return load


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def run_cascade(map_raster: Raster, cfg: CascadeConfig) -> CascadeResult:
    """
    Classify and filter level by level, then segment the surviving
    final-level tiles. Rejected tiles are never subdivided, and every tile
    list keeps grid order so results do not depend on the worker count.
    """
    schedule = cfg.schedule
    bounds = (map_raster.width, map_raster.height)
    segment_w, segment_h = schedule.segment_size
    stats = RunStats(segment_tile_w=segment_w, segment_tile_h=segment_h)

    survivors: List[TileRef] = tile_grid(map_raster.width, map_raster.height, *schedule.levels[0])
    for index, size in enumerate(schedule.levels):
        if index:
            survivors = [
                child for parent in survivors for child in subdivide(parent, size, bounds=bounds)
            ]
        if index >= schedule.depth:
            continue
        classifier = cfg.classifiers[index]
        threshold = cfg.thresholds[index]
        level = LevelStats(level=index + 1, tile_w=size[0], tile_h=size[1], tiles_in=len(survivors))
        start = time.perf_counter()
        verdicts = classifier.classify_batch(
            survivors,
            _loader(map_raster, cfg.pad_value, classifier.context_px),
            threshold,
            cfg.workers,
        )
        level.wall_ms = _elapsed_ms(start)
        passed = [tile for tile, verdict in zip(survivors, verdicts) if verdict.is_positive]
        level.tiles_passed = len(passed)
        level.low_confidence = sum(
            1
            for verdict in verdicts
            if verdict.is_positive and verdict.confidence < threshold + LOW_CONFIDENCE_BAND
        )
        stats.levels.append(level)
        logger.info(
            "Level %s (%sx%s): %s of %s tiles passed at threshold %s",
            level.level,
            size[0],
            size[1],
            level.tiles_passed,
            level.tiles_in,
            threshold,
        )
        survivors = passed

    start = time.perf_counter()
    masks = cfg.segmenter.segment_batch(survivors, _loader(map_raster, cfg.pad_value), cfg.workers)
    stats.segment_wall_ms = _elapsed_ms(start)
    stats.segmenter_calls = len(survivors)
    logger.info("Segmented %s tiles of %sx%s", len(survivors), segment_w, segment_h)
    return CascadeResult(dict(zip(survivors, masks)), stats)


def segment_everything(
    map_raster: Raster,
    tile_dims: TileSize,
    segmenter: Segmenter,
    *,
    level: int = 1,
    pad_value: int = WHITE,
    workers: int = 1,
) -> Masks:
    """Segment every tile of the grid; the unfiltered baseline."""

    tiles = tile_grid(map_raster.width, map_raster.height, *tile_dims, level=level)
    masks = segmenter.segment_batch(tiles, _loader(map_raster, pad_value), workers)
    return dict(zip(tiles, masks))


def stitch_masks(
    map_raster: Raster, masks: Masks, cfg: CascadeConfig
) -> Tuple[List[Region], List[Detection]]:
    """Regions and detections for masks keyed by final-level tiles of ``cfg.schedule``."""

    final_tiles = level_tiles(map_raster.width, map_raster.height, cfg.schedule)[-1]
    bounds = (map_raster.width, map_raster.height)
    regions = grow_regions(masks, grid_index(final_tiles), bounds=bounds)
    detections = extract_detections(regions, map_raster.geo, cfg.min_area, cfg.connectivity)
    return regions, detections


def run_pipeline(map_raster: Raster, cfg: CascadeConfig) -> PipelineResult:
    masks, stats = run_cascade(map_raster, cfg)
    regions, detections = stitch_masks(map_raster, masks, cfg)
    logger.info("Found %s detections in %s regions", len(detections), len(regions))
    return PipelineResult(masks, stats, regions, detections)


@dataclass(frozen=True)
class SweepRow:
    n: int
    schedule: str
    predicted_time: float
    measured_ms: float
    measured_normalized: Optional[float]
    f1: float
    precision: float
    recall: float
    pass_fraction: Optional[float]
    segmenter_calls: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "schedule": self.schedule,
            "predicted_time": self.predicted_time,
            "measured_ms": self.measured_ms,
            "measured_normalized": self.measured_normalized,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "pass_fraction": self.pass_fraction,
            "segmenter_calls": self.segmenter_calls,
        }


def tradeoff_sweep(
    map_raster: Raster,
    truth: Any,
    schedules: Sequence[LevelSchedule],
    em: ErrorModel = ZERO_ERRORS,
    *,
    segmenter: Optional[Segmenter] = None,
    cost: Optional[CostParams] = None,
    radius: float = 15.0,
    min_area: int = 0,
    connectivity: int = DEFAULT_CONNECTIVITY,
    exact_first_level: bool = True,
    use_measured_r: bool = False,
    workers: int = 1,
) -> List[SweepRow]:
    """
    Run oracle-classified pipelines at every schedule and score them against
    ``truth``. The first level is exact unless ``exact_first_level`` is off;
    ``em`` applies to the refinement levels. Predicted time uses ``cost``
    (R = 0.4, A = 5 when omitted), or the measured level-1 R on request.
    """
    cost = cost or CostParams(R=0.4, A=5.0)
    first_em = ZERO_ERRORS if exact_first_level else em
    segmenter = segmenter or OracleSegmenter(truth)
    rows: List[SweepRow] = []
    baseline_ms: Optional[float] = None
    for schedule in schedules:
        classifiers = tuple(
            OracleClassifier(truth, error_model=first_em if index == 0 else em)
            for index in range(schedule.depth)
        )
        cfg = CascadeConfig(
            schedule=schedule,
            classifiers=classifiers,
            segmenter=segmenter,
            workers=workers,
            connectivity=connectivity,
            min_area=min_area,
        )
        result = run_pipeline(map_raster, cfg)
        scored = match(result.detections, truth.centroids, radius)
        level_one = estimate_R(result.stats)
        R = level_one if use_measured_r and level_one is not None else cost.R
        measured_ms = result.stats.total_ms
        if schedule.depth == 0:
            baseline_ms = measured_ms
        rows.append(
            SweepRow(
                n=schedule.depth,
                schedule=schedule.describe(),
                predicted_time=normalized_time(schedule.depth, R, cost.A),
                measured_ms=measured_ms,
                measured_normalized=measured_ms / baseline_ms if baseline_ms else None,
                f1=scored.f1,
                precision=scored.precision,
                recall=scored.recall,
                pass_fraction=level_one,
                segmenter_calls=result.stats.segmenter_calls,
            )
        )
        logger.info("Sweep %s: F1 %s", schedule.describe(), scored.f1)
    return rows
