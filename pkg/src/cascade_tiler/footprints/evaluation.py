from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .enums import ChangeKind
from .pyramid import TileRef
from .raster import BinaryMask
from .stitch import Detection

Point = Tuple[float, float]
PointLike = Union[Detection, Point]

DEFAULT_MATCH_RADIUS = 15.0
DEFAULT_CHANGE_RADIUS = 10.0
DEFAULT_CLUSTER_DIST = 300.0

logger = logging.getLogger(__name__)


def _pixel_points(items: Iterable[PointLike]) -> np.ndarray:
    points = [item.centroid_px if isinstance(item, Detection) else item for item in items]
    return np.asarray(points, dtype=float).reshape(-1, 2)


def _world_points(items: Sequence[Detection], epoch: str) -> np.ndarray:
    points = []
    for index, item in enumerate(items):
        if item.centroid_world is None:
            raise ValidationError(f"Detection {index} of epoch {epoch} has no world coordinates.")
        points.append(item.centroid_world)
    return np.asarray(points, dtype=float).reshape(-1, 2)


def f1(tp: int, fp: int, fn: int) -> float:
    """2tp / (2tp + fp + fn), taken as 1.0 when there is nothing to find and nothing found."""

    if min(tp, fp, fn) < 0:
        raise ValidationError("Match counts must be non-negative.")
    denominator = 2 * tp + fp + fn
    return 1.0 if denominator == 0 else 2 * tp / denominator


@dataclass(frozen=True)
class MatchPair:
    detection: int
    truth: int
    distance: float


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: Tuple[MatchPair, ...] = ()

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f1(self) -> float:
        return f1(self.tp, self.fp, self.fn)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def match(
    dets: Sequence[PointLike],
    truths: Sequence[PointLike],
    radius: float = DEFAULT_MATCH_RADIUS,
) -> MatchResult:
    """
    Greedy one-to-one matching: candidate pairs within ``radius`` are taken
    by ascending distance, ties going to the lower truth index and then the
    lower detection index.
    """
    if radius <= 0:
        raise ValidationError("Match radius must be positive.")
    det_points = _pixel_points(dets)
    truth_points = _pixel_points(truths)
    candidates: List[Tuple[float, int, int]] = []
    if len(det_points) and len(truth_points):
        near = cKDTree(truth_points).query_ball_tree(cKDTree(det_points), radius)
        for truth_index, det_indices in enumerate(near):
            for det_index in det_indices:
                distance = float(np.hypot(*(det_points[det_index] - truth_points[truth_index])))
                if distance <= radius:
                    candidates.append((distance, truth_index, det_index))
    candidates.sort()

    used_truths, used_dets = set(), set()
    pairs = []
    for distance, truth_index, det_index in candidates:
        if truth_index in used_truths or det_index in used_dets:
            continue
        used_truths.add(truth_index)
        used_dets.add(det_index)
        pairs.append(MatchPair(detection=det_index, truth=truth_index, distance=distance))
    tp = len(pairs)
    return MatchResult(
        tp=tp, fp=len(det_points) - tp, fn=len(truth_points) - tp, pairs=tuple(pairs)
    )


def dice(a: BinaryMask, b: BinaryMask) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise ValidationError(
            f"Dice needs equal mask sizes, got {a.width}x{a.height} and {b.width}x{b.height}."
        )
    total = a.count + b.count
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a.bits & b.bits)) / total


def mosaic_masks(masks: Mapping[TileRef, BinaryMask], width: int, height: int) -> BinaryMask:
    """OR of tile masks placed on a width x height canvas; padding is cut off."""

    bits = np.zeros((height, width), dtype=bool)
    for tile, mask in masks.items():
        inside = tile.rect.clip(width, height)
        if inside is None or mask.is_empty:
            continue
        w, h = inside.x1 - tile.rect.x0, inside.y1 - tile.rect.y0
        bits[tile.rect.y0 : inside.y1, tile.rect.x0 : inside.x1] |= mask.bits[:h, :w]
    return BinaryMask(bits)


def masks_identical(a: Mapping[TileRef, BinaryMask], b: Mapping[TileRef, BinaryMask]) -> bool:
    """Same tiles (by rect) with bit-identical masks."""

    by_rect_a = {tile.rect: mask for tile, mask in a.items()}
    by_rect_b = {tile.rect: mask for tile, mask in b.items()}
    if by_rect_a.keys() != by_rect_b.keys():
        return False
    return all(mask.same_bits(by_rect_b[rect]) for rect, mask in by_rect_a.items())


@dataclass(frozen=True)
class ChangeCluster:
    kind: ChangeKind
    members: Tuple[Point, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def centroid(self) -> Point:
        points = np.asarray(self.members, dtype=float)
        return (float(points[:, 0].mean()), float(points[:, 1].mean()))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": str(self.kind), "size": self.size, "centroid": list(self.centroid)}


@dataclass(frozen=True)
class ChangeReport:
    disappeared: Tuple[ChangeCluster, ...]
    appeared: Tuple[ChangeCluster, ...]
    radius: float
    cluster_dist: float

    @property
    def has_changes(self) -> bool:
        return bool(self.disappeared or self.appeared)

    @property
    def clusters(self) -> List[ChangeCluster]:
        return [*self.disappeared, *self.appeared]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "radius": self.radius,
            "cluster_dist": self.cluster_dist,
            "changes": self.has_changes,
            "disappeared": [cluster.to_dict() for cluster in self.disappeared],
            "appeared": [cluster.to_dict() for cluster in self.appeared],
        }


def _unmatched(points: np.ndarray, others: np.ndarray, radius: float) -> np.ndarray:
    if not len(points):
        return points
    if not len(others):
        return points
    near = cKDTree(others).query_ball_point(points, radius)
    keep = np.array([not hits for hits in near], dtype=bool)
    return points[keep]


def _clusters(
    points: np.ndarray, cluster_dist: float, kind: ChangeKind
) -> Tuple[ChangeCluster, ...]:
    """Single-linkage groups: points closer than ``cluster_dist`` share a cluster."""

    if not len(points):
        return ()
    pairs = np.array(sorted(cKDTree(points).query_pairs(cluster_dist)), dtype=int).reshape(-1, 2)
    graph = coo_matrix(
        (np.ones(len(pairs), dtype=bool), (pairs[:, 0], pairs[:, 1])),
        shape=(len(points), len(points)),
    )
    count, labels = connected_components(graph, directed=False)
    clusters = [
        ChangeCluster(kind, tuple(map(tuple, points[labels == label].tolist())))
        for label in range(count)
    ]
    clusters.sort(key=lambda cluster: (-cluster.size, cluster.centroid[1], cluster.centroid[0]))
    return tuple(clusters)


def change_detect(
    epoch_a: Sequence[Detection],
    epoch_b: Sequence[Detection],
    radius: Optional[float] = None,
    cluster_dist: Optional[float] = None,
) -> ChangeReport:
    """
    Buildings of epoch A with no epoch-B detection within ``radius`` have
    disappeared; the reverse have appeared. Both sets are grouped by
    single linkage at ``cluster_dist`` and listed largest first. Distances
    are in world units.
    """
    if radius is None:
        radius = getattr(settings, "CASCADE_CHANGE_RADIUS", DEFAULT_CHANGE_RADIUS)
    if cluster_dist is None:
        cluster_dist = getattr(settings, "CASCADE_CLUSTER_DIST", DEFAULT_CLUSTER_DIST)
    if radius <= 0 or cluster_dist <= 0:
        raise ValidationError("Change radius and cluster distance must be positive.")
    points_a = _world_points(epoch_a, "A")
    points_b = _world_points(epoch_b, "B")
    disappeared = _unmatched(points_a, points_b, radius)
    appeared = _unmatched(points_b, points_a, radius)
    report = ChangeReport(
        disappeared=_clusters(disappeared, cluster_dist, ChangeKind.DISAPPEARED),
        appeared=_clusters(appeared, cluster_dist, ChangeKind.APPEARED),
        radius=float(radius),
        cluster_dist=float(cluster_dist),
    )
    logger.info(
        "Change detection: %s disappeared and %s appeared clusters",
        len(report.disappeared),
        len(report.appeared),
    )
    return report
