from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .exceptions import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    """
    Normalized cost model parameters. Segmentation time per pixel is 1 and
    classification time per pixel is 1 / A, so t_s = A * t_c.
    """

    R: float
    A: float
    level_pass_fractions: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        _check_domain(self.R, self.A)

    @property
    def t_c(self) -> float:
        return 1.0 / self.A

    @property
    def t_s(self) -> float:
        return 1.0


def _check_domain(R: float, A: float) -> None:
    if not (0.0 <= R <= 1.0) or math.isnan(R):
        raise DomainError(f"Pass fraction R={R} must lie in [0, 1].")
    if not A > 0 or math.isinf(A):
        raise DomainError(f"Cost ratio A={A} must be a positive finite number.")


def normalized_time(n: int, R: float, A: float) -> float:
    """T(n) = sum_{i<n} R^i / A + R^n. T(0) is 1 for every valid R and A."""

    if n < 0:
        raise DomainError(f"Pipeline depth n={n} must be non-negative.")
    _check_domain(R, A)
    classification = math.fsum(R**i for i in range(n)) / A
    return classification + R**n


def break_even_limit(A: float) -> float:
    if not A > 0:
        raise DomainError(f"Cost ratio A={A} must be positive.")
    return 1.0 - 1.0 / A


def is_beneficial(R: float, A: float) -> bool:
    """True iff R < 1 - 1/A, i.e. every extra classification level saves time."""

    _check_domain(R, A)
    # R*A < A - 1 is the same inequality without the rounding of 1/A.
    return R * A < A - 1


def asymptotic_time(R: float, A: float) -> float:
    _check_domain(R, A)
    if R >= 1.0:
        raise DomainError("The series diverges for R >= 1.")
    return 1.0 / (A * (1.0 - R))


def cost_table(R: float, A: float, n_max: int) -> List[Dict[str, Any]]:
    """Rows of (n, T(n), beneficial) for n = 0..n_max."""

    beneficial = is_beneficial(R, A)
    return [
        {"n": n, "normalized_time": normalized_time(n, R, A), "beneficial": beneficial}
        for n in range(n_max + 1)
    ]


def project_hours(
    tile_count: int,
    seconds_per_tile: float,
    n: int,
    R: float,
    A: float,
) -> float:
    """
    Wall time in hours for ``tile_count`` segmentation tiles taking
    ``seconds_per_tile`` each when segmented outright, scaled by T(n).
    """
    if tile_count < 0 or seconds_per_tile < 0:
        raise DomainError("Tile count and seconds per tile must be non-negative.")
    return tile_count * seconds_per_tile * normalized_time(n, R, A) / 3600.0


def estimate_params(stats: Any) -> CostParams:
    """
    Measured R and A from a cascade run. R is the first level's pass fraction;
    A is segmentation time per pixel over classification time per pixel.

    Raises
    ------
    DomainError
        When the first level saw no tiles, or a needed timing is zero.
    """
    R = estimate_R(stats)
    if R is None:
        raise DomainError("Level 1 saw no tiles; R is undefined.")

    classified_pixels = sum(level.tiles_in * level.tile_w * level.tile_h for level in stats.levels)
    classify_ms = sum(level.wall_ms for level in stats.levels)
    segmented_pixels = stats.segmenter_calls * stats.segment_tile_w * stats.segment_tile_h
    if classify_ms <= 0 or stats.segment_wall_ms <= 0 or segmented_pixels == 0:
        raise DomainError("A needs non-zero classification and segmentation timings.")
    A = (stats.segment_wall_ms / segmented_pixels) / (classify_ms / classified_pixels)
    fractions = tuple(level.pass_fraction for level in stats.levels)
    logger.info("Estimated R=%s A=%s (per-level pass fractions %s)", R, A, fractions)
    return CostParams(R=R, A=A, level_pass_fractions=fractions)


def estimate_R(stats: Any) -> Optional[float]:
    """Level-1 pass fraction, or None when nothing was classified."""

    if not stats.levels or stats.levels[0].tiles_in == 0:
        return None
    return stats.levels[0].tiles_passed / stats.levels[0].tiles_in
