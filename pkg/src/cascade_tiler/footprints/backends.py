from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
    Union,
)

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured, ValidationError
from scipy import ndimage

from .enums import BackendKind, TileLabel
from .exceptions import BackendError, ExternalBackendError
from .pyramid import TileRect, TileRef, TileSize
from .raster import BinaryMask, Raster, load_mask, save_png

DEFAULT_THRESHOLD = 0.5
DEFAULT_DARK_LEVEL = 128
DEFAULT_RHO = 0.002
# Exponent of the response-to-confidence curve; confidence is 0.5 at response == rho.
HATCH_STEEPNESS = 3
CLOSING_KERNEL = np.ones((3, 3), dtype=bool)
# Tile area at which DEFAULT_RHO applies unscaled.
RHO_REFERENCE_AREA = 256 * 256

TileLoader = Callable[[TileRef], Raster]
T = TypeVar("T")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Verdict:
    label: TileLabel
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"Confidence {self.confidence} must lie in [0, 1].")

    @classmethod
    def from_confidence(cls, confidence: float, threshold: float = DEFAULT_THRESHOLD) -> "Verdict":
        label = TileLabel.BUILDINGS if confidence >= threshold else TileLabel.NO_BUILDINGS
        return cls(label=label, confidence=float(confidence))

    @property
    def is_positive(self) -> bool:
        return self.label == TileLabel.BUILDINGS


@dataclass(frozen=True)
class ErrorModel:
    """
    Injected oracle mistakes. Positive tiles are missed with probability
    fn_base, plus edge_penalty when building pixels make up less than
    frac_floor of the tile; negative tiles pass with probability fp_rate.
    """

    fp_rate: float = 0.0
    fn_base: float = 0.0
    edge_penalty: float = 0.0
    frac_floor: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("fp_rate", "fn_base", "edge_penalty", "frac_floor"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"Error model {name}={value} must lie in [0, 1].")
        if self.seed < 0:
            raise ValidationError("Error model seed must be non-negative.")

    @property
    def is_zero(self) -> bool:
        return self.fp_rate == 0 and self.fn_base == 0 and self.edge_penalty == 0

    def pass_probability(self, building_pixels: int, tile_pixels: int) -> float:
        if building_pixels <= 0:
            return self.fp_rate
        miss = self.fn_base
        if building_pixels / tile_pixels < self.frac_floor:
            miss += self.edge_penalty
        return 1.0 - min(max(miss, 0.0), 1.0)

    def draw(self, tile: TileRef) -> float:
        """Uniform draw fixed by (seed, level, row, col), whatever the traversal order."""

        sequence = np.random.SeedSequence([self.seed, tile.level, tile.row, tile.col])
        return float(np.random.Generator(np.random.PCG64(sequence)).random())


ZERO_ERRORS = ErrorModel()


def _truth_bits(truth: Any) -> np.ndarray:
    mask = getattr(truth, "truth_mask", truth)
    if not isinstance(mask, BinaryMask):
        raise ImproperlyConfigured("Oracle backends need a ground-truth mask.")
    return mask.bits


def _truth_window(bits: np.ndarray, rect: TileRect) -> np.ndarray:
    """Truth bits for ``rect``; pixels outside the map read as empty."""

    height, width = bits.shape
    out = np.zeros((rect.h, rect.w), dtype=bool)
    inside = rect.clip(width, height)
    if inside is not None:
        out[
            inside.y0 - rect.y0 : inside.y1 - rect.y0,
            inside.x0 - rect.x0 : inside.x1 - rect.x0,
        ] = bits[inside.y0 : inside.y1, inside.x0 : inside.x1]
    return out


def hatch_support(pixels: np.ndarray, dark_level: int = DEFAULT_DARK_LEVEL) -> np.ndarray:
    """
    Per-pixel cross-hatch indicator: dark, with a dark pixel within two steps
    both horizontally and vertically. Outside the array counts as paper.
    """
    dark = np.asarray(pixels) < dark_level
    height, width = dark.shape
    padded = np.pad(dark, 2, mode="constant", constant_values=False)

    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[2 + dy : 2 + dy + height, 2 + dx : 2 + dx + width]

    horizontal = shifted(0, -2) | shifted(0, -1) | shifted(0, 1) | shifted(0, 2)
    vertical = shifted(-2, 0) | shifted(-1, 0) | shifted(1, 0) | shifted(2, 0)
    return dark & horizontal & vertical


def hatch_response(tile: Raster, dark_level: int = DEFAULT_DARK_LEVEL) -> float:
    """Fraction of interior pixels (two or more from the edge) showing hatch support."""

    if tile.width < 5 or tile.height < 5:
        return 0.0
    support = hatch_support(tile.pixels, dark_level)[2:-2, 2:-2]
    return float(np.count_nonzero(support)) / support.size


def rho_for_tile(tile_size: Optional[TileSize]) -> float:
    """
    Default rho for a tile size: DEFAULT_RHO up to 256x256, scaled down by
    area above that.
    """
    if tile_size is None:
        return DEFAULT_RHO
    return DEFAULT_RHO * min(1.0, RHO_REFERENCE_AREA / (tile_size[0] * tile_size[1]))


def _run_batch(
    refs: Sequence[TileRef],
    work: Callable[[TileRef], T],
    workers: int,
    action: str,
) -> List[T]:
    def guarded(ref: TileRef) -> T:
        try:
            return work(ref)
        except BackendError:
            raise
        except Exception as exc:
            raise BackendError(f"{action} failed on tile {ref.tile_id}: {exc}") from exc

    if workers <= 1 or len(refs) <= 1:
        return [guarded(ref) for ref in refs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, refs))


class Classifier:
    """Tile classifier contract. Subclasses implement ``score``."""

    kind: BackendKind
    needs_pixels = True

    def __init__(self, *, tile_size: Optional[TileSize] = None, context_px: int = 0):
        self.tile_size = tile_size
        self.context_px = int(context_px)

    def expected_shape(self) -> Optional[TileSize]:
        if self.tile_size is None:
            return None
        return (self.tile_size[0] + 2 * self.context_px, self.tile_size[1] + 2 * self.context_px)

    def _check(self, tile: Optional[Raster], ref: TileRef) -> None:
        expected = self.expected_shape()
        if tile is None or expected is None:
            return
        if (tile.width, tile.height) != expected:
            raise BackendError(
                f"{self.kind} classifier expects {expected[0]}x{expected[1]} tiles, "
                f"got {tile.width}x{tile.height} for {ref.tile_id}."
            )

    def score(self, tile: Optional[Raster], ref: TileRef) -> float:
        raise NotImplementedError

    def classify(
        self,
        tile: Optional[Raster],
        ref: TileRef,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> Verdict:
        self._check(tile, ref)
        return Verdict.from_confidence(self.score(tile, ref), threshold)

    def classify_batch(
        self,
        refs: Sequence[TileRef],
        loader: TileLoader,
        threshold: float = DEFAULT_THRESHOLD,
        workers: int = 1,
    ) -> List[Verdict]:
        def work(ref: TileRef) -> Verdict:
            tile = loader(ref) if self.needs_pixels else None
            return self.classify(tile, ref, threshold)

        return _run_batch(refs, work, workers, f"{self.kind} classification")


class Segmenter:
    """Tile segmenter contract. Subclasses implement ``segment``."""

    kind: BackendKind
    needs_pixels = True

    def __init__(self, *, tile_size: Optional[TileSize] = None):
        self.tile_size = tile_size

    def _check(self, tile: Optional[Raster], ref: TileRef) -> None:
        if tile is None or self.tile_size is None:
            return
        if (tile.width, tile.height) != tuple(self.tile_size):
            raise BackendError(
                f"{self.kind} segmenter expects {self.tile_size[0]}x{self.tile_size[1]} tiles, "
                f"got {tile.width}x{tile.height} for {ref.tile_id}."
            )

    def segment(self, tile: Optional[Raster], ref: TileRef) -> BinaryMask:
        raise NotImplementedError

    def segment_batch(
        self,
        refs: Sequence[TileRef],
        loader: TileLoader,
        workers: int = 1,
    ) -> List[BinaryMask]:
        def work(ref: TileRef) -> BinaryMask:
            tile = loader(ref) if self.needs_pixels else None
            self._check(tile, ref)
            mask = self.segment(tile, ref)
            if (mask.width, mask.height) != (ref.rect.w, ref.rect.h):
                raise BackendError(
                    f"Mask for {ref.tile_id} is {mask.width}x{mask.height}, "
                    f"expected {ref.rect.w}x{ref.rect.h}."
                )
            return mask

        return _run_batch(refs, work, workers, f"{self.kind} segmentation")


class HeuristicClassifier(Classifier):
    """
    Buildings iff the hatch response r reaches rho. Confidence is
    q / (1 + q) with q = (r / rho) ** HATCH_STEEPNESS, so a tile holding one
    whole hatched building scores well above the threshold.
    """

    kind = BackendKind.HEURISTIC

    def __init__(self, *, rho: float = DEFAULT_RHO, dark_level: int = DEFAULT_DARK_LEVEL, **kwargs):
        super().__init__(**kwargs)
        if rho <= 0:
            raise ValidationError("Heuristic rho must be positive.")
        self.rho = float(rho)
        self.dark_level = int(dark_level)

    def score(self, tile: Optional[Raster], ref: TileRef) -> float:
        response = hatch_response(tile, self.dark_level)
        if response <= 0:
            return 0.0
        ratio = (response / self.rho) ** HATCH_STEEPNESS
        return ratio / (1.0 + ratio)


class HeuristicSegmenter(Segmenter):
    """Hatch support per pixel followed by a 3x3 closing."""

    kind = BackendKind.HEURISTIC

    def __init__(self, *, dark_level: int = DEFAULT_DARK_LEVEL, **kwargs):
        super().__init__(**kwargs)
        self.dark_level = int(dark_level)

    def segment(self, tile: Optional[Raster], ref: TileRef) -> BinaryMask:
        support = hatch_support(tile.pixels, self.dark_level)
        if not support.any():
            return BinaryMask(support)
        # Edge replication keeps the closing from eating the tile border.
        padded = np.pad(support, 1, mode="edge")
        closed = ndimage.binary_closing(padded, structure=CLOSING_KERNEL)
        return BinaryMask(closed[1:-1, 1:-1])


class OracleClassifier(Classifier):
    """Ground-truth verdicts with optional, per-tile reproducible mistakes."""

    kind = BackendKind.ORACLE
    needs_pixels = False

    def __init__(self, truth: Any, *, error_model: ErrorModel = ZERO_ERRORS, **kwargs):
        super().__init__(**kwargs)
        self.bits = _truth_bits(truth)
        self.error_model = error_model

    def score(self, tile: Optional[Raster], ref: TileRef) -> float:
        rect = ref.rect.grow(self.context_px) if self.context_px else ref.rect
        building_pixels = int(np.count_nonzero(_truth_window(self.bits, rect)))
        probability = self.error_model.pass_probability(building_pixels, rect.area)
        if probability >= 1.0:
            return 1.0
        if probability <= 0.0:
            return 0.0
        return 1.0 if self.error_model.draw(ref) < probability else 0.0


class OracleSegmenter(Segmenter):
    kind = BackendKind.ORACLE
    needs_pixels = False

    def __init__(self, truth: Any, **kwargs):
        super().__init__(**kwargs)
        self.bits = _truth_bits(truth)

    def segment(self, tile: Optional[Raster], ref: TileRef) -> BinaryMask:
        return BinaryMask(_truth_window(self.bits, ref.rect))


class AlwaysPositiveClassifier(Classifier):
    """Passes every tile; turns the cascade into plain tiled segmentation."""

    kind = BackendKind.ALWAYS
    needs_pixels = False

    def score(self, tile: Optional[Raster], ref: TileRef) -> float:
        return 1.0


def oracle_classify(
    tile: TileRef,
    truth: Any,
    em: ErrorModel = ZERO_ERRORS,
    threshold: float = DEFAULT_THRESHOLD,
) -> Verdict:
    return OracleClassifier(truth, error_model=em).classify(None, tile, threshold)


class _ExternalProcess:
    """
    File-exchange batch protocol: ``cmd <manifest> <response>``. The manifest
    lists ``tile_id<TAB>png_path``; a nonzero exit is fatal.
    """

    def __init__(self, command: Union[str, Sequence[str]], *, timeout: Optional[int] = None):
        if not command:
            raise ImproperlyConfigured("External backend command is missing.")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout or getattr(settings, "CASCADE_EXTERNAL_TIMEOUT", 3600)
        self._lock = threading.Lock()

    @contextmanager
    def batch_dir(self, prefix: str) -> Iterator[Path]:
        """Scratch directory for one exchange; batches on one process run one at a time."""

        with self._lock, tempfile.TemporaryDirectory(prefix=prefix) as tmp:
            yield Path(tmp)

    def exchange(
        self,
        refs: Sequence[TileRef],
        loader: TileLoader,
        workdir: Path,
    ) -> List[List[str]]:
        manifest = workdir / "manifest.tsv"
        response = workdir / "response.tsv"
        lines = []
        for ref in refs:
            png_path = save_png(loader(ref), workdir / "tiles" / f"{ref.tile_id}.png")
            lines.append(f"{ref.tile_id}\t{png_path}\n")
        manifest.write_text("".join(lines))
        logger.info("External backend batch of %s tiles: %s", len(refs), " ".join(self.command))
        try:
            completed = subprocess.run(
                [*self.command, str(manifest), str(response)],
                capture_output=True,
                text=True,
                timeout=self.timeout,
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExternalBackendError(f"External backend could not run: {exc}") from exc
        if completed.returncode != 0:
            raise ExternalBackendError(
                f"External backend exited with status {completed.returncode}: "
                f"{completed.stderr.strip() or completed.stdout.strip()}"
            )
        if not response.exists():
            raise ExternalBackendError(f"External backend wrote no response file at {response}.")
        return [line.split("\t") for line in response.read_text().splitlines() if line.strip()]


def _index_rows(
    rows: List[List[str]],
    refs: Sequence[TileRef],
    width: int,
) -> Dict[str, List[str]]:
    by_id: Dict[str, List[str]] = {}
    for number, fields in enumerate(rows, start=1):
        if len(fields) != width:
            raise ExternalBackendError(
                f"Malformed response line {number}: expected {width} tab-separated fields, "
                f"got {len(fields)}."
            )
        by_id[fields[0].strip()] = [value.strip() for value in fields[1:]]
    for ref in refs:
        if ref.tile_id not in by_id:
            raise ExternalBackendError(
                f"External backend returned no response for tile {ref.tile_id}."
            )
    return by_id


class ExternalClassifier(Classifier):
    """Response lines are ``tile_id<TAB>label<TAB>confidence`` with label 1 or 0."""

    kind = BackendKind.EXTERNAL

    def __init__(
        self,
        command: Union[str, Sequence[str]],
        *,
        timeout: Optional[int] = None,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.process = _ExternalProcess(command, timeout=timeout)

    def classify_batch(
        self,
        refs: Sequence[TileRef],
        loader: TileLoader,
        threshold: float = DEFAULT_THRESHOLD,
        workers: int = 1,
    ) -> List[Verdict]:
        if not refs:
            return []

        def checked_loader(ref: TileRef) -> Raster:
            tile = loader(ref)
            self._check(tile, ref)
            return tile

        with self.process.batch_dir("cascade-cls-") as workdir:
            rows = self.process.exchange(refs, checked_loader, workdir)
        by_id = _index_rows(rows, refs, 3)
        verdicts = []
        for ref in refs:
            label_text, confidence_text = by_id[ref.tile_id]
            if label_text not in ("0", "1"):
                raise ExternalBackendError(
                    f"Tile {ref.tile_id}: label must be 1 or 0, got '{label_text}'."
                )
            try:
                confidence = float(confidence_text)
            except ValueError as exc:
                raise ExternalBackendError(
                    f"Tile {ref.tile_id}: confidence '{confidence_text}' is not a number."
                ) from exc
            if not 0.0 <= confidence <= 1.0:
                raise ExternalBackendError(
                    f"Tile {ref.tile_id}: confidence {confidence} outside [0, 1]."
                )
            verdict = Verdict.from_confidence(confidence, threshold)
            if verdict.is_positive != (label_text == "1"):
                logger.warning(
                    "External label %s for %s disagrees with confidence %s at threshold %s",
                    label_text,
                    ref.tile_id,
                    confidence,
                    threshold,
                )
            verdicts.append(verdict)
        return verdicts

    def score(self, tile: Optional[Raster], ref: TileRef) -> float:
        verdict = self.classify_batch([ref], lambda _ref: tile)[0]
        return verdict.confidence


class ExternalSegmenter(Segmenter):
    """
    Response lines are ``tile_id<TAB>mask_png_path``. Relative paths resolve
    next to the response file.
    """

    kind = BackendKind.EXTERNAL

    def __init__(
        self,
        command: Union[str, Sequence[str]],
        *,
        timeout: Optional[int] = None,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.process = _ExternalProcess(command, timeout=timeout)

    def segment_batch(
        self,
        refs: Sequence[TileRef],
        loader: TileLoader,
        workers: int = 1,
    ) -> List[BinaryMask]:
        if not refs:
            return []

        def checked_loader(ref: TileRef) -> Raster:
            tile = loader(ref)
            self._check(tile, ref)
            return tile

        masks = []
        with self.process.batch_dir("cascade-seg-") as workdir:
            by_id = _index_rows(self.process.exchange(refs, checked_loader, workdir), refs, 2)
            for ref in refs:
                mask_path = Path(by_id[ref.tile_id][0])
                if not mask_path.is_absolute():
                    mask_path = workdir / mask_path
                mask = load_mask(mask_path)
                if (mask.width, mask.height) != (ref.rect.w, ref.rect.h):
                    raise ExternalBackendError(
                        f"Mask for {ref.tile_id} is {mask.width}x{mask.height}, "
                        f"expected {ref.rect.w}x{ref.rect.h}."
                    )
                masks.append(mask)
        return masks

    def segment(self, tile: Optional[Raster], ref: TileRef) -> BinaryMask:
        return self.segment_batch([ref], lambda _ref: tile)[0]


def _error_model(spec: Mapping[str, Any]) -> ErrorModel:
    return ErrorModel(**dict(spec.get("error_model") or {}))


def build_classifier(
    spec: Mapping[str, Any],
    *,
    tile_size: Optional[TileSize] = None,
    truth: Any = None,
) -> Classifier:
    """Instantiate a classifier from its config entry (``{"kind": ..., ...}``)."""

    kind = BackendKind(spec.get("kind", BackendKind.HEURISTIC))
    context_px = int(spec.get("context_px", 0))
    common: Dict[str, Any] = {"tile_size": tile_size, "context_px": context_px}
    if kind == BackendKind.HEURISTIC:
        return HeuristicClassifier(
            rho=float(spec.get("rho", rho_for_tile(tile_size))),
            dark_level=int(spec.get("dark_level", DEFAULT_DARK_LEVEL)),
            **common,
        )
    if kind == BackendKind.ORACLE:
        if truth is None:
            raise ImproperlyConfigured(
                "The oracle classifier needs a truth mask (config 'truth_mask')."
            )
        return OracleClassifier(truth, error_model=_error_model(spec), **common)
    if kind == BackendKind.EXTERNAL:
        return ExternalClassifier(spec.get("command"), timeout=spec.get("timeout"), **common)
    return AlwaysPositiveClassifier(**common)


def build_segmenter(
    spec: Mapping[str, Any],
    *,
    tile_size: Optional[TileSize] = None,
    truth: Any = None,
) -> Segmenter:
    kind = BackendKind(spec.get("kind", BackendKind.HEURISTIC))
    if kind == BackendKind.HEURISTIC:
        return HeuristicSegmenter(
            dark_level=int(spec.get("dark_level", DEFAULT_DARK_LEVEL)),
            tile_size=tile_size,
        )
    if kind == BackendKind.ORACLE:
        if truth is None:
            raise ImproperlyConfigured(
                "The oracle segmenter needs a truth mask (config 'truth_mask')."
            )
        return OracleSegmenter(truth, tile_size=tile_size)
    if kind == BackendKind.EXTERNAL:
        return ExternalSegmenter(
            spec.get("command"), timeout=spec.get("timeout"), tile_size=tile_size
        )
    raise ImproperlyConfigured(f"'{kind}' is not a segmenter kind.")
