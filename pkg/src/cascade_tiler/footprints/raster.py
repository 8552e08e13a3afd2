from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError
from PIL import Image, UnidentifiedImageError

from .enums import DihedralTransform
from .exceptions import RasterDecodeError

PathLike = Union[str, Path]

WHITE = 255
BLACK = 0

# Fixed output order of augment_set; compositions apply left to right.
AUGMENTATION_RECIPE: Tuple[Tuple[DihedralTransform, ...], ...] = (
    (DihedralTransform.IDENTITY,),
    (DihedralTransform.HFLIP,),
    (DihedralTransform.VFLIP,),
    (DihedralTransform.ROT180,),
    (DihedralTransform.HFLIP, DihedralTransform.ROT180),
    (DihedralTransform.VFLIP, DihedralTransform.ROT180),
)

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, order="C", copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class AffineGeo:
    """North-up affine: world = origin + pixel * px_size, per axis."""

    origin_x: float
    origin_y: float
    px_size_x: float
    px_size_y: float

    def __post_init__(self):
        if self.px_size_x == 0 or self.px_size_y == 0:
            raise ValidationError("Affine pixel sizes must be non-zero.")


@dataclass(frozen=True, eq=False)
class Raster:
    """Immutable 8-bit grayscale image, 0 = black ink, 255 = white paper."""

    pixels: np.ndarray
    geo: Optional[AffineGeo] = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise ValidationError(f"Raster pixels must be 2-D, got {pixels.ndim}-D.")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValidationError("Raster width and height must be at least 1.")
        if pixels.dtype != np.uint8:
            pixels = pixels.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(pixels))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def blank(cls, width: int, height: int, value: int = WHITE, geo: Optional[AffineGeo] = None):
        return cls(np.full((height, width), value, dtype=np.uint8), geo=geo)

    def same_pixels(self, other: "Raster") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel building flags for a raster region."""

    bits: np.ndarray
    count: int = field(init=False)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValidationError(f"Mask bits must be 2-D, got {bits.ndim}-D.")
        object.__setattr__(self, "bits", _frozen(bits))
        object.__setattr__(self, "count", int(np.count_nonzero(bits)))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    def same_bits(self, other: "BinaryMask") -> bool:
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))


def _decode(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as image:
            image.load()
            mode = image.mode
            if mode == "1":
                image = image.convert("L")
                mode = "L"
            if mode in ("L", "LA", "I;16", "I", "F"):
                array = np.asarray(image.getchannel(0) if mode == "LA" else image)
                if mode != "L" and mode != "LA":
                    array = np.clip(array, 0, 255)
                return array.astype(np.uint8)
            rgb = np.asarray(image.convert("RGB"), dtype=np.uint16)
    except FileNotFoundError as exc:
        raise RasterDecodeError(f"Image file not found: {path}") from exc
    except (
        OSError,
        EOFError,
        SyntaxError,
        struct.error,
        UnidentifiedImageError,
        ValueError,
        Image.DecompressionBombError,
    ) as exc:
        raise RasterDecodeError(f"Cannot decode image {path}: {exc}") from exc
    # Channel mean, rounded to nearest; a sum of three never lands on .5.
    return ((rgb.sum(axis=2) + 1) // 3).astype(np.uint8)


def load_png(path: PathLike, geo: Optional[AffineGeo] = None) -> Raster:
    """
    Decode a lossless image into a grayscale raster.

    Raises
    ------
    RasterDecodeError
        When the file is missing, unreadable, truncated or has a zero dimension.
    """
    pixels = _decode(path)
    if pixels.ndim != 2 or pixels.shape[0] == 0 or pixels.shape[1] == 0:
        raise RasterDecodeError(f"Image {path} has a zero dimension.")
    logger.debug("Loaded %s (%sx%s)", path, pixels.shape[1], pixels.shape[0])
    return Raster(pixels, geo=geo)


def save_png(raster: Raster, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(raster.pixels)).save(path, format="PNG")
    return path


def load_mask(path: PathLike) -> BinaryMask:
    """Masks are stored as PNG with 0 / 255; any non-zero value reads as building."""

    return BinaryMask(_decode(path) > 0)


def save_mask(mask: BinaryMask, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8)).save(path, format="PNG")
    return path


def _apply(array: np.ndarray, transform: DihedralTransform) -> np.ndarray:
    if transform == DihedralTransform.IDENTITY:
        return array
    if transform == DihedralTransform.HFLIP:
        return array[:, ::-1]
    if transform == DihedralTransform.VFLIP:
        return array[::-1, :]
    if transform == DihedralTransform.ROT180:
        return array[::-1, ::-1]
    raise ValidationError(f"Unknown dihedral transform '{transform}'.")


def dihedral(img: Raster, transform: Union[DihedralTransform, str]) -> Raster:
    """Aspect-preserving flip/rotation. Geo metadata is dropped."""

    return Raster(_apply(img.pixels, DihedralTransform(transform)))


def dihedral_mask(mask: BinaryMask, transform: Union[DihedralTransform, str]) -> BinaryMask:
    return BinaryMask(_apply(mask.bits, DihedralTransform(transform)))


def compose(img: Raster, transforms: Sequence[Union[DihedralTransform, str]]) -> Raster:
    pixels = img.pixels
    for transform in transforms:
        pixels = _apply(pixels, DihedralTransform(transform))
    return Raster(pixels)


def augmentation_names() -> List[str]:
    return ["_".join(str(step) for step in recipe) for recipe in AUGMENTATION_RECIPE]


def augment_set(img: Raster) -> List[Raster]:
    """
    The six training variants: identity, hflip, vflip, rot180, rot180 after
    hflip and rot180 after vflip. The last two repeat vflip and hflip on every
    image; they are emitted anyway to keep six variants per image.
    """
    return [compose(img, recipe) for recipe in AUGMENTATION_RECIPE]


def augment_mask_set(mask: BinaryMask) -> List[BinaryMask]:
    """Label masks transformed in step with ``augment_set``."""

    variants = []
    for recipe in AUGMENTATION_RECIPE:
        variant = mask
        for transform in recipe:
            variant = dihedral_mask(variant, transform)
        variants.append(variant)
    return variants
