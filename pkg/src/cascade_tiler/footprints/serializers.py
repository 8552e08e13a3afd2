"""Detection, stats and manifest files written by the management commands."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from django.core.exceptions import ImproperlyConfigured, ValidationError
from PIL import Image, ImageDraw

from . import __version__
from .pyramid import world_to_pixel
from .raster import AffineGeo, Raster
from .stitch import Detection
from .utils import sha256_file, to_decimal_text

PathLike = Union[str, Path]

CSV_HEADER = ("x", "y", "world_x", "world_y", "area_px", "region_id")
DOT_COLOR = (255, 0, 0)

logger = logging.getLogger(__name__)


def write_json(payload: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def detections_geojson(detections: Sequence[Detection], geo: Optional[AffineGeo]) -> Dict[str, Any]:
    """
    Point features in world units when ``geo`` is known, with the pixel
    centroid kept in a ``pixel`` property; otherwise pixel units, flagged
    with ``crs: "pixel"`` on every feature.
    """
    features = []
    for detection in detections:
        properties: Dict[str, Any] = {
            "area_px": detection.area_px,
            "region_id": detection.region_id,
        }
        if geo is not None and detection.centroid_world is not None:
            coordinates = list(detection.centroid_world)
            properties["pixel"] = list(detection.centroid_px)
        else:
            coordinates = list(detection.centroid_px)
            properties["crs"] = "pixel"
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": coordinates},
                "properties": properties,
            }
        )
    return {"type": "FeatureCollection", "features": features}


def detections_csv(detections: Sequence[Detection]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for detection in detections:
        world = detection.centroid_world
        writer.writerow(
            [
                to_decimal_text(detection.centroid_px[0]),
                to_decimal_text(detection.centroid_px[1]),
                to_decimal_text(world[0]) if world else "",
                to_decimal_text(world[1]) if world else "",
                detection.area_px,
                detection.region_id,
            ]
        )
    return buffer.getvalue()


def write_detections(
    detections: Sequence[Detection],
    geo: Optional[AffineGeo],
    out_dir: PathLike,
) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geojson_path = write_json(detections_geojson(detections, geo), out_dir / "detections.geojson")
    csv_path = out_dir / "detections.csv"
    csv_path.write_text(detections_csv(detections))
    return {"geojson": geojson_path, "csv": csv_path}


def _float(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ValidationError(f"{where}: '{value}' is not a number.") from exc


def _read_csv(path: Path) -> List[Detection]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        missing = set(CSV_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path} lacks column(s): {', '.join(sorted(missing))}.")
        detections = []
        for number, row in enumerate(reader, start=2):
            where = f"{path}:{number}"
            world = None
            if row["world_x"] and row["world_y"]:
                world = (_float(row["world_x"], where), _float(row["world_y"], where))
            detections.append(
                Detection(
                    centroid_px=(_float(row["x"], where), _float(row["y"], where)),
                    area_px=int(_float(row["area_px"], where)),
                    region_id=int(_float(row["region_id"] or "0", where)),
                    centroid_world=world,
                )
            )
    return detections


def _read_geojson(
    path: Path, geo: Optional[AffineGeo] = None, need_pixels: bool = False
) -> List[Detection]:
    try:
        payload = json.loads(path.read_text())
        features = payload["features"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{path} is not a detections FeatureCollection: {exc}") from exc
    detections = []
    for number, feature in enumerate(features):
        x, y = (float(value) for value in feature["geometry"]["coordinates"][:2])
        properties = feature.get("properties") or {}
        if properties.get("crs") == "pixel":
            pixel, world = (x, y), None
        else:
            world = (x, y)
            if properties.get("pixel") is not None:
                px, py = properties["pixel"][:2]
                pixel = (float(px), float(py))
            elif geo is not None:
                pixel = world_to_pixel(geo, x, y)
            elif need_pixels:
                raise ImproperlyConfigured(
                    f"{path}: feature {number} is in world units with no pixel position; "
                    "give the map's world file to convert it."
                )
            else:
                pixel = world
        detections.append(
            Detection(
                centroid_px=pixel,
                area_px=int(properties.get("area_px", 0)),
                region_id=int(properties.get("region_id", 0)),
                centroid_world=world,
            )
        )
    return detections


def read_detections(
    path: PathLike,
    geo: Optional[AffineGeo] = None,
    *,
    need_pixels: bool = False,
) -> List[Detection]:
    """
    Load detections from ``detections.csv`` or ``detections.geojson``.

    GeoJSON world features take their pixel centroid from the ``pixel``
    property, or from ``geo`` when that is missing. With ``need_pixels`` a
    feature that has neither raises ``ImproperlyConfigured``; without it the
    world point fills both coordinate slots.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Detections file not found: {path}")
    if path.suffix.lower() in (".geojson", ".json"):
        return _read_geojson(path, geo, need_pixels)
    return _read_csv(path)


def file_hashes(paths: Iterable[PathLike]) -> Dict[str, str]:
    return {Path(path).name: sha256_file(path) for path in paths}


def build_manifest(
    *,
    config: Mapping[str, Any],
    inputs: Iterable[PathLike],
    outputs: Mapping[str, PathLike],
    stats: Mapping[str, Any],
    seeds: Mapping[str, Any],
) -> Dict[str, Any]:
    """Everything needed to rerun a command and check its outputs."""

    return {
        "tool": "cascade_tiler",
        "version": __version__,
        "config": dict(config),
        "inputs": file_hashes(inputs),
        "seeds": dict(seeds),
        "stats": dict(stats),
        "outputs": {name: Path(path).name for name, path in sorted(outputs.items())},
    }


def render_overlay(map_raster: Raster, detections: Sequence[Detection], path: PathLike) -> Path:
    """The map in RGB with a 3-pixel red dot on every centroid."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = Image.fromarray(np.ascontiguousarray(map_raster.pixels)).convert("RGB")
    draw = ImageDraw.Draw(image)
    for detection in detections:
        x, y = (int(round(value)) for value in detection.centroid_px)
        draw.rectangle((x - 1, y - 1, x + 1, y + 1), fill=DOT_COLOR)
    image.save(path, format="PNG")
    logger.info("Wrote overlay %s", path)
    return path
