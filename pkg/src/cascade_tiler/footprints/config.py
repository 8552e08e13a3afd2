"""
Run configuration: one JSON document, ``schema_version`` 1.

Keys: ``schedule`` (``levels`` + ``depth``, or ``preset``), ``thresholds``,
``classifiers`` (one per classified level), ``segmenter``, ``pad_value``,
``stitch`` (``connectivity``, ``min_area``), ``truth_mask`` and ``workers``.
Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured, ValidationError

from .backends import build_classifier, build_segmenter
from .cascade import CascadeConfig, default_thresholds
from .enums import BackendKind
from .pyramid import DEFAULT_LEVELS, LevelSchedule, table_schedule
from .raster import load_mask
from .stitch import DEFAULT_CONNECTIVITY, DEFAULT_MIN_AREA

SCHEMA_VERSION = 1

TOP_LEVEL_KEYS = {
    "schema_version",
    "schedule",
    "thresholds",
    "classifiers",
    "segmenter",
    "pad_value",
    "stitch",
    "truth_mask",
    "workers",
}
SCHEDULE_KEYS = {"levels", "depth", "preset"}
STITCH_KEYS = {"connectivity", "min_area"}
BACKEND_KEYS = {"kind", "rho", "dark_level", "context_px", "error_model", "command", "timeout"}
ERROR_MODEL_KEYS = {"fp_rate", "fn_base", "edge_penalty", "frac_floor", "seed"}

logger = logging.getLogger(__name__)


def _reject_unknown(section: str, data: Mapping[str, Any], allowed: set) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ImproperlyConfigured(f"Unknown {section} key(s): {', '.join(unknown)}.")


def _mapping(section: str, value: Any) -> Dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ImproperlyConfigured(f"Config section '{section}' must be an object.")
    return dict(value)


def _schedule(raw: Dict[str, Any]) -> LevelSchedule:
    _reject_unknown("schedule", raw, SCHEDULE_KEYS)
    try:
        if "preset" in raw:
            if set(raw) - {"preset"}:
                raise ImproperlyConfigured(
                    "A schedule preset cannot be combined with levels or depth."
                )
            return table_schedule(int(raw["preset"]))
        levels = tuple(tuple(size) for size in raw.get("levels", DEFAULT_LEVELS))
        if any(len(size) != 2 for size in levels):
            raise ImproperlyConfigured("Schedule levels are [tile_w, tile_h] pairs.")
        return LevelSchedule(levels=levels, depth=raw.get("depth"))
    except (TypeError, ValueError, ValidationError) as exc:
        raise ImproperlyConfigured(f"Invalid schedule: {exc}") from exc


def _backend(section: str, raw: Any, default_kind: str) -> Dict[str, Any]:
    entry = _mapping(section, raw)
    _reject_unknown(section, entry, BACKEND_KEYS)
    entry.setdefault("kind", default_kind)
    if entry["kind"] not in BackendKind.values:
        expected = ", ".join(BackendKind.values)
        raise ImproperlyConfigured(
            f"{section}: unknown kind '{entry['kind']}' (expected one of {expected})."
        )
    if entry["kind"] == BackendKind.EXTERNAL and not entry.get("command"):
        raise ImproperlyConfigured(f"{section}: external backends need a 'command'.")
    if "error_model" in entry:
        error_model = _mapping(f"{section}.error_model", entry["error_model"])
        _reject_unknown(f"{section}.error_model", error_model, ERROR_MODEL_KEYS)
    return entry


def resolve_config(raw: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Validate a config document and fill in every default.

    Raises
    ------
    ImproperlyConfigured
        For unknown keys, a wrong schema version or inconsistent sections.
    """
    raw = _mapping("root", raw)
    _reject_unknown("config", raw, TOP_LEVEL_KEYS)
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ImproperlyConfigured(
            f"Unsupported schema_version {version}; expected {SCHEMA_VERSION}."
        )

    schedule = _schedule(_mapping("schedule", raw.get("schedule")))
    depth = schedule.depth
    classifiers = raw.get("classifiers")
    if classifiers is None:
        classifiers = [{} for _ in range(depth)]
    if not isinstance(classifiers, list) or len(classifiers) != depth:
        raise ImproperlyConfigured(
            f"The schedule classifies {depth} level(s); give exactly that many classifiers."
        )
    thresholds = raw.get("thresholds")
    thresholds = list(default_thresholds(depth)) if thresholds is None else list(thresholds)
    if len(thresholds) != depth:
        raise ImproperlyConfigured(f"Expected {depth} threshold(s), got {len(thresholds)}.")

    stitch = _mapping("stitch", raw.get("stitch"))
    _reject_unknown("stitch", stitch, STITCH_KEYS)
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ImproperlyConfigured("'workers' must be a positive integer.")

    return {
        "schema_version": SCHEMA_VERSION,
        "schedule": {"levels": [list(size) for size in schedule.levels], "depth": depth},
        "thresholds": [float(t) for t in thresholds],
        "classifiers": [
            _backend(f"classifiers[{index}]", entry, BackendKind.HEURISTIC)
            for index, entry in enumerate(classifiers)
        ],
        "segmenter": _backend("segmenter", raw.get("segmenter"), BackendKind.HEURISTIC),
        "pad_value": int(raw.get("pad_value", getattr(settings, "CASCADE_PAD_VALUE", 255))),
        "stitch": {
            "connectivity": int(stitch.get("connectivity", DEFAULT_CONNECTIVITY)),
            "min_area": int(stitch.get("min_area", DEFAULT_MIN_AREA)),
        },
        "truth_mask": raw.get("truth_mask"),
        "workers": workers,
    }


def default_config() -> Dict[str, Any]:
    return resolve_config({"schema_version": SCHEMA_VERSION})


def load_config(path: Union[str, Path, None]) -> Dict[str, Any]:
    """Read and resolve a config file; no path means all defaults."""

    if path is None:
        return default_config()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ImproperlyConfigured(f"Config file {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw)


def resolve_workers(flag: Optional[int], config_workers: int = 1) -> int:
    """``--workers`` beats ``CASCADE_TILER_THREADS``, which beats the config value."""

    for value in (flag, getattr(settings, "CASCADE_TILER_THREADS", None), config_workers):
        if value is not None:
            if int(value) < 1:
                raise ImproperlyConfigured(f"Worker count must be positive, got {value}.")
            return int(value)
    return 1


def _needs_truth(resolved: Mapping[str, Any]) -> bool:
    entries: List[Mapping[str, Any]] = [*resolved["classifiers"], resolved["segmenter"]]
    return any(entry["kind"] == BackendKind.ORACLE for entry in entries)


def truth_mask_path(
    resolved: Mapping[str, Any], base_dir: Union[str, Path, None] = None
) -> Optional[Path]:
    if not resolved.get("truth_mask"):
        return None
    path = Path(resolved["truth_mask"])
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def build_cascade_config(
    resolved: Mapping[str, Any],
    *,
    workers: int = 1,
    base_dir: Union[str, Path, None] = None,
) -> CascadeConfig:
    """
    Instantiate backends for a resolved config. A relative ``truth_mask`` is
    read next to the config file (``base_dir``).
    """
    resolved = copy.deepcopy(dict(resolved))
    schedule = LevelSchedule(
        levels=tuple(tuple(size) for size in resolved["schedule"]["levels"]),
        depth=resolved["schedule"]["depth"],
    )
    truth = None
    if _needs_truth(resolved):
        if not resolved.get("truth_mask"):
            raise ImproperlyConfigured("Oracle backends need 'truth_mask' in the config.")
        truth_path = truth_mask_path(resolved, base_dir)
        try:
            truth = load_mask(truth_path)
        except ValidationError as exc:
            raise ImproperlyConfigured(
                f"Cannot read truth mask {truth_path}: {exc.messages[0]}"
            ) from exc

    try:
        classifiers = tuple(
            build_classifier(entry, tile_size=schedule.levels[index], truth=truth)
            for index, entry in enumerate(resolved["classifiers"])
        )
        segmenter = build_segmenter(
            resolved["segmenter"], tile_size=schedule.segment_size, truth=truth
        )
        return CascadeConfig(
            schedule=schedule,
            classifiers=classifiers,
            segmenter=segmenter,
            thresholds=tuple(resolved["thresholds"]),
            pad_value=resolved["pad_value"],
            workers=workers,
            connectivity=resolved["stitch"]["connectivity"],
            min_area=resolved["stitch"]["min_area"],
        )
    except ValidationError as exc:
        raise ImproperlyConfigured("; ".join(exc.messages)) from exc


def dump_config(resolved: Mapping[str, Any]) -> str:
    return json.dumps(resolved, indent=2, sort_keys=True) + "\n"
