import logging
from pathlib import Path

from django.core.management.base import CommandError

from footprints.cascade import run_pipeline
from footprints.config import (
    build_cascade_config,
    dump_config,
    load_config,
    resolve_workers,
    truth_mask_path,
)
from footprints.management.base import USAGE_ERROR, CascadeCommand
from footprints.pyramid import read_world_file, sidecar_path
from footprints.raster import load_png
from footprints.serializers import (
    build_manifest,
    render_overlay,
    write_detections,
    write_json,
)

logger = logging.getLogger(__name__)


class Command(CascadeCommand):
    help = "Run the classify-and-filter cascade on a map raster and write detections."

    def add_arguments(self, parser):
        parser.add_argument("map_path", nargs="?", help="Grayscale or RGB PNG map.")
        parser.add_argument("--config", help="Run config JSON (schema_version 1).")
        parser.add_argument("--out", default="out", help="Output directory.")
        parser.add_argument("--workers", type=int, help="Tile-level worker threads.")
        parser.add_argument(
            "--world-file", help="Affine sidecar; defaults to <map>.pgw when present."
        )
        parser.add_argument("--overlay", action="store_true", help="Also write overlay.png.")
        parser.add_argument(
            "--record-timings",
            action="store_true",
            help="Write measured wall times and estimated A into stats.json.",
        )
        parser.add_argument(
            "--print-config",
            action="store_true",
            help="Print the fully resolved config and exit.",
        )

    def run(self, *args, **options):
        config_path = options.get("config")
        if config_path:
            self.require_file(config_path, "Config file")
        resolved = load_config(config_path)
        if options["print_config"]:
            self.stdout.write(dump_config(resolved), ending="")
            return

        if not options.get("map_path"):
            raise CommandError("A map path is required.", returncode=USAGE_ERROR)
        map_path = self.require_file(options["map_path"], "Map file")
        if options.get("world_file"):
            world_path = self.require_file(options["world_file"], "World file")
        else:
            world_path = sidecar_path(map_path)
        geo = read_world_file(world_path) if world_path.is_file() else None

        workers = resolve_workers(options.get("workers"), resolved["workers"])
        base_dir = Path(config_path).parent if config_path else None
        cfg = build_cascade_config(resolved, workers=workers, base_dir=base_dir)

        raster = load_png(map_path, geo)
        logger.info(
            "Running %s on %s (%sx%s) with %s worker(s)",
            cfg.schedule.describe(),
            map_path,
            raster.width,
            raster.height,
            workers,
        )
        result = run_pipeline(raster, cfg)

        out_dir = Path(options["out"])
        outputs = write_detections(result.detections, geo, out_dir)
        stats = result.stats.to_dict(record_timings=options["record_timings"])
        outputs["stats"] = write_json(stats, out_dir / "stats.json")
        if options["overlay"]:
            outputs["overlay"] = render_overlay(raster, result.detections, out_dir / "overlay.png")

        inputs = [map_path]
        if config_path:
            inputs.append(Path(config_path))
        if geo is not None:
            inputs.append(world_path)
        truth_path = truth_mask_path(resolved, base_dir)
        if truth_path is not None and truth_path.is_file():
            inputs.append(truth_path)
        seeds = {
            f"classifiers[{index}]": entry["error_model"].get("seed", 0)
            for index, entry in enumerate(resolved["classifiers"])
            if entry.get("error_model")
        }
        manifest = build_manifest(
            config=resolved,
            inputs=inputs,
            outputs=outputs,
            stats=stats,
            seeds=seeds,
        )
        write_json(manifest, out_dir / "manifest.json")
        self.stdout.write(
            f"{len(result.detections)} detections, {result.stats.segmenter_calls} tiles segmented; "
            f"wrote {out_dir}"
        )
