from dataclasses import asdict, replace
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from footprints.management.base import USAGE_ERROR, CascadeCommand, error_text
from footprints.serializers import write_json
from footprints.synthmap import SynthParams, generate, write_outputs


class Command(CascadeCommand):
    help = "Generate synthetic rural maps with exact ground truth."

    def add_arguments(self, parser):
        parser.add_argument("--out", default="corpus", help="Output directory.")
        parser.add_argument("--seed", type=int, default=42, help="Seed of the first map.")
        parser.add_argument(
            "--count", type=int, default=1, help="Maps to generate (consecutive seeds)."
        )
        parser.add_argument("--width", type=int, default=SynthParams.width)
        parser.add_argument("--height", type=int, default=SynthParams.height)
        parser.add_argument(
            "--buildings",
            type=float,
            default=SynthParams.building_count_mean,
            help="Mean building count per map.",
        )
        parser.add_argument(
            "--no-distractors",
            action="store_true",
            help="Leave out field lines, wetland and specks.",
        )
        parser.add_argument(
            "--no-straddle",
            action="store_true",
            help="Do not force a tile-straddling building.",
        )

    def run(self, *args, **options):
        if options["count"] < 1:
            raise CommandError("--count must be at least 1.", returncode=USAGE_ERROR)
        try:
            params = SynthParams(
                width=options["width"],
                height=options["height"],
                building_count_mean=options["buildings"],
                force_straddle=not options["no_straddle"],
                seed=options["seed"],
            )
            if options["no_distractors"]:
                params = replace(
                    params, field_line_density=0.0, wetland_density=0.0, speck_density=0.0
                )
        except ValidationError as exc:
            raise CommandError(error_text(exc), returncode=USAGE_ERROR) from exc

        out_dir = Path(options["out"])
        maps = []
        for seed in range(options["seed"], options["seed"] + options["count"]):
            raster, truth = generate(params.with_seed(seed))
            written = write_outputs(raster, truth, out_dir, f"map_{seed}")
            maps.append(
                {
                    "seed": seed,
                    "map": written.map_path.name,
                    "mask": written.mask_path.name,
                    "truth": written.truth_path.name,
                    "world_file": written.world_path.name if written.world_path else None,
                    "buildings": len(truth.buildings),
                    "requested": truth.requested,
                    "dropped": truth.dropped,
                }
            )
            self.stdout.write(f"seed {seed}: {len(truth.buildings)} buildings")
        params_dict = asdict(params)
        params_dict.pop("seed")
        write_json({"params": params_dict, "maps": maps}, out_dir / "corpus.json")
        self.stdout.write(f"Wrote {len(maps)} map(s) to {out_dir}")
