import csv
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from footprints.backends import ErrorModel, HeuristicSegmenter
from footprints.cascade import tradeoff_sweep
from footprints.config import resolve_workers
from footprints.costmodel import CostParams
from footprints.management.base import USAGE_ERROR, CascadeCommand, error_text
from footprints.pyramid import TABLE_LEVELS, table_schedule
from footprints.serializers import write_json
from footprints.synthmap import SynthParams, generate

COLUMNS = (
    "n",
    "predicted_time",
    "measured_ms",
    "measured_normalized",
    "f1",
    "precision",
    "recall",
    "pass_fraction",
    "segmenter_calls",
)


class Command(CascadeCommand):
    help = (
        "Generate a synthetic map and tabulate predicted time, measured time "
        "and F1 for n = 0..n_max."
    )

    def add_arguments(self, parser):
        parser.add_argument("--seed", type=int, default=42, help="Synthetic map seed.")
        parser.add_argument("--n-max", type=int, default=len(TABLE_LEVELS))
        parser.add_argument("--fp-rate", type=float, default=0.0)
        parser.add_argument("--fn-base", type=float, default=0.0)
        parser.add_argument("--edge-penalty", type=float, default=1.0)
        parser.add_argument("--frac-floor", type=float, default=0.002)
        parser.add_argument(
            "--em-seed", type=int, default=0, help="Seed of the injected classifier errors."
        )
        parser.add_argument("--R", type=float, dest="R", help="Assumed pass fraction.")
        parser.add_argument("--A", type=float, dest="A", help="Assumed cost ratio for predictions.")
        parser.add_argument(
            "--measured-r", action="store_true", help="Predict with the measured level-1 R."
        )
        parser.add_argument(
            "--segmenter",
            choices=("oracle", "heuristic"),
            default="oracle",
            help="Final-level segmenter.",
        )
        parser.add_argument("--radius", type=float, help="Match radius in pixels.")
        parser.add_argument("--workers", type=int)
        parser.add_argument("--csv", help="Write the table as CSV here.")
        parser.add_argument("--json", help="Write the table as JSON here.")

    def run(self, *args, **options):
        n_max = options["n_max"]
        if not 0 <= n_max <= len(TABLE_LEVELS):
            raise CommandError(
                f"--n-max must lie in [0, {len(TABLE_LEVELS)}].", returncode=USAGE_ERROR
            )
        try:
            em = ErrorModel(
                fp_rate=options["fp_rate"],
                fn_base=options["fn_base"],
                edge_penalty=options["edge_penalty"],
                frac_floor=options["frac_floor"],
                seed=options["em_seed"],
            )
            cost = CostParams(
                R=options["R"] if options["R"] is not None else settings.CASCADE_ASSUMED_R,
                A=options["A"] if options["A"] is not None else settings.CASCADE_ASSUMED_A,
            )
        except ValidationError as exc:
            raise CommandError(error_text(exc), returncode=USAGE_ERROR) from exc

        raster, truth = generate(SynthParams(seed=options["seed"]))
        segmenter = HeuristicSegmenter() if options["segmenter"] == "heuristic" else None
        rows = tradeoff_sweep(
            raster,
            truth,
            [table_schedule(n) for n in range(n_max + 1)],
            em,
            segmenter=segmenter,
            cost=cost,
            radius=options["radius"] or settings.CASCADE_MATCH_RADIUS_PX,
            use_measured_r=options["measured_r"],
            workers=resolve_workers(options.get("workers")),
        )

        self.stdout.write(f"seed {options['seed']}: {len(truth.buildings)} buildings")
        self.stdout.write(f"{'n':>2}  {'T(n)':>8}  {'measured':>10}  {'F1':>6}  schedule")
        for row in rows:
            measured = "-" if row.measured_normalized is None else f"{row.measured_normalized:.4f}"
            self.stdout.write(
                f"{row.n:>2}  {row.predicted_time:>8.4f}  {measured:>10}  "
                f"{row.f1:>6.4f}  {row.schedule}"
            )

        table = [row.to_dict() for row in rows]
        if options.get("json"):
            write_json({"seed": options["seed"], "rows": table}, options["json"])
        if options.get("csv"):
            path = Path(options["csv"])
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as handle:
                writer = csv.DictWriter(
                    handle, fieldnames=COLUMNS, extrasaction="ignore", lineterminator="\n"
                )
                writer.writeheader()
                writer.writerows(table)
