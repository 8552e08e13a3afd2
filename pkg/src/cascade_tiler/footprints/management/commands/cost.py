import csv
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from footprints.costmodel import (
    asymptotic_time,
    break_even_limit,
    cost_table,
    project_hours,
)
from footprints.exceptions import DomainError
from footprints.management.base import USAGE_ERROR, CascadeCommand, error_text
from footprints.utils import round_half_up, to_decimal_text


def _fmt(value: float) -> str:
    return to_decimal_text(round_half_up(value, 6))


class Command(CascadeCommand):
    help = "Print the normalized inference-time table T(n) for pass fraction R and cost ratio A."

    def add_arguments(self, parser):
        parser.add_argument("--R", type=float, dest="R", help="Pass fraction per level.")
        parser.add_argument("--A", type=float, dest="A", default=None, help="Cost ratio t_s / t_c.")
        parser.add_argument("--n-max", type=int, default=4, help="Deepest pipeline to list.")
        parser.add_argument("--csv", help="Also write the table as CSV here.")
        parser.add_argument("--tiles", type=int, help="Segmentation tiles in the full coverage.")
        parser.add_argument(
            "--seconds-per-tile",
            type=float,
            help="Segmentation seconds per tile, for the --tiles projection.",
        )

    def run(self, *args, **options):
        R = options["R"] if options["R"] is not None else settings.CASCADE_ASSUMED_R
        A = options["A"] if options["A"] is not None else settings.CASCADE_ASSUMED_A
        n_max = options["n_max"]
        if n_max < 0:
            raise CommandError("--n-max must be non-negative.", returncode=USAGE_ERROR)
        if (options.get("tiles") is None) != (options.get("seconds_per_tile") is None):
            raise CommandError(
                "--tiles and --seconds-per-tile go together.", returncode=USAGE_ERROR
            )
        try:
            rows = cost_table(R, A, n_max)
            asymptote = asymptotic_time(R, A) if R < 1 else None
            hours = None
            if options.get("tiles") is not None:
                tiles, seconds = options["tiles"], options["seconds_per_tile"]
                hours = [project_hours(tiles, seconds, row["n"], R, A) for row in rows]
        except DomainError as exc:
            raise CommandError(error_text(exc), returncode=USAGE_ERROR) from exc

        self.stdout.write(f"R = {to_decimal_text(R)}, A = {to_decimal_text(A)}")
        header = f"{'n':>3}  {'T(n)':>10}  {'beneficial':>10}"
        if hours is not None:
            header += f"  {'hours':>12}"
        self.stdout.write(header)
        for index, row in enumerate(rows):
            line = (
                f"{row['n']:>3}  {_fmt(row['normalized_time']):>10}  "
                f"{'yes' if row['beneficial'] else 'no':>10}"
            )
            if hours is not None:
                line += f"  {_fmt(hours[index]):>12}"
            self.stdout.write(line)
        self.stdout.write(f"break-even: R < {_fmt(break_even_limit(A))}")
        if asymptote is None:
            self.stdout.write("asymptote: diverges (R >= 1)")
        else:
            self.stdout.write(f"asymptote: {_fmt(asymptote)}")

        if options.get("csv"):
            path = Path(options["csv"])
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["n", "normalized_time", "beneficial"])
                for row in rows:
                    writer.writerow(
                        [row["n"], repr(row["normalized_time"]), int(row["beneficial"])]
                    )
