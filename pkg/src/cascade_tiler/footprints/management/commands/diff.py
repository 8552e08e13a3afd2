import csv
from pathlib import Path

from footprints.evaluation import change_detect
from footprints.management.base import CascadeCommand
from footprints.serializers import read_detections, write_json
from footprints.utils import to_decimal_text


class Command(CascadeCommand):
    help = "Compare detections of two map epochs and report clusters of vanished or new buildings."

    def add_arguments(self, parser):
        parser.add_argument(
            "epoch_a", help="Earlier detections (CSV or GeoJSON, world coordinates)."
        )
        parser.add_argument("epoch_b", help="Later detections.")
        parser.add_argument("--radius", type=float, help="Match radius in world units.")
        parser.add_argument(
            "--cluster-dist", type=float, help="Single-linkage distance in world units."
        )
        parser.add_argument(
            "--out", default="changes", help="Directory for change.json and change.csv."
        )

    def run(self, *args, **options):
        epoch_a = read_detections(self.require_file(options["epoch_a"], "Detections file"))
        epoch_b = read_detections(self.require_file(options["epoch_b"], "Detections file"))
        report = change_detect(
            epoch_a, epoch_b, options.get("radius"), options.get("cluster_dist")
        )

        out_dir = Path(options["out"])
        write_json(report.to_dict(), out_dir / "change.json")
        with open(out_dir / "change.csv", "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["kind", "size", "centroid_x", "centroid_y"])
            for cluster in report.clusters:
                x, y = cluster.centroid
                writer.writerow(
                    [cluster.kind, cluster.size, to_decimal_text(x), to_decimal_text(y)]
                )

        if not report.has_changes:
            self.stdout.write("no changes")
            return
        for cluster in report.clusters:
            x, y = cluster.centroid
            self.stdout.write(
                f"{cluster.kind}: {cluster.size} building(s) around ({x:.1f}, {y:.1f})"
            )
