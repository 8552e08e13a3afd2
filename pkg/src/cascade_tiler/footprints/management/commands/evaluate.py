from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from footprints.evaluation import MatchResult, dice, f1, match
from footprints.management.base import USAGE_ERROR, CascadeCommand
from footprints.pyramid import read_world_file
from footprints.raster import load_mask
from footprints.serializers import read_detections, write_json
from footprints.synthmap import read_truth


class Command(CascadeCommand):
    help = "Score detection files against ground-truth building lists."

    def add_arguments(self, parser):
        parser.add_argument(
            "pairs",
            nargs="+",
            help="Alternating detections file (CSV or GeoJSON) and truth text file.",
        )
        parser.add_argument("--radius", type=float, help="Match radius in pixels.")
        parser.add_argument(
            "--world-file",
            help="World file for GeoJSON detections that carry world coordinates only.",
        )
        parser.add_argument("--out", help="Directory for eval.json and eval.txt.")
        parser.add_argument("--pred-mask", help="Predicted mask PNG, for a Dice score.")
        parser.add_argument("--truth-mask", help="Truth mask PNG, for a Dice score.")

    def run(self, *args, **options):
        pairs = options["pairs"]
        if len(pairs) % 2:
            raise CommandError(
                "Give detections and truth files in pairs.", returncode=USAGE_ERROR
            )
        if bool(options.get("pred_mask")) != bool(options.get("truth_mask")):
            raise CommandError(
                "--pred-mask and --truth-mask go together.", returncode=USAGE_ERROR
            )
        radius = options["radius"] or settings.CASCADE_MATCH_RADIUS_PX
        for path in pairs:
            self.require_file(path, "Input file")
        geo = None
        if options.get("world_file"):
            geo = read_world_file(self.require_file(options["world_file"], "World file"))

        rows = []
        tp = fp = fn = 0
        for det_path, truth_path in zip(pairs[::2], pairs[1::2]):
            detections = read_detections(det_path, geo, need_pixels=True)
            truths = [building.centroid for building in read_truth(truth_path)]
            result: MatchResult = match(detections, truths, radius)
            tp, fp, fn = tp + result.tp, fp + result.fp, fn + result.fn
            rows.append(
                {
                    "detections": Path(det_path).name,
                    "truth": Path(truth_path).name,
                    **result.to_dict(),
                }
            )

        total = MatchResult(tp=tp, fp=fp, fn=fn).to_dict()
        report = {"radius": radius, "maps": rows, "total": total}
        if options.get("pred_mask"):
            predicted = load_mask(self.require_file(options["pred_mask"], "Mask file"))
            truth_mask = load_mask(self.require_file(options["truth_mask"], "Mask file"))
            report["dice"] = dice(predicted, truth_mask)

        lines = [f"radius {radius} px"]
        for row in rows:
            lines.append(
                f"{row['detections']}: tp={row['tp']} fp={row['fp']} fn={row['fn']} "
                f"precision={row['precision']:.4f} recall={row['recall']:.4f} f1={row['f1']:.4f}"
            )
        lines.append(
            f"total: tp={tp} fp={fp} fn={fn} precision={total['precision']:.4f} "
            f"recall={total['recall']:.4f} f1={f1(tp, fp, fn):.4f}"
        )
        if "dice" in report:
            lines.append(f"dice: {report['dice']:.4f}")
        text = "\n".join(lines) + "\n"
        self.stdout.write(text, ending="")

        if options.get("out"):
            out_dir = Path(options["out"])
            write_json(report, out_dir / "eval.json")
            (out_dir / "eval.txt").write_text(text)
