from pathlib import Path

from django.core.exceptions import ValidationError

from footprints.management.base import CascadeCommand
from footprints.raster import (
    augment_mask_set,
    augment_set,
    augmentation_names,
    load_mask,
    load_png,
    save_mask,
    save_png,
)


class Command(CascadeCommand):
    help = "Write the six dihedral training variants of each input PNG."

    def add_arguments(self, parser):
        parser.add_argument("images", nargs="+", help="Input PNG files.")
        parser.add_argument("--out", default="augmented", help="Output directory.")
        parser.add_argument(
            "--with-masks",
            action="store_true",
            help="Also transform the <stem>_mask.png label next to each image.",
        )

    def run(self, *args, **options):
        out_dir = Path(options["out"])
        names = augmentation_names()
        written = 0
        for image_path in options["images"]:
            image_path = self.require_file(image_path, "Image file")
            source = load_png(image_path)
            stem = image_path.stem
            for name, variant in zip(names, augment_set(source)):
                save_png(variant, out_dir / f"{stem}_{name}.png")
                written += 1
            if options["with_masks"]:
                mask_path = self.require_file(
                    image_path.with_name(f"{stem}_mask.png"), "Mask file"
                )
                mask = load_mask(mask_path)
                if (mask.width, mask.height) != (source.width, source.height):
                    raise ValidationError(f"{mask_path} does not match the size of {image_path}.")
                for name, variant in zip(names, augment_mask_set(mask)):
                    save_mask(variant, out_dir / f"{stem}_{name}_mask.png")
                    written += 1
        self.stdout.write(f"Wrote {written} image(s) to {out_dir}")
