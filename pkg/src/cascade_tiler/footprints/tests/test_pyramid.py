import tempfile
from itertools import combinations
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from footprints.exceptions import TileGeometryError
from footprints.pyramid import (
    TABLE_LEVELS,
    LevelSchedule,
    TileRect,
    TileRef,
    extract,
    level_tiles,
    pixel_to_world,
    read_world_file,
    sidecar_path,
    subdivide,
    table_schedule,
    tile_grid,
    world_to_pixel,
    write_world_file,
)
from footprints.raster import AffineGeo, Raster


class TileGridTests(SimpleTestCase):
    def test_level_one_sheet_splits_into_twenty_one(self):
        tiles = tile_grid(1792, 768, 256, 256)
        self.assertEqual(len(tiles), 21)
        self.assertEqual(max(t.col for t in tiles) + 1, 7)
        self.assertEqual(max(t.row for t in tiles) + 1, 3)

    def test_full_map_splits_into_twelve(self):
        self.assertEqual(len(tile_grid(7168, 2304, 1792, 768)), 12)

    def test_single_tile(self):
        self.assertEqual(len(tile_grid(256, 256, 256, 256)), 1)

    def test_edge_tiles_are_padded(self):
        tiles = tile_grid(300, 300, 256, 256)
        self.assertEqual(len(tiles), 4)
        self.assertEqual(tiles[-1].rect, TileRect(256, 256, 256, 256))

    def test_row_major_order(self):
        keys = [(t.row, t.col) for t in tile_grid(600, 300, 256, 256)]
        self.assertEqual(keys, sorted(keys))

    def test_disjoint_cover(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            width, height = (int(v) for v in rng.integers(1, 200, size=2))
            tile_w, tile_h = (int(v) for v in rng.integers(1, 64, size=2))
            tiles = tile_grid(width, height, tile_w, tile_h)
            cover = np.zeros((height, width), dtype=int)
            for tile in tiles:
                inside = tile.rect.clip(width, height)
                cover[inside.y0 : inside.y1, inside.x0 : inside.x1] += 1
            self.assertTrue((cover == 1).all())
            for a, b in combinations(tiles[:12], 2):
                self.assertFalse(a.rect.intersects(b.rect))

    def test_non_positive_arguments(self):
        with self.assertRaises(TileGeometryError):
            tile_grid(0, 10, 5, 5)

    def test_tile_id(self):
        self.assertEqual(TileRef(2, 3, 4, TileRect(0, 0, 1, 1)).tile_id, "L2_R3_C4")


class SubdivideTests(SimpleTestCase):
    def test_sheet_into_twenty_one(self):
        parent = tile_grid(1792, 768, 1792, 768)[0]
        children = subdivide(parent, (256, 256))
        self.assertEqual(len(children), 21)
        self.assertTrue(all(child.level == 2 for child in children))

    def test_quartering(self):
        parent = TileRef(1, 0, 0, TileRect(0, 0, 256, 256))
        self.assertEqual(len(subdivide(parent, (128, 128))), 4)

    def test_padded_children(self):
        parent = TileRef(1, 0, 0, TileRect(0, 0, 256, 256))
        children = subdivide(parent, (100, 100))
        self.assertEqual(len(children), 9)
        self.assertEqual(children[-1].rect, TileRect(200, 200, 100, 100))

    def test_larger_child_is_rejected(self):
        parent = TileRef(1, 0, 0, TileRect(0, 0, 128, 128))
        with self.assertRaises(TileGeometryError):
            subdivide(parent, (256, 128))

    def test_full_subdivision_reproduces_next_grid(self):
        parents = tile_grid(7168, 2304, 1792, 768)
        children = [c for p in parents for c in subdivide(p, (256, 256), bounds=(7168, 2304))]
        expected = {t.key: t.rect for t in tile_grid(7168, 2304, 256, 256, level=2)}
        self.assertEqual({c.key: c.rect for c in children}, expected)

    def test_bounds_skip_children_outside_map(self):
        parents = tile_grid(300, 300, 256, 256)
        children = [c for p in parents for c in subdivide(p, (128, 128), bounds=(300, 300))]
        expected = {t.key for t in tile_grid(300, 300, 128, 128, level=2)}
        self.assertEqual({c.key for c in children}, expected)


class ScheduleTests(SimpleTestCase):
    def test_default_is_two_level(self):
        schedule = LevelSchedule()
        self.assertEqual(schedule.levels, ((1792, 768), (256, 256)))
        self.assertEqual(schedule.depth, 2)
        self.assertEqual(schedule.segment_size, (256, 256))

    def test_growing_levels_are_rejected(self):
        with self.assertRaises(ValidationError):
            LevelSchedule(levels=((256, 256), (512, 512)))

    def test_presets(self):
        self.assertEqual(table_schedule(0).depth, 0)
        self.assertEqual(table_schedule(0).segment_size, (256, 256))
        self.assertEqual(table_schedule(1).classified_sizes, ((1792, 768),))
        self.assertEqual(table_schedule(1).segment_size, (256, 256))
        self.assertEqual(table_schedule(4).levels, TABLE_LEVELS)
        self.assertEqual(table_schedule(4).segment_size, (64, 64))
        with self.assertRaises(ValidationError):
            table_schedule(5)

    def test_level_tiles_counts(self):
        counts = [len(level) for level in level_tiles(7168, 2304, table_schedule(4))]
        self.assertEqual(counts, [12, 252, 1008, 4032])


class ExtractTests(SimpleTestCase):
    def setUp(self):
        self.map = Raster(np.arange(300 * 300, dtype=np.uint32).reshape(300, 300) % 200)

    def test_interior_crop(self):
        tile = TileRef(1, 0, 0, TileRect(10, 20, 30, 40))
        crop = extract(self.map, tile)
        self.assertTrue(np.array_equal(crop.pixels, self.map.pixels[20:60, 10:40]))

    def test_edge_tile_is_padded_white(self):
        tile = tile_grid(300, 300, 256, 256)[-1]
        crop = extract(self.map, tile)
        self.assertEqual((crop.width, crop.height), (256, 256))
        self.assertTrue(np.array_equal(crop.pixels[:44, :44], self.map.pixels[256:, 256:]))
        self.assertTrue((crop.pixels[44:, :] == 255).all())
        self.assertTrue((crop.pixels[:, 44:] == 255).all())

    def test_custom_pad_value(self):
        tile = tile_grid(300, 300, 256, 256)[-1]
        self.assertEqual(int(extract(self.map, tile, pad_value=7).pixels[-1, -1]), 7)

    def test_disjoint_tile_is_rejected(self):
        with self.assertRaises(TileGeometryError):
            extract(self.map, TileRef(1, 5, 5, TileRect(400, 400, 10, 10)))

    def test_context_border(self):
        tile = TileRef(1, 0, 0, TileRect(0, 0, 10, 10))
        crop = extract(self.map, tile, context_px=2)
        self.assertEqual((crop.width, crop.height), (14, 14))
        self.assertTrue((crop.pixels[:2, :] == 255).all())
        self.assertTrue(np.array_equal(crop.pixels[2:, 2:], self.map.pixels[:12, :12]))


class GeoTests(SimpleTestCase):
    def test_unit_affine(self):
        self.assertEqual(pixel_to_world(AffineGeo(0, 0, 1, -1), 10, 20), (10, -20))

    def test_grid_reference_example(self):
        geo = AffineGeo(500000, 723000, 0.5, -0.5)
        self.assertEqual(pixel_to_world(geo, 1406, 1774), (500703, 722113))

    def test_origin(self):
        geo = AffineGeo(12.5, -3.0, 2.0, -2.0)
        self.assertEqual(pixel_to_world(geo, 0, 0), (12.5, -3.0))

    def test_inverse(self):
        geo = AffineGeo(499500.0, 722500.0, 0.2136, -0.2136)
        rng = np.random.default_rng(5)
        for x, y in rng.uniform(0, 8000, size=(50, 2)):
            back = world_to_pixel(geo, *pixel_to_world(geo, x, y))
            self.assertAlmostEqual(back[0], x, delta=1e-9 * max(1.0, abs(x)) + 1e-6)
            self.assertAlmostEqual(back[1], y, delta=1e-9 * max(1.0, abs(y)) + 1e-6)

    def test_zero_pixel_size(self):
        with self.assertRaises(ValidationError):
            AffineGeo(0, 0, 0, -1)

    def test_world_file_round_trip(self):
        geo = AffineGeo(499500.0, 722500.0, 0.2136, -0.2136)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_world_file(geo, sidecar_path(Path(tmp) / "map.png"))
            self.assertEqual(path.name, "map.pgw")
            lines = path.read_text().splitlines()
            self.assertEqual(lines, ["0.2136", "-0.2136", "499500", "722500"])
            self.assertEqual(read_world_file(path), geo)

    def test_world_file_needs_four_values(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.pgw"
            path.write_text("1\n2\n3\n")
            with self.assertRaises(ValidationError):
                read_world_file(path)
