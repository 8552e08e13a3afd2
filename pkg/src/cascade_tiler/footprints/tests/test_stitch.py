import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from footprints.pyramid import grid_index, tile_grid
from footprints.raster import AffineGeo, BinaryMask
from footprints.stitch import (
    Region,
    centroid,
    connected_components,
    detections_from_mask,
    extract_detections,
    grow_regions,
)

TILE = 16


def tiled(width=96, height=96):
    tiles = tile_grid(width, height, TILE, TILE)
    return tiles, grid_index(tiles)


def crop_masks(full: np.ndarray, tiles):
    masks = {}
    for tile in tiles:
        rect = tile.rect
        bits = np.zeros((rect.h, rect.w), dtype=bool)
        window = full[rect.y0 : rect.y1, rect.x0 : rect.x1]
        bits[: window.shape[0], : window.shape[1]] = window
        masks[tile] = BinaryMask(bits)
    return masks


def dot_mask():
    bits = np.zeros((TILE, TILE), dtype=bool)
    bits[8, 8] = True
    return BinaryMask(bits)


class GrowRegionTests(SimpleTestCase):
    def setUp(self):
        self.tiles, self.grid = tiled()

    def test_interior_tile_grows_into_nine(self):
        regions = grow_regions({self.grid[(2, 2)]: dot_mask()}, self.grid)
        self.assertEqual(len(regions), 1)
        self.assertEqual(len(regions[0].tiles), 9)
        self.assertEqual((regions[0].mosaic.width, regions[0].mosaic.height), (48, 48))
        self.assertEqual(regions[0].offset, (16, 16))

    def test_diagonal_pair_gives_fourteen(self):
        masks = {self.grid[(2, 2)]: dot_mask(), self.grid[(3, 3)]: dot_mask()}
        regions = grow_regions(masks, self.grid)
        self.assertEqual(len(regions), 1)
        self.assertEqual(len(regions[0].tiles), 14)

    def test_corner_tile_is_clipped_to_grid(self):
        regions = grow_regions({self.grid[(0, 0)]: dot_mask()}, self.grid)
        self.assertEqual(len(regions[0].tiles), 4)

    def test_no_positive_tiles(self):
        empty = {tile: BinaryMask.empty(TILE, TILE) for tile in self.tiles}
        self.assertEqual(grow_regions(empty, self.grid), [])

    def test_shared_halo_merges_regions(self):
        masks = {self.grid[(2, 1)]: dot_mask(), self.grid[(2, 3)]: dot_mask()}
        regions = grow_regions(masks, self.grid)
        self.assertEqual(len(regions), 1)
        self.assertEqual(len(regions[0].tiles), 15)

    def test_distant_tiles_stay_apart(self):
        masks = {self.grid[(0, 0)]: dot_mask(), self.grid[(5, 5)]: dot_mask()}
        regions = grow_regions(masks, self.grid)
        self.assertEqual([r.region_id for r in regions], [0, 1])
        self.assertFalse(regions[0].tiles & regions[1].tiles)

    def test_mosaic_is_clipped_to_bounds(self):
        tiles, grid = tiled(40, 40)
        regions = grow_regions({grid[(2, 2)]: dot_mask()}, grid, bounds=(40, 40))
        self.assertEqual((regions[0].mosaic.width, regions[0].mosaic.height), (24, 24))


class ComponentTests(SimpleTestCase):
    def test_diagonal_pair(self):
        mask = BinaryMask(np.eye(2, dtype=bool))
        self.assertEqual(len(connected_components(mask, 8)), 1)
        self.assertEqual(len(connected_components(mask, 4)), 2)

    def test_checkerboard(self):
        ys, xs = np.indices((4, 4))
        mask = BinaryMask((xs + ys) % 2 == 0)
        components = connected_components(mask, 4)
        self.assertEqual(len(components), 8)
        self.assertTrue(all(len(component) == 1 for component in components))
        self.assertEqual(len(connected_components(mask, 8)), 1)

    def test_bad_connectivity(self):
        with self.assertRaises(ValidationError):
            connected_components(BinaryMask.empty(2, 2), 6)

    def test_centroids(self):
        self.assertEqual(centroid({(3, 4)}), (3.0, 4.0))
        self.assertEqual(centroid({(0, 0), (2, 0)}), (1.0, 0.0))
        block = {(x, y) for x in range(10) for y in range(10)}
        self.assertEqual(centroid(block), (4.5, 4.5))
        with self.assertRaises(ValidationError):
            centroid(set())


class DetectionTests(SimpleTestCase):
    def square_region(self, offset=(512, 256), size=10):
        bits = np.zeros((32, 32), dtype=bool)
        bits[:size, :size] = True
        return Region(region_id=3, tiles=frozenset(), mosaic=BinaryMask(bits), offset=offset)

    def test_square_is_offset_into_map(self):
        [detection] = extract_detections([self.square_region()])
        self.assertEqual(detection.centroid_px, (516.5, 260.5))
        self.assertEqual(detection.area_px, 100)
        self.assertEqual(detection.region_id, 3)
        self.assertIsNone(detection.centroid_world)

    def test_world_coordinates(self):
        [detection] = extract_detections([self.square_region()], AffineGeo(100.0, 50.0, 0.5, -0.5))
        self.assertEqual(detection.centroid_world, (358.25, -80.25))

    def test_small_components_are_dropped(self):
        bits = np.zeros((8, 8), dtype=bool)
        bits[0, 0:2] = True
        self.assertEqual(detections_from_mask(BinaryMask(bits), min_area=4), [])
        self.assertEqual(len(detections_from_mask(BinaryMask(bits), min_area=0)), 1)

    def test_no_regions(self):
        self.assertEqual(extract_detections([]), [])

    def test_sorted_by_row_then_column(self):
        bits = np.zeros((40, 40), dtype=bool)
        bits[30:33, 2:5] = True
        bits[2:5, 30:33] = True
        bits[2:5, 2:5] = True
        detections = detections_from_mask(BinaryMask(bits), min_area=1)
        centroids = [d.centroid_px for d in detections]
        self.assertEqual(centroids, [(3.0, 3.0), (31.0, 3.0), (3.0, 31.0)])

    def test_building_split_across_tiles_is_one_detection(self):
        tiles, grid = tiled()
        full = np.zeros((96, 96), dtype=bool)
        full[36:44, 44:52] = True
        regions = grow_regions(crop_masks(full, tiles), grid, bounds=(96, 96))
        [detection] = extract_detections(regions, min_area=1)
        self.assertEqual(detection.centroid_px, (47.5, 39.5))
        self.assertEqual(detection.area_px, 64)

    def test_regions_agree_with_whole_map_labelling(self):
        rng = np.random.default_rng(21)
        tiles, grid = tiled()
        for _ in range(10):
            full = rng.random((96, 96)) < 0.04
            regions = grow_regions(crop_masks(full, tiles), grid, bounds=(96, 96))

            def summary(detections):
                return sorted(
                    (round(d.centroid_px[0], 6), round(d.centroid_px[1], 6), d.area_px)
                    for d in detections
                )

            stitched = summary(extract_detections(regions, min_area=1))
            whole = summary(detections_from_mask(BinaryMask(full), min_area=1))
            self.assertEqual(stitched, whole)
