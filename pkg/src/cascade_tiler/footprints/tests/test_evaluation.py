import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings

from footprints.enums import ChangeKind
from footprints.evaluation import change_detect, dice, f1, match, masks_identical, mosaic_masks
from footprints.pyramid import TileRect, TileRef
from footprints.raster import BinaryMask
from footprints.stitch import Detection


def at_world(x, y):
    return Detection(centroid_px=(0.0, 0.0), area_px=1, centroid_world=(x, y))


def settlement(count=22, x0=500000.0, y0=722000.0, spacing=40.0):
    return [at_world(x0 + spacing * (i % 5), y0 + spacing * (i // 5)) for i in range(count)]


class F1Tests(SimpleTestCase):
    def test_reference_values(self):
        self.assertAlmostEqual(f1(53, 0, 1), 106 / 107)
        self.assertEqual(round(f1(53, 0, 1), 2), 0.99)
        self.assertEqual(f1(1, 1, 1), 0.5)
        self.assertEqual(f1(0, 0, 0), 1.0)

    def test_symmetric_and_monotone(self):
        for tp in range(5):
            for fp in range(5):
                for fn in range(5):
                    self.assertEqual(f1(tp, fp, fn), f1(tp, fn, fp))
                    if tp:
                        self.assertGreaterEqual(f1(tp, fp, fn), f1(tp, fp + 1, fn))

    def test_negative_counts(self):
        with self.assertRaises(ValidationError):
            f1(-1, 0, 0)


class MatchTests(SimpleTestCase):
    def test_identical_sets(self):
        points = [(10.0, 10.0), (100.0, 40.0), (300.0, 300.0)]
        result = match(points, points, 15)
        self.assertEqual((result.tp, result.fp, result.fn), (3, 0, 0))

    def test_no_detections(self):
        truths = [(float(i * 50), 0.0) for i in range(54)]
        result = match([], truths, 15)
        self.assertEqual((result.tp, result.fp, result.fn), (0, 0, 54))
        self.assertEqual(result.recall, 0.0)

    def test_equidistant_tie_goes_to_lower_truth(self):
        result = match([(5.0, 0.0)], [(0.0, 0.0), (10.0, 0.0)], 15)
        self.assertEqual((result.tp, result.fp, result.fn), (1, 0, 1))
        self.assertEqual(result.pairs[0].truth, 0)

    def test_pairs_beyond_radius_are_ignored(self):
        result = match([(0.0, 0.0)], [(20.0, 0.0)], 15)
        self.assertEqual((result.tp, result.fp, result.fn), (0, 1, 1))

    def test_closest_pair_wins(self):
        result = match([(0.0, 0.0), (9.0, 0.0)], [(10.0, 0.0)], 15)
        self.assertEqual(result.pairs[0].detection, 1)

    def test_accepts_detections(self):
        detection = Detection(centroid_px=(4.0, 4.0), area_px=30)
        self.assertEqual(match([detection], [(5.0, 5.0)], 15).tp, 1)

    def test_tp_never_exceeds_smaller_side(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            dets = rng.uniform(0, 100, size=(int(rng.integers(0, 15)), 2))
            truths = rng.uniform(0, 100, size=(int(rng.integers(0, 15)), 2))
            result = match([tuple(p) for p in dets], [tuple(p) for p in truths], 15)
            self.assertLessEqual(result.tp, min(len(dets), len(truths)))

    def test_bad_radius(self):
        with self.assertRaises(ValidationError):
            match([], [], 0)


class DiceTests(SimpleTestCase):
    def test_reference_values(self):
        a = BinaryMask(np.array([[True, True, False]]))
        b = BinaryMask(np.array([[False, True, True]]))
        self.assertEqual(dice(a, b), 0.5)
        self.assertEqual(dice(a, a), 1.0)
        self.assertEqual(dice(a, BinaryMask(np.array([[False, False, True]]))), 0.0)
        self.assertEqual(dice(BinaryMask.empty(3, 1), BinaryMask.empty(3, 1)), 1.0)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = BinaryMask(rng.random((12, 9)) < 0.3)
            b = BinaryMask(rng.random((12, 9)) < 0.3)
            self.assertEqual(dice(a, b), dice(b, a))
            self.assertTrue(0.0 <= dice(a, b) <= 1.0)

    def test_size_mismatch(self):
        with self.assertRaises(ValidationError):
            dice(BinaryMask.empty(2, 2), BinaryMask.empty(3, 2))


class MosaicTests(SimpleTestCase):
    def test_padding_is_cut_off(self):
        tile = TileRef(1, 0, 0, TileRect(0, 0, 4, 4))
        mosaic = mosaic_masks({tile: BinaryMask(np.ones((4, 4), dtype=bool))}, 3, 2)
        self.assertEqual((mosaic.width, mosaic.height, mosaic.count), (3, 2, 6))

    def test_identical_by_rect(self):
        mask = BinaryMask(np.eye(4, dtype=bool))
        first = {TileRef(2, 0, 0, TileRect(0, 0, 4, 4)): mask}
        second = {TileRef(3, 0, 0, TileRect(0, 0, 4, 4)): mask}
        self.assertTrue(masks_identical(first, second))
        self.assertFalse(masks_identical(first, {}))


class ChangeDetectTests(SimpleTestCase):
    def test_same_epochs_have_no_changes(self):
        points = settlement()
        report = change_detect(points, points, radius=10, cluster_dist=300)
        self.assertFalse(report.has_changes)
        self.assertEqual(report.clusters, [])

    def test_lost_settlement(self):
        report = change_detect(settlement(), [], radius=10, cluster_dist=300)
        self.assertEqual(len(report.disappeared), 1)
        self.assertEqual(report.disappeared[0].size, 22)
        self.assertEqual(report.disappeared[0].kind, ChangeKind.DISAPPEARED)
        self.assertEqual(report.appeared, ())

    def test_clusters_are_listed_largest_first(self):
        hamlet = settlement(count=3, x0=510000.0)
        report = change_detect(settlement() + hamlet, [], radius=10, cluster_dist=300)
        self.assertEqual([cluster.size for cluster in report.disappeared], [22, 3])
        self.assertEqual(report.disappeared[1].centroid, (510040.0, 722000.0))

    def test_moved_building(self):
        before = [at_world(100.0, 100.0), at_world(500.0, 500.0)]
        after = [at_world(100.0, 100.0), at_world(525.0, 500.0)]
        report = change_detect(before, after, radius=10, cluster_dist=300)
        self.assertEqual(len(report.disappeared), 1)
        self.assertEqual(len(report.appeared), 1)
        self.assertEqual(report.appeared[0].centroid, (525.0, 500.0))

    @override_settings(CASCADE_CHANGE_RADIUS=50, CASCADE_CLUSTER_DIST=300)
    def test_defaults_come_from_settings(self):
        before = [at_world(500.0, 500.0)]
        after = [at_world(525.0, 500.0)]
        report = change_detect(before, after)
        self.assertFalse(report.has_changes)
        self.assertEqual(report.radius, 50.0)

    def test_missing_world_coordinates(self):
        with self.assertRaises(ValidationError):
            change_detect([Detection(centroid_px=(1.0, 1.0), area_px=4)], [])

    def test_report_dict(self):
        report = change_detect(settlement(count=2), [], radius=10, cluster_dist=300)
        data = report.to_dict()
        self.assertTrue(data["changes"])
        self.assertEqual(data["disappeared"][0]["kind"], "disappeared")
        self.assertEqual(data["disappeared"][0]["size"], 2)
