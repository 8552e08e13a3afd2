import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import SimpleTestCase, override_settings

from footprints.backends import HeuristicClassifier, OracleClassifier, OracleSegmenter
from footprints.config import (
    build_cascade_config,
    default_config,
    dump_config,
    load_config,
    resolve_config,
    resolve_workers,
)
from footprints.raster import BinaryMask, save_mask


class ResolveConfigTests(SimpleTestCase):
    def test_defaults(self):
        resolved = default_config()
        self.assertEqual(resolved["schedule"], {"levels": [[1792, 768], [256, 256]], "depth": 2})
        self.assertEqual(resolved["thresholds"], [0.5, 0.35])
        self.assertEqual([c["kind"] for c in resolved["classifiers"]], ["heuristic", "heuristic"])
        self.assertEqual(resolved["segmenter"]["kind"], "heuristic")
        self.assertEqual(resolved["pad_value"], 255)
        self.assertEqual(resolved["stitch"], {"connectivity": 8, "min_area": 6})

    def test_unknown_keys_are_rejected(self):
        with self.assertRaisesMessage(ImproperlyConfigured, "colour"):
            resolve_config({"colour": "red"})
        with self.assertRaisesMessage(ImproperlyConfigured, "radius"):
            resolve_config({"stitch": {"radius": 3}})
        with self.assertRaisesMessage(ImproperlyConfigured, "gpu"):
            resolve_config({"segmenter": {"kind": "heuristic", "gpu": True}})
        with self.assertRaisesMessage(ImproperlyConfigured, "recall"):
            resolve_config(
                {
                    "segmenter": {"kind": "oracle", "error_model": {"recall": 0.9}},
                    "truth_mask": "m.png",
                }
            )

    def test_schema_version(self):
        with self.assertRaises(ImproperlyConfigured):
            resolve_config({"schema_version": 2})

    def test_presets(self):
        resolved = resolve_config(
            {"schedule": {"preset": 4}, "classifiers": [{}, {}, {}, {"kind": "always"}]}
        )
        self.assertEqual(resolved["schedule"]["depth"], 4)
        self.assertEqual(resolved["thresholds"], [0.5, 0.5, 0.5, 0.35])
        self.assertEqual(resolved["classifiers"][3]["kind"], "always")
        self.assertEqual(resolve_config({"schedule": {"preset": 0}})["classifiers"], [])
        with self.assertRaises(ImproperlyConfigured):
            resolve_config({"schedule": {"preset": 2, "depth": 1}})

    def test_classifier_count(self):
        with self.assertRaises(ImproperlyConfigured):
            resolve_config({"classifiers": [{}]})

    def test_unknown_kind_and_missing_command(self):
        with self.assertRaises(ImproperlyConfigured):
            resolve_config({"segmenter": {"kind": "neural"}})
        with self.assertRaises(ImproperlyConfigured):
            resolve_config({"segmenter": {"kind": "external"}})

    def test_growing_levels(self):
        with self.assertRaises(ImproperlyConfigured):
            resolve_config({"schedule": {"levels": [[256, 256], [512, 512]]}})

    def test_dump_is_stable(self):
        self.assertEqual(dump_config(default_config()), dump_config(resolve_config({})))
        self.assertEqual(json.loads(dump_config(default_config())), default_config())


class LoadConfigTests(SimpleTestCase):
    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config("/nonexistent/cascade.json")

    def test_bad_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cascade.json"
            path.write_text("{not json")
            with self.assertRaises(ImproperlyConfigured):
                load_config(path)

    def test_no_path_means_defaults(self):
        self.assertEqual(load_config(None), default_config())


class WorkersTests(SimpleTestCase):
    @override_settings(CASCADE_TILER_THREADS=None)
    def test_config_value_is_last_resort(self):
        self.assertEqual(resolve_workers(None, 3), 3)

    @override_settings(CASCADE_TILER_THREADS=4)
    def test_environment_beats_config(self):
        self.assertEqual(resolve_workers(None, 3), 4)

    @override_settings(CASCADE_TILER_THREADS=4)
    def test_flag_beats_environment(self):
        self.assertEqual(resolve_workers(2, 3), 2)

    def test_non_positive(self):
        with self.assertRaises(ImproperlyConfigured):
            resolve_workers(0)


class BuildCascadeConfigTests(SimpleTestCase):
    def test_heuristic_defaults(self):
        cfg = build_cascade_config(default_config(), workers=2)
        self.assertEqual(cfg.workers, 2)
        self.assertTrue(all(isinstance(c, HeuristicClassifier) for c in cfg.classifiers))
        self.assertEqual(cfg.classifiers[0].tile_size, (1792, 768))

    def test_oracle_reads_truth_next_to_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            bits = np.zeros((16, 16), dtype=bool)
            bits[2:5, 2:5] = True
            save_mask(BinaryMask(bits), Path(tmp) / "truth.png")
            resolved = resolve_config(
                {
                    "schedule": {"levels": [[16, 16], [8, 8]]},
                    "classifiers": [{"kind": "oracle"}, {"kind": "oracle"}],
                    "segmenter": {"kind": "oracle"},
                    "truth_mask": "truth.png",
                }
            )
            cfg = build_cascade_config(resolved, base_dir=tmp)
        self.assertIsInstance(cfg.classifiers[0], OracleClassifier)
        self.assertIsInstance(cfg.segmenter, OracleSegmenter)
        self.assertEqual(int(cfg.segmenter.bits.sum()), 9)

    def test_oracle_without_truth(self):
        resolved = resolve_config({"segmenter": {"kind": "oracle"}})
        with self.assertRaises(ImproperlyConfigured):
            build_cascade_config(resolved)

    def test_always_cannot_segment(self):
        resolved = resolve_config({"segmenter": {"kind": "always"}})
        with self.assertRaises(ImproperlyConfigured):
            build_cascade_config(resolved)
