# -*- coding: utf-8 -*-
from unittest import TestCase
import logging
import os
import shutil
import subprocess
import tempfile

import numpy as np

logger = logging.getLogger(__name__)


class BsbuTestCase(TestCase):
    def setUp(self):
        logging.basicConfig(format=('%(asctime)s - %(levelname)s - '
                                    '%(name)s - %(message)s'),
                            level=logging.INFO)
        self.project_root = os.path.abspath(os.path.realpath(os.path.join(
            os.path.dirname(os.path.realpath(__file__)), os.pardir, os.pardir)))
        # Directory where everything temporary and test-related is written
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        try:
            shutil.rmtree(self.test_dir)
        except OSError:
            subprocess.call(["rm", "-rf", self.test_dir])

    def assertArrayAlmostEqual(self, expected, actual, atol=1e-12):
        expected = np.asarray(expected, dtype=float)
        actual = np.asarray(actual, dtype=float)
        self.assertEqual(expected.shape, actual.shape)
        self.assertTrue(np.allclose(expected, actual, rtol=0.0, atol=atol),
                        'max abs difference %g exceeds %g' %
                        (np.max(np.abs(expected - actual), initial=0.0), atol))

    def assertNondecreasing(self, values, tol=1e-8):
        diffs = np.diff(np.asarray(values, dtype=float))
        self.assertGreaterEqual(np.min(diffs, initial=0.0), -tol)
