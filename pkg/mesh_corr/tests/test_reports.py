import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from mesh_corr import reports
from mesh_corr.conv_net import LossRecord
from mesh_corr.utils import read_csv


class TestReports(SimpleTestCase):

    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.dir = Path(self._dir.name)

    def tearDown(self):
        self._dir.cleanup()

    def test_strain_report(self):
        stem = self.dir / 'strain'
        reports.strain_report(stem, [(1, 0.5), (2, 0.25), (3, 0.125)])
        rows = read_csv(str(stem) + '.csv')
        self.assertEqual(list(rows[0]), ['dim', 'strain'])
        self.assertEqual([r['dim'] for r in rows], ['1', '2', '3'])
        self.assertEqual(rows[2]['strain'], '0.125')
        svg = Path(str(stem) + '.svg').read_text()
        self.assertIn('<svg', svg)
        self.assertIn('Embedding strain', svg)

    def test_loss_report_without_validation(self):
        stem = self.dir / 'loss'
        history = [LossRecord(0, 2.0, None), LossRecord(1, 1.0, None)]
        reports.loss_report(stem, history)
        rows = read_csv(str(stem) + '.csv')
        self.assertEqual(list(rows[0]), ['epoch', 'train_loss', 'val_loss'])
        self.assertEqual(rows[1]['train_loss'], '1')
        self.assertEqual(rows[1]['val_loss'], '')
        self.assertTrue(Path(str(stem) + '.svg').is_file())

    def test_loss_report_with_validation(self):
        stem = self.dir / 'loss'
        history = [LossRecord(0, 2.0, 3.0), LossRecord(1, 1.0, 1.5)]
        reports.loss_report(stem, history)
        rows = read_csv(str(stem) + '.csv')
        self.assertEqual(rows[0]['val_loss'], '3')
        self.assertIn('validation', Path(str(stem) + '.svg').read_text())

    def test_error_curve_report(self):
        stem = self.dir / 'errors'
        curves = {
            'net': [(0.0, 0.0), (5.0, 0.5), (10.0, 1.0)],
            'icp': [(0.0, 0.1), (5.0, 0.6), (10.0, 0.9)],
        }
        reports.error_curve_report(stem, curves)
        rows = read_csv(str(stem) + '.csv')
        self.assertEqual(list(rows[0]), ['threshold_cm', 'net', 'icp'])
        self.assertEqual(len(rows), 3)
        self.assertEqual(rows[1], {'threshold_cm': '5', 'net': '0.5', 'icp': '0.6'})

    def test_identical_data_identical_bytes(self):
        curve = [(1, 0.5), (2, 0.25)]
        reports.strain_report(self.dir / 'a', curve)
        reports.strain_report(self.dir / 'b', curve)
        for ext in ('.csv', '.svg'):
            self.assertEqual(
                (self.dir / ('a' + ext)).read_bytes(),
                (self.dir / ('b' + ext)).read_bytes(),
            )
