import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import SimpleTestCase

from mesh_corr.body_model import skin_vertices
from mesh_corr.conf import data_path
from mesh_corr.constants import BETA_MAX, BETA_MIN, EXTREMITIES
from mesh_corr.synth import (
    GenerationError,
    SynthSpec,
    generate_dataset,
    generate_scan,
    generate_with_retries,
    read_labels,
    read_manifest,
    read_params,
    sample_params,
    stratified_quantiles,
)
from mesh_corr.tests.utils import coarse_embedding, coarse_humanoid


STILL = dict(pose_scale=0.0, shape_sigma=0.0, heading=False, subdivisions=0)


class TestSpec(SimpleTestCase):

    def test_bundled(self):
        spec = SynthSpec.from_yaml(data_path('synth.yaml')).check()
        self.assertEqual(spec, SynthSpec())

    def test_unknown_key(self):
        with self.assertRaises(ImproperlyConfigured):
            SynthSpec.from_dict({'pose': 1.0})

    def test_out_of_range(self):
        with self.assertRaises(ImproperlyConfigured) as cm:
            SynthSpec(pose_scale=2.0, subdivisions=5).check()
        self.assertIn('mesh_corr.E040', str(cm.exception))
        self.assertIn('mesh_corr.E042', str(cm.exception))

    def test_filter_settings(self):
        with self.assertRaises(ImproperlyConfigured):
            SynthSpec(filters=('Blur',)).check()
        with self.assertRaises(ImproperlyConfigured):
            SynthSpec(filter_options={'Weld': {'strength': 2}}).check()
        with self.assertRaises(ImproperlyConfigured):
            SynthSpec(amputation_probability=1.5).check()
        weld, occlude, amputate = SynthSpec(weld=False, viewpoints=4).build_filters()
        self.assertFalse(weld.enabled)
        self.assertEqual(occlude.viewpoints, 4)
        self.assertEqual(amputate.probability, 0.1)


class TestSampling(SimpleTestCase):

    def test_quantiles_stratified(self):
        q = stratified_quantiles(10, 4, np.random.default_rng(0))
        for k in range(4):
            self.assertEqual(sorted(np.floor(q[:, k] * 10).astype(int).tolist()), list(range(10)))

    def test_params_in_range(self):
        body = coarse_humanoid()
        tree = body.tree
        for seed in range(5):
            p = sample_params(SynthSpec(), body, np.random.default_rng(seed))
            self.assertTrue(np.all(p.theta[1:] >= tree.theta_min[1:] - 1e-12))
            self.assertTrue(np.all(p.theta[1:] <= tree.theta_max[1:] + 1e-12))
            self.assertEqual(tuple(p.theta[0, :2]), (0.0, 0.0))
            self.assertTrue(np.all((p.beta > BETA_MIN) & (p.beta < BETA_MAX)))

    def test_still_params(self):
        body = coarse_humanoid()
        p = sample_params(SynthSpec(**STILL), body, np.random.default_rng(3))
        priors = body.priors()
        self.assertTrue(np.array_equal(p.theta[1:], priors.theta_star[1:]))
        self.assertTrue(np.all(p.theta[0] == 0.0))
        self.assertTrue(np.all(p.beta == 1.0))


class TestScans(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.body = coarse_humanoid()
        cls.emb = coarse_embedding()

    def test_zero_variance(self):
        spec = SynthSpec(filters=(), **STILL)
        scan = generate_scan(spec, self.body, self.emb, np.random.default_rng(0))
        posed = skin_vertices(self.body.tree, self.body.template.vertices, scan.params)
        self.assertTrue(np.allclose(scan.mesh.vertices, posed))
        self.assertTrue(np.allclose(scan.rest, self.body.template.vertices))
        self.assertTrue(np.allclose(scan.labels.values, self.emb.omega))
        self.assertFalse(scan.labels.predicted)

    def test_subdivided_labels(self):
        spec = SynthSpec(filters=(), **dict(STILL, subdivisions=1))
        scan = generate_scan(spec, self.body, self.emb, np.random.default_rng(0))
        n = self.body.template.n_vertices
        self.assertGreater(scan.mesh.n_vertices, n)
        self.assertTrue(np.allclose(scan.labels.values[:n], self.emb.omega))

    def test_amputate_everything_listed(self):
        spec = SynthSpec(filters=('Amputate',), amputation_probability=1.0, **STILL)
        scan = generate_with_retries(spec, self.body, self.emb, 5)
        self.assertEqual(scan.notes['Amputate'], "+".join(EXTREMITIES))
        self.assertLess(scan.mesh.n_vertices, self.body.template.n_vertices)
        tree = self.body.tree
        rest = self.body.template.vertices
        for joint in ('neck', 'l_wrist', 'r_wrist', 'l_ankle', 'r_ankle'):
            tip = tree.tips[tree.joint(joint)]
            before = np.linalg.norm(rest - tip, axis=1).min()
            after = np.linalg.norm(scan.rest - tip, axis=1).min()
            self.assertGreater(after, before)

    def test_retry_budget(self):
        spec = SynthSpec(
            filters=('Amputate',),
            amputation_probability=1.0,
            filter_options={'Amputate': {'radius': (5.0, 9.0)}},
            max_retries=2,
            **STILL,
        )
        with self.assertRaises(GenerationError) as cm:
            generate_with_retries(spec, self.body, self.emb, 77)
        self.assertEqual(cm.exception.seed, 77)


class TestDataset(SimpleTestCase):

    def test_deterministic(self):
        body = coarse_humanoid()
        emb = coarse_embedding()
        spec = SynthSpec(seed=4, subdivisions=0, viewpoints=4, amputation_probability=0.5)
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            rows_a = generate_dataset(spec, 2, body, emb, a)
            rows_b = generate_dataset(spec, 2, body, emb, b)
            self.assertEqual(rows_a, rows_b)
            self.assertEqual(len(rows_a), 2)
            for row in rows_a:
                for k in ('mesh', 'labels', 'rest', 'params'):
                    self.assertEqual((Path(a) / row[k]).read_bytes(), (Path(b) / row[k]).read_bytes())
            manifest = read_manifest(Path(a) / 'manifest.csv')
            self.assertEqual([r['id'] for r in manifest], ['scan_00000', 'scan_00001'])
            first = manifest[0]
            self.assertEqual(read_labels(first['labels']).shape[1], emb.d)
            read_params(first['params']).validate()
