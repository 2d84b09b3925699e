import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from mesh_corr.constants import PATCH_SIZE, SIGNAL_RANDOM, SIGNAL_VERTICAL
from mesh_corr.conv_net import (
    MeshHierarchy,
    NonManifoldEdgeError,
    UMeshModel,
    build_patch_table,
    conv,
    forward,
    load_checkpoint,
    loss_and_gradients,
    mds_loss,
    patch_rings,
    predict_scan,
    prepare_sample,
    save_checkpoint,
    split_samples,
    train,
)
from mesh_corr.mesh_core import Mesh, icosphere
from mesh_corr.surface_field import signal_function
from mesh_corr.tests.utils import planar_strip
from mesh_corr.utils import MeshCorrError


QUARTER_TURN = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class TestPatches(SimpleTestCase):

    def test_closed_rows_distinct(self):
        s = icosphere(1)
        rings = patch_rings(s)
        self.assertEqual(rings.shape, (s.n_edges, PATCH_SIZE))
        self.assertTrue(np.array_equal(rings[:, 0], np.arange(s.n_edges)))
        for row in rings:
            self.assertEqual(len(set(row.tolist())), PATCH_SIZE)

    def test_first_ring_shares_faces(self):
        s = icosphere(1)
        rings = patch_rings(s)
        for e, row in enumerate(rings):
            faces = set(s.edge_faces[e].tolist())
            for r in row[1:5]:
                self.assertTrue(faces & set(s.edge_faces[r].tolist()))

    def test_boundary_repeats_centre(self):
        strip = planar_strip(4, 2)
        rings = patch_rings(strip)
        boundary = np.flatnonzero(strip.boundary_edges)
        for e in boundary:
            self.assertGreaterEqual(np.count_nonzero(rings[e] == e), 1 + 2 + 4)

    def test_non_manifold(self):
        v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
        f = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
        with self.assertRaises(NonManifoldEdgeError):
            patch_rings(Mesh(v, f))

    def test_turn_invariant(self):
        s = icosphere(2)
        turned = Mesh(s.vertices @ QUARTER_TURN.T, s.faces)
        a = build_patch_table(s, signal_function(s, SIGNAL_VERTICAL))
        b = build_patch_table(turned, signal_function(turned, SIGNAL_VERTICAL))
        self.assertTrue(np.array_equal(a.index, b.index))

    def test_random_orientation_is_seeded(self):
        s = icosphere(1)
        signal = signal_function(s, SIGNAL_RANDOM)
        a = build_patch_table(s, signal, np.random.default_rng(4))
        b = build_patch_table(s, signal, np.random.default_rng(4))
        self.assertTrue(np.array_equal(a.index, b.index))
        self.assertTrue(np.array_equal(np.sort(a.index, axis=1), np.sort(a.rings, axis=1)))

    def test_conv_gathers_patches(self):
        s = icosphere(1)
        table = build_patch_table(s, signal_function(s, SIGNAL_VERTICAL))
        rng = np.random.default_rng(0)
        f = rng.standard_normal((s.n_edges, 2))
        K = rng.standard_normal((PATCH_SIZE * 2, 3))
        bias = rng.standard_normal(3)
        out = conv(table, f, K, bias)
        for e in (0, 17, 100):
            expected = f[table.index[e]].reshape(-1) @ K + bias
            self.assertTrue(np.allclose(out[e], expected))


class TestNetwork(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.hierarchy = MeshHierarchy.build(icosphere(2), 2, 4, SIGNAL_VERTICAL)

    def test_hierarchy(self):
        self.assertEqual(self.hierarchy.levels, 2)
        self.assertEqual([m.n_edges for m in self.hierarchy.meshes], [480, 120])
        self.assertEqual(self.hierarchy.pools[0].matrix.shape, (120, 480))
        self.assertEqual(self.hierarchy.features().shape, (480, 6))

    def test_forward_shape_and_seed(self):
        a = forward(UMeshModel(2, 4, d=3, seed=1), self.hierarchy)
        b = forward(UMeshModel(2, 4, d=3, seed=1), self.hierarchy)
        self.assertEqual(a.values.shape, (480, 3))
        self.assertTrue(a.predicted)
        self.assertTrue(np.array_equal(a.values, b.values))

    def test_levels_mismatch(self):
        with self.assertRaises(MeshCorrError):
            forward(UMeshModel(3, 4, d=3, seed=1), self.hierarchy)

    def test_widths_mismatch(self):
        with self.assertRaises(MeshCorrError):
            UMeshModel(2, [4, 4, 4])

    def test_loss(self):
        p = torch.zeros((2, 2), dtype=torch.float64)
        t = torch.tensor([[3.0, 4.0], [0.0, 0.0]], dtype=torch.float64)
        self.assertAlmostEqual(mds_loss(p, t).item(), 2.5, places=9)

    def test_gradients_match_differences(self):
        model = UMeshModel(2, 3, d=2, seed=3).double()
        f0 = self.hierarchy.features()
        truth = np.random.default_rng(5).standard_normal((480, 2))
        _, grads = loss_and_gradients(model, self.hierarchy, f0, truth)
        x = torch.as_tensor(f0)
        t = torch.as_tensor(truth)
        h = 1e-6
        params = dict(model.named_parameters())
        for name in ('down.0.conv1.K', 'up.0.conv2.bias', 'out.K'):
            p = params[name]
            flat = p.data.view(-1)
            for k in (0, flat.numel() // 2, flat.numel() - 1):
                with torch.no_grad():
                    old = flat[k].item()
                    flat[k] = old + h
                    up = mds_loss(model(self.hierarchy, x), t).item()
                    flat[k] = old - h
                    down = mds_loss(model(self.hierarchy, x), t).item()
                    flat[k] = old
                numeric = (up - down) / (2 * h)
                analytic = grads[name].reshape(-1)[k]
                self.assertLess(abs(numeric - analytic), 1e-8 + 1e-4 * abs(analytic), msg=name)

    def test_checkpoint(self):
        model = UMeshModel(2, [4, 5], d=3, seed=2)
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / 'model.ckpt'
            save_checkpoint(model, path, 4, 480, SIGNAL_VERTICAL)
            back, meta = load_checkpoint(path)
            bad = Path(d) / 'bad.ckpt'
            bad.write_bytes(path.read_bytes()[:-4])
            with self.assertRaises(MeshCorrError):
                load_checkpoint(bad)
            bad.write_bytes(b'XXXX' + path.read_bytes()[4:])
            with self.assertRaises(MeshCorrError):
                load_checkpoint(bad)
        self.assertEqual(meta, {'pool_ratio': 4, 'm0': 480, 'signal': SIGNAL_VERTICAL})
        self.assertEqual(back.architecture(), model.architecture())
        self.assertTrue(np.allclose(
            forward(back, self.hierarchy).values,
            forward(model, self.hierarchy).values,
        ))


class TestTraining(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scans = [icosphere(3, radius=r) for r in (0.9, 1.0, 1.1)]
        cls.samples = [
            prepare_sample(str(k), s, s.vertices, 480, 2, 4, SIGNAL_VERTICAL)
            for k, s in enumerate(cls.scans)
        ]

    def test_sample(self):
        sample = self.samples[0]
        coarse = sample.hierarchy.meshes[0]
        self.assertEqual(coarse.n_edges, 480)
        self.assertEqual(sample.features.shape, (480, 6))
        self.assertEqual(sample.labels.shape, (480, 3))
        # labelled by the source vertices each coarse vertex descends from
        r = np.linalg.norm(sample.labels, axis=1)
        self.assertTrue(np.all(r <= 0.9 + 1e-9))
        self.assertTrue(np.all(r > 0.8))

    def test_split(self):
        train_a, val_a = split_samples(10, 0.2, 1.0, np.random.default_rng(1))
        train_b, val_b = split_samples(10, 0.2, 0.5, np.random.default_rng(1))
        self.assertEqual(len(val_a), 2)
        self.assertFalse(set(train_a) & set(val_a))
        self.assertTrue(np.array_equal(val_a, val_b))
        self.assertTrue(set(train_b) <= set(train_a))
        self.assertEqual(len(train_b), 4)

    def test_train_deterministic(self):
        runs = []
        for _ in range(2):
            model = UMeshModel(2, 4, d=3, seed=0)
            _, history = train(model, self.samples, epochs=3, batch=2, seed=9, validation_fraction=0.34, workers=1)
            runs.append(history)
        self.assertEqual(len(runs[0]), 3)
        for a, b in zip(*runs):
            self.assertTrue(np.isfinite(a.train_loss))
            self.assertAlmostEqual(a.train_loss, b.train_loss, places=6)
            self.assertAlmostEqual(a.val_loss, b.val_loss, places=6)

    def test_predict_every_vertex(self):
        model = UMeshModel(2, 4, d=3, seed=0)
        scan = self.scans[1]
        field = predict_scan(model, scan, 480, 4, SIGNAL_VERTICAL)
        self.assertEqual(field.values.shape, (scan.n_vertices, 3))
        self.assertEqual(field.on, 'vertices')
