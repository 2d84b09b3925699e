import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from mesh_corr.decimate import (
    DecimationError,
    DecimationFloorError,
    PoolingMap,
    PoolingShapeError,
    build_pooling_map,
    decimate_levels,
    max_pool,
    mean_pool,
    qslim_decimate,
    replay_trace,
    target_for_ratio,
    unpool,
)
from mesh_corr.mesh_core import icosphere
from mesh_corr.tests.utils import planar_strip


def replay_features(trace, f):
    '''
    Fold features collapse by collapse, the way the trace records.
    '''
    rows = {i: f[i].copy() for i in range(trace.source_edges)}
    for c in trace.collapses:
        edge = rows.pop(c.edge)
        for into, src, w_into, w_src, w_edge in c.merges:
            rows[into] = w_into * rows[into] + w_src * rows.pop(src) + w_edge * edge
    return np.array([rows[int(e)] for e in trace.edge_order])


class TestDecimate(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.sphere = icosphere(2)
        cls.coarse, cls.trace = qslim_decimate(cls.sphere, 300)

    def test_exact_count(self):
        self.assertEqual(self.coarse.n_edges, 300)
        self.assertEqual(len(self.trace.edge_order), 300)
        self.assertEqual(len(self.trace.vertex_lineage), self.coarse.n_vertices)

    def test_topology_kept(self):
        self.assertTrue(self.coarse.is_closed_manifold())
        self.assertEqual(self.coarse.genus(), 0)

    def test_replay(self):
        again = replay_trace(self.sphere, self.trace)
        self.assertTrue(np.array_equal(again.faces, self.coarse.faces))
        self.assertTrue(np.allclose(again.vertices, self.coarse.vertices))

    def test_deterministic(self):
        coarse, trace = qslim_decimate(self.sphere, 300)
        self.assertTrue(np.array_equal(coarse.faces, self.coarse.faces))
        self.assertEqual(len(trace), len(self.trace))

    def test_shape_kept(self):
        r = np.linalg.norm(self.coarse.vertices, axis=1)
        self.assertTrue(np.all(np.abs(r - 1.0) < 0.1))

    def test_no_change(self):
        m = icosphere(1)
        coarse, trace = qslim_decimate(m, m.n_edges)
        self.assertIs(coarse, m)
        self.assertEqual(len(trace), 0)

    def test_target_too_large(self):
        with self.assertRaises(DecimationError):
            qslim_decimate(self.sphere, self.sphere.n_edges + 1)

    def test_target_below_floor(self):
        with self.assertRaises(DecimationFloorError):
            qslim_decimate(self.sphere, 5)

    def test_open_mesh(self):
        strip = planar_strip(20, 4)
        coarse, _ = qslim_decimate(strip, 200)
        self.assertEqual(coarse.n_edges, 200)
        self.assertEqual(coarse.boundary_loop_count(), 1)
        self.assertTrue(np.allclose(coarse.vertices[:, 2], 0.0))

    def test_levels(self):
        meshes, traces = decimate_levels(self.sphere, 2, 4)
        self.assertEqual(len(meshes), 2)
        self.assertEqual(len(traces), 1)
        self.assertEqual(meshes[1].n_edges, target_for_ratio(self.sphere, 4))
        self.assertEqual(meshes[1].n_edges % 3, 0)


class TestPooling(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.sphere = icosphere(2)
        rng = np.random.default_rng(7)
        cls.runs = []
        for _ in range(3):
            target = 3 * int(rng.integers(60, 150))
            coarse, trace = qslim_decimate(cls.sphere, target)
            cls.runs.append((coarse, trace, build_pooling_map(trace)))

    def test_rows_stochastic(self):
        for coarse, _, D in self.runs:
            self.assertEqual(D.matrix.shape, (coarse.n_edges, self.sphere.n_edges))
            self.assertTrue(np.allclose(np.asarray(D.matrix.sum(axis=1)).reshape(-1), 1.0, atol=1e-9))
            self.assertTrue(np.all(D.matrix.data >= 0))

    def test_mean_pool_matches_replay(self):
        rng = np.random.default_rng(3)
        f = rng.standard_normal((self.sphere.n_edges, 5))
        for _, trace, D in self.runs:
            self.assertTrue(np.allclose(mean_pool(D, f), replay_features(trace, f)))

    def test_every_source_edge_pooled(self):
        for _, trace, D in self.runs:
            columns = np.asarray(D.matrix.sum(axis=0)).reshape(-1)
            self.assertTrue(np.all(columns > 0))
            for c in trace.collapses:
                for merge in c.merges:
                    self.assertAlmostEqual(sum(merge[2:]), 1.0)

    def test_many_decimations(self):
        sphere = icosphere(1)
        rng = np.random.default_rng(11)
        f = rng.standard_normal((sphere.n_edges, 3))
        c = np.full((sphere.n_edges, 1), -2.0)
        for _ in range(200):
            _, trace = qslim_decimate(sphere, 3 * int(rng.integers(14, 40)))
            D = build_pooling_map(trace)
            self.assertTrue(np.allclose(np.asarray(D.matrix.sum(axis=1)).reshape(-1), 1.0, atol=1e-9))
            self.assertTrue(np.allclose(mean_pool(D, f), replay_features(trace, f)))
            self.assertTrue(np.allclose(unpool(D, mean_pool(D, c)), -2.0))

    def test_constants_preserved(self):
        for coarse, _, D in self.runs:
            c = np.full((self.sphere.n_edges, 2), 3.5)
            pooled = mean_pool(D, c)
            self.assertTrue(np.allclose(pooled, 3.5))
            self.assertTrue(np.allclose(unpool(D, pooled), 3.5))
            out, src = max_pool(D, c)
            self.assertTrue(np.allclose(out, 3.5))
            self.assertEqual(src.shape, (coarse.n_edges, 2))

    def test_max_pool_picks_support(self):
        rng = np.random.default_rng(5)
        f = rng.standard_normal((self.sphere.n_edges, 3))
        _, _, D = self.runs[0]
        out, src = max_pool(D, f)
        for r in range(D.n):
            for ch in range(3):
                self.assertIn(src[r, ch], D.support[r])
                self.assertEqual(out[r, ch], f[src[r, ch], ch])
                self.assertEqual(out[r, ch], f[D.support[r], ch].max())

    def test_uncovered_edge_copies_nearest(self):
        matrix = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        midpoints = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.2, 0.0, 0.0]])
        D = PoolingMap(matrix, midpoints)
        out = unpool(D, np.array([[1.0], [2.0]]))
        self.assertTrue(np.allclose(out.reshape(-1), [1.0, 2.0, 2.0]))

    def test_wrong_rows(self):
        _, _, D = self.runs[0]
        with self.assertRaises(PoolingShapeError):
            mean_pool(D, np.zeros((D.m + 1, 2)))
        with self.assertRaises(PoolingShapeError):
            unpool(D, np.zeros((D.m, 2)))

    def test_saved_map(self):
        _, trace, D = self.runs[0]
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / 'level0.pool'
            D.save(path)
            back = PoolingMap.load(path, trace.source_midpoints)
        self.assertEqual((back.n, back.m), (D.n, D.m))
        self.assertTrue(np.allclose(back.matrix.toarray(), D.matrix.toarray(), atol=1e-6))
