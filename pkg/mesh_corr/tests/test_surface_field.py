import numpy as np
from django.test import SimpleTestCase

from mesh_corr import registry
from mesh_corr.constants import SIGNAL_GEODESIC, SIGNAL_RANDOM, SIGNAL_VERTICAL
from mesh_corr.mesh_core import Mesh, icosphere
from mesh_corr.surface_field import (
    all_pairs_geodesics,
    face_gradients,
    geodesic_center,
    geodesic_distances,
    signal_function,
)
from mesh_corr.tests.utils import combine, planar_strip, tetrahedron, tube
from mesh_corr.validators import MeshValidationError


def jittered_strip():
    strip = planar_strip(7, 3)
    rng = np.random.default_rng(11)
    v = strip.vertices.copy()
    v[:, 2] = 0.01 * rng.random(len(v))
    return Mesh(v, strip.faces)


class TestGeodesics(SimpleTestCase):

    def test_sphere_antipode(self):
        s = icosphere(3)
        far = int(np.argmin(s.vertices @ s.vertices[0]))
        self.assertTrue(np.allclose(s.vertices[far], -s.vertices[0]))
        d = geodesic_distances(s, 0).distances
        self.assertLess(abs(d[far] - np.pi) / np.pi, 0.05)
        self.assertEqual(d[0], 0.0)

    def test_plane_straight_along_axis(self):
        strip = planar_strip(20, 4)
        d = geodesic_distances(strip, 0).distances
        # vertex (20, 0) of the grid
        self.assertAlmostEqual(d[20 * 5], 1.0)

    def test_plane_near_euclidean(self):
        strip = planar_strip(20, 4)
        d = geodesic_distances(strip, 0).distances
        target = 20 * 5 + 2
        e = np.linalg.norm(strip.vertices[target] - strip.vertices[0])
        self.assertGreaterEqual(d[target], e - 1e-12)
        self.assertLess((d[target] - e) / e, 0.03)

    def test_multi_source(self):
        s = icosphere(2)
        both = geodesic_distances(s, [0, 5]).distances
        a = geodesic_distances(s, 0).distances
        b = geodesic_distances(s, 5).distances
        self.assertTrue(np.allclose(both, np.minimum(a, b)))

    def test_unreachable(self):
        m = combine(tetrahedron(), tetrahedron(offset=(5.0, 0.0, 0.0)))
        with self.assertLogs('mesh_corr.surface_field', level='WARNING'):
            field = geodesic_distances(m, 0)
        self.assertTrue(np.all(field.reachable[:4]))
        self.assertFalse(np.any(field.reachable[4:]))

    def test_all_pairs_symmetric(self):
        d = all_pairs_geodesics(icosphere(1))
        self.assertTrue(np.array_equal(d, d.T))
        self.assertTrue(np.all(np.diag(d) == 0.0))

    def test_linear_gradient(self):
        strip = planar_strip(5, 3)
        g = face_gradients(strip, strip.vertices[:, 0])
        self.assertTrue(np.allclose(g, [1.0, 0.0, 0.0]))


class TestCenter(SimpleTestCase):

    def test_brute_force(self):
        m = jittered_strip()
        d = all_pairs_geodesics(m)
        expected = int(np.argmin((d * d) @ m.vertex_areas))
        self.assertEqual(geodesic_center(m), expected)

    def test_limb_middle_third(self):
        for caps in (False, True):
            m = tube(along=12, length=1.2, caps=caps)
            p0 = geodesic_center(m)
            self.assertGreaterEqual(m.vertices[p0, 2], 0.4)
            self.assertLessEqual(m.vertices[p0, 2], 0.8)
            d = all_pairs_geodesics(m)
            objective = (d * d) @ m.vertex_areas
            self.assertAlmostEqual(objective[p0], objective.min(), places=12)

    def test_disconnected(self):
        m = combine(tetrahedron(), tetrahedron(offset=(5.0, 0.0, 0.0)))
        with self.assertRaises(MeshValidationError):
            geodesic_center(m)


class TestSignals(SimpleTestCase):

    def test_registered(self):
        for kind in (SIGNAL_GEODESIC, SIGNAL_VERTICAL, SIGNAL_RANDOM):
            self.assertIn(kind, registry.signals)
            self.assertEqual(registry.signals.get(kind).check(), [])

    def test_vertical(self):
        s = icosphere(2)
        field = signal_function(s, SIGNAL_VERTICAL)
        self.assertTrue(np.array_equal(field.values, s.vertices[:, 2]))
        self.assertEqual(field.gradients.shape, (s.n_faces, 3))
        self.assertFalse(field.randomize)

    def test_geodesic(self):
        m = jittered_strip()
        field = signal_function(m, SIGNAL_GEODESIC)
        self.assertEqual(field.center, geodesic_center(m))
        self.assertEqual(field.values[field.center], 0.0)
        self.assertTrue(np.all(field.values >= 0.0))

    def test_random(self):
        field = signal_function(icosphere(1), SIGNAL_RANDOM)
        self.assertTrue(field.randomize)
        self.assertIsNone(field.values)

    def test_restrict(self):
        s = icosphere(2)
        field = signal_function(s, SIGNAL_VERTICAL)
        lineage = np.arange(12)
        coarse = icosphere(0)
        restricted = field.restrict(coarse, lineage)
        self.assertTrue(np.array_equal(restricted.values, s.vertices[:12, 2]))
        self.assertEqual(restricted.gradients.shape, (coarse.n_faces, 3))

    def test_unknown(self):
        with self.assertRaises(registry.NotRegistered):
            signal_function(icosphere(1), 'arm_span')
