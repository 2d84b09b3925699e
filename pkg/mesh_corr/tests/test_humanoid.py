import numpy as np
from django.test import SimpleTestCase

from mesh_corr.humanoid import voxel_set, voxel_surface
from mesh_corr.tests.utils import coarse_humanoid


class TestHumanoid(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.body = coarse_humanoid()

    def test_closed_genus_zero(self):
        m = self.body.template
        self.assertTrue(m.is_closed_manifold())
        self.assertEqual(m.genus(), 0)
        self.assertEqual(m.face_components()[0], 1)

    def test_standing(self):
        z = self.body.template.vertices[:, 2]
        self.assertLess(z.min(), 0.1)
        self.assertTrue(1.5 < z.max() < 1.8)

    def test_skin_bound(self):
        tree = self.body.tree
        w = tree.weights
        self.assertEqual(w.shape, (self.body.template.n_vertices, 16))
        self.assertTrue(np.all(w >= 0.0))
        self.assertTrue(np.allclose(w.sum(axis=1), 1.0))
        self.assertTrue(np.all(np.any(w > 0.0, axis=0)))

    def test_top_follows_neck(self):
        top = int(np.argmax(self.body.template.vertices[:, 2]))
        self.assertEqual(self.body.tree.names[self.body.tree.segments[top]], 'neck')

    def test_hand_follows_wrist(self):
        left = int(np.argmax(self.body.template.vertices[:, 0]))
        self.assertEqual(self.body.tree.names[self.body.tree.segments[left]], 'l_wrist')

    def test_voxel_faces_outward(self):
        m = voxel_surface({(0, 0, 0)}, size=1.0, resolution=2)
        self.assertTrue(m.is_closed_manifold())
        centroids = m.face_centroids - 0.5
        self.assertTrue(np.all((m.face_normals * centroids).sum(axis=1) > 0.0))

    def test_resolution_scales(self):
        cells = voxel_set()
        a = voxel_surface(cells, resolution=1)
        b = voxel_surface(cells, resolution=2)
        self.assertEqual(b.n_faces, 4 * a.n_faces)
