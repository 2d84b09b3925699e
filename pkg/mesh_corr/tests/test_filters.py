import numpy as np
from django.test import SimpleTestCase

from mesh_corr import registry
from mesh_corr.decorators import register
from mesh_corr.filters import Filter
from mesh_corr.filters_scan import Amputate, Occlude, Weld
from mesh_corr.mesh_core import EmptyMeshError, icosphere
from mesh_corr.scan_ops import (
    ScanContext,
    ScanState,
    apply_face_mask,
    contact_pairs,
    occlude,
    visible_faces,
    weld,
)
from mesh_corr.tests.utils import combine


def touching_spheres(gap=0.003, rest_offset=10.0):
    '''
    Two unit spheres, the second shifted along vertex 0 of the first
    so that vertex and the second sphere's antipode face each other
    across gap.
    '''
    a = icosphere(2)
    axis = a.vertices[0]
    b = a.with_vertices(a.vertices + axis * (2.0 + gap))
    mesh = combine(a, b)
    n = a.n_vertices
    rest = mesh.vertices.copy()
    rest[n:] += rest_offset
    segments = np.repeat([0, 1], n)
    return ScanState(mesh, rest, np.zeros(mesh.n_vertices, dtype=np.int64), segments)


def sphere_state():
    s = icosphere(2)
    return ScanState(s, s.vertices.copy(), np.zeros(s.n_vertices, dtype=np.int64), np.zeros(s.n_vertices, dtype=np.int64))


class TestRegistry(SimpleTestCase):

    def test_stock(self):
        for name in ('Weld', 'Occlude', 'Amputate'):
            self.assertIn(name, registry.filters)
        self.assertIs(registry.filters.get('Weld'), Weld)
        self.assertIn('mesh_corr=>(', str(registry.filters))

    def test_unknown(self):
        with self.assertRaises(registry.NotRegistered):
            registry.filters.get('Blur')

    def test_register_twice(self):
        with self.assertRaises(registry.AlreadyRegistered):
            registry.filters.register(Weld)

    def test_register_decorator(self):
        class Widen(Weld):
            distance = 0.02

        register()(Widen)
        try:
            self.assertIs(registry.filters.get('Widen'), Widen)
        finally:
            registry.filters.unregister(Widen)
        self.assertNotIn('Widen', registry.filters)

    def test_not_a_filter(self):
        with self.assertRaises(ValueError):
            register()(dict)


class TestFilterOptions(SimpleTestCase):

    def test_defaults_check(self):
        for klass in (Weld, Occlude, Amputate):
            self.assertEqual(klass().check(), [])

    def test_override(self):
        f = Weld(distance=0.01)
        self.assertEqual(f.distance, 0.01)
        self.assertEqual(Weld.distance, 0.005)

    def test_unknown_option(self):
        with self.assertRaises(TypeError):
            Weld(strength=2)

    def test_bad_values(self):
        ids = {e.id for e in Weld(distance=-1.0, enabled='yes').check()}
        self.assertEqual(ids, {'scan_filter.E001', 'scan_filter.E011'})
        ids = {e.id for e in Occlude(viewpoints=0, image_size=8).check()}
        self.assertEqual(ids, {'scan_filter.E021', 'scan_filter.E023'})
        ids = {e.id for e in Amputate(radius=(0.2, 0.1), extremities=('tail',)).check()}
        self.assertEqual(ids, {'scan_filter.E032', 'scan_filter.E033'})

    def test_disabled_passes_through(self):
        state = touching_spheres()
        context = ScanContext(np.random.default_rng(0), None, {})
        for f in (Weld(enabled=False), Occlude(enabled=False), Amputate(enabled=False)):
            self.assertIs(f.process(state, context), state)
        self.assertEqual(context.notes, {})

    def test_base_process(self):
        with self.assertRaises(NotImplementedError):
            Filter().process(None, None)


class TestWeld(SimpleTestCase):

    def test_contacts(self):
        pairs = contact_pairs(touching_spheres(), 0.005, 0.05)
        s = icosphere(2)
        antipode = int(np.argmin(s.vertices @ s.vertices[0]))
        self.assertEqual(pairs.tolist(), [[0, s.n_vertices + antipode]])

    def test_near_at_rest(self):
        state = touching_spheres(rest_offset=0.0)
        self.assertEqual(len(contact_pairs(state, 0.005, 0.05)), 0)
        self.assertIs(weld(state, 0.005, 0.05)[0], state)

    def test_bridge(self):
        state = touching_spheres()
        fused, bridges = weld(state, 0.005, 0.05)
        self.assertEqual(bridges, 1)
        mesh = fused.mesh
        self.assertTrue(mesh.is_closed_manifold())
        self.assertEqual(mesh.face_components()[0], 1)
        self.assertEqual(mesh.genus(), 0)
        self.assertEqual(mesh.n_vertices, state.mesh.n_vertices - 2)
        self.assertEqual(len(fused.rest), mesh.n_vertices)

    def test_filter_notes(self):
        context = ScanContext(np.random.default_rng(0), None, {})
        Weld().process(touching_spheres(), context)
        self.assertEqual(context.notes, {'Weld': 1})


class TestOcclude(SimpleTestCase):

    def test_one_view_sees_front(self):
        s = icosphere(2)
        mask = visible_faces(s, 0.0, 0.0, 256)
        facing = s.face_normals[:, 0]
        self.assertTrue(np.all(mask[facing > 0.3]))
        self.assertFalse(np.any(mask[facing < 0.0]))

    def test_hidden_behind(self):
        near = icosphere(2)
        far = near.with_vertices(near.vertices * 0.5 - [3.0, 0.0, 0.0])
        mesh = combine(near, far)
        mask = visible_faces(mesh, 0.0, 0.0, 256)
        self.assertFalse(np.any(mask[near.n_faces:]))

    def test_underside_removed(self):
        state = sphere_state()
        seen = occlude(state, 8, 0.3, 256)
        mesh = seen.mesh
        self.assertLess(mesh.n_faces, state.mesh.n_faces)
        self.assertEqual(mesh.boundary_loop_count(), 1)
        self.assertGreater(seen.rest[:, 2].min(), -1.0)
        top = state.mesh.vertices[:, 2] > 0.5
        self.assertEqual(np.count_nonzero(seen.rest[:, 2] > 0.5), np.count_nonzero(top))

    def test_empty(self):
        state = sphere_state()
        with self.assertRaises(EmptyMeshError):
            apply_face_mask(state, np.zeros(state.mesh.n_faces, dtype=bool))
