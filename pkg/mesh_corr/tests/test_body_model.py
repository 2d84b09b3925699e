import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from mesh_corr.body_model import (
    BodyParams,
    ParameterError,
    PriorConfig,
    left_jacobian,
    load_kinematic_tree,
    param_count,
    prior_losses,
    save_kinematic_tree,
    skin,
    skin_vertices,
    tree_from_dict,
    tree_to_dict,
)
from mesh_corr.tests.utils import coarse_humanoid


def random_params(tree, seed):
    rng = np.random.default_rng(seed)
    n = tree.n_joints
    return BodyParams(
        0.3 * rng.standard_normal((n, 3)),
        0.1 * rng.standard_normal(3),
        1.0 + 0.1 * rng.standard_normal((n, 3)),
    )


class TestParams(SimpleTestCase):

    def test_vector_layout(self):
        p = random_params(coarse_humanoid().tree, 0)
        v = p.vector()
        self.assertEqual(len(v), param_count(16))
        back = BodyParams.from_vector(v, 16)
        self.assertTrue(np.array_equal(back.beta, p.beta))
        self.assertTrue(np.array_equal(back.translation, p.translation))

    def test_scale_bounds(self):
        p = BodyParams.rest(2)
        p.validate()
        with self.assertRaises(ParameterError):
            p.replace(beta=np.full((2, 3), 0.25)).validate()
        with self.assertRaises(ParameterError):
            p.replace(beta=np.full((2, 3), 4.0)).validate()
        with self.assertRaises(ParameterError):
            p.replace(translation=np.array([0.0, np.nan, 0.0])).validate()

    def test_rotation_magnitude(self):
        theta = np.array([[0.0, 0.0, 1.5 * np.pi], [0.2, 0.0, 0.0]])
        p = BodyParams.rest(2).replace(theta=theta)
        with self.assertRaises(ParameterError):
            p.validate()
        p.wrapped().validate()
        BodyParams.rest(2).replace(theta=np.array([[np.pi, 0.0, 0.0], [0.0, 0.0, 0.0]])).validate()

    def test_wrapped(self):
        theta = np.array([[0.0, 0.0, 1.5 * np.pi], [0.2, 0.0, 0.0]])
        p = BodyParams.rest(2).replace(theta=theta).wrapped()
        self.assertTrue(np.all(np.linalg.norm(p.theta, axis=1) <= np.pi + 1e-12))
        self.assertTrue(np.allclose(p.theta[0], [0.0, 0.0, -0.5 * np.pi]))
        self.assertTrue(np.array_equal(p.theta[1], theta[1]))

    def test_priors(self):
        tree = coarse_humanoid().tree
        priors = PriorConfig.from_tree(tree)
        lb, lt, gb, gt = prior_losses(priors.params(), priors)
        self.assertEqual((lb, lt), (0.0, 0.0))
        self.assertFalse(np.any(gb) or np.any(gt))
        self.assertTrue(np.allclose(priors.theta_star, 0.5 * (tree.theta_min + tree.theta_max)))


class TestTree(SimpleTestCase):

    def test_joints(self):
        tree = coarse_humanoid().tree
        self.assertEqual(tree.n_joints, 16)
        self.assertEqual(tree.names[0], 'pelvis')
        self.assertEqual(tree.parents[0], -1)
        self.assertEqual(tree.names[tree.parents[tree.joint('l_wrist')]], 'l_elbow')
        with self.assertRaises(ParameterError):
            tree.joint('tail')

    def test_descendants(self):
        tree = coarse_humanoid().tree
        knee = tree.joint('l_knee')
        below = {tree.names[j] for j in np.flatnonzero(tree.descendants[knee])}
        self.assertEqual(below, {'l_knee', 'l_ankle'})
        self.assertTrue(np.all(tree.descendants[0]))

    def test_dict_form(self):
        tree = coarse_humanoid().tree
        back = tree_from_dict(tree_to_dict(tree))
        self.assertEqual(back.names, tree.names)
        self.assertTrue(np.array_equal(back.parents, tree.parents))
        self.assertTrue(np.array_equal(back.segments, tree.segments))
        self.assertTrue(np.allclose(back.weights, tree.weights))

    def test_file_form(self):
        tree = coarse_humanoid().tree
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / 'tree.yaml'
            save_kinematic_tree(tree, path)
            back = load_kinematic_tree(path)
        self.assertEqual(back.names, tree.names)
        self.assertTrue(np.array_equal(back.theta_min, tree.theta_min))
        self.assertTrue(np.array_equal(back.weights, tree.weights))

    def test_malformed(self):
        with self.assertRaises(ParameterError):
            tree_from_dict({'joints': [{'name': 'root'}]})
        data = tree_to_dict(coarse_humanoid().tree, weights=False)
        data['joints'][1]['parent'] = data['joints'][2]['name']
        with self.assertRaises(ParameterError):
            tree_from_dict(data)


class TestSkinning(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.body = coarse_humanoid()

    def test_rest_identity(self):
        posed = self.body.skin(self.body.rest_params())
        self.assertTrue(np.allclose(posed.vertices, self.body.template.vertices))
        self.assertTrue(np.array_equal(posed.faces, self.body.template.faces))

    def test_rigid_root(self):
        tree = self.body.tree
        x = self.body.template.vertices
        theta = np.zeros((16, 3))
        theta[0] = (0.0, 0.0, 0.7)
        t = np.array([0.1, -0.2, 0.3])
        posed = skin_vertices(tree, x, BodyParams(theta, t, np.ones((16, 3))))
        r = Rotation.from_rotvec(theta[0]).as_matrix()
        root = tree.rest[0]
        self.assertTrue(np.allclose(posed, (x - root) @ r.T + root + t))

    def test_uniform_scale(self):
        tree = self.body.tree
        x = self.body.template.vertices
        p = BodyParams(np.zeros((16, 3)), np.zeros(3), np.full((16, 3), 2.0))
        root = tree.rest[0]
        self.assertTrue(np.allclose(skin_vertices(tree, x, p), root + 2.0 * (x - root)))

    def test_bad_params(self):
        p = self.body.rest_params().replace(beta=np.full((16, 3), 5.0))
        with self.assertRaises(ParameterError):
            skin(self.body.tree, self.body.template, p)

    def test_left_jacobian(self):
        rng = np.random.default_rng(1)
        r = rng.standard_normal(3)
        dr = 1e-6 * rng.standard_normal(3)
        a = Rotation.from_rotvec(r + dr).as_matrix()
        b = Rotation.from_rotvec(r).as_matrix()
        w = left_jacobian(r) @ dr
        skew = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
        self.assertTrue(np.allclose(a - b, skew @ b, atol=1e-10))

    def test_jacobian_matches_differences(self):
        tree = self.body.tree
        x = self.body.template.vertices
        params = random_params(tree, 2)
        idx = np.linspace(0, len(x) - 1, 12).astype(np.int64)
        jac = self.body.jacobian(params, idx)
        self.assertEqual(jac.shape, (12, 3, param_count(16)))
        v = params.vector()
        h = 1e-6
        for k in range(len(v)):
            up = v.copy()
            down = v.copy()
            up[k] += h
            down[k] -= h
            a = skin_vertices(tree, x, BodyParams.from_vector(up, 16))[idx]
            b = skin_vertices(tree, x, BodyParams.from_vector(down, 16))[idx]
            numeric = (a - b) / (2.0 * h)
            self.assertTrue(np.allclose(numeric, jac[:, :, k], atol=1e-6), msg="parameter:{}".format(k))
