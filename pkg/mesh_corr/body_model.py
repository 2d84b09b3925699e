'''
Articulated body model: a kinematic tree of joints, linear blend
skinning of a template surface, and per-segment three-axis scaling.

Parameter vector layout, used by the optimizers:
    theta (J*3 axis-angle, radians), translation (3, meters),
    beta (J*3 scale factors)
'''
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from mesh_corr.constants import BETA_MAX, BETA_MIN, LAMBDA_BETA, LAMBDA_THETA
from mesh_corr.utils import MeshCorrError


logger = logging.getLogger(__name__)

# rounding allowance on the pi limit for rotation vectors
ROTATION_SLACK = 1e-9



class ParameterError(MeshCorrError):
    pass



@dataclass(frozen=True)
class KinematicTree:
    '''
    Joints in topological order, root first.

    parents
        (J,) parent index, -1 for the root
    rest
        (J,3) rest-pose joint positions
    tips
        (J,3) far end of each joint's bone, used when binding a skin
    theta_min, theta_max
        (J,3) per-axis angle bounds
    weights
        (V,J) blend weights, None until bound to a template
    segments
        (V,) scaling segment (joint index) per vertex
    '''
    names: tuple
    parents: np.ndarray
    rest: np.ndarray
    tips: np.ndarray
    theta_min: np.ndarray
    theta_max: np.ndarray
    weights: np.ndarray = None
    segments: np.ndarray = None

    @property
    def n_joints(self):
        return len(self.names)

    @property
    def is_bound(self):
        return self.weights is not None

    def joint(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ParameterError("Unknown joint. name:{}".format(name))

    @cached_property
    def descendants(self):
        '''
        (J,J) bool, [k, j] when j is k or below it.
        '''
        n = self.n_joints
        r = np.eye(n, dtype=bool)
        for j in range(1, n):
            r[:, j] |= r[:, self.parents[j]]
        return r

    @cached_property
    def branch(self):
        '''
        (J,J) int, [q, j] is the child of q on the path down to j, -1
        unless j is strictly below q.
        '''
        n = self.n_joints
        r = np.full((n, n), -1, dtype=np.int64)
        for j in range(1, n):
            p = self.parents[j]
            r[p, j] = j
            for q in range(n):
                if (r[q, p] >= 0):
                    r[q, j] = r[q, p]
        return r

    def children(self, j):
        return [int(c) for c in np.flatnonzero(self.parents == j)]

    def with_skin(self, weights, segments):
        return KinematicTree(
            self.names,
            self.parents,
            self.rest,
            self.tips,
            self.theta_min,
            self.theta_max,
            np.asarray(weights, dtype=np.float64),
            np.asarray(segments, dtype=np.int64),
        )

    def validate(self, n_vertices=None):
        n = self.n_joints
        if (self.parents[0] != -1):
            raise ParameterError("First joint must be the root.")
        for j in range(1, n):
            if (not(0 <= self.parents[j] < j)):
                raise ParameterError("Joints must follow their parents. joint:{}".format(self.names[j]))
        if (np.any(self.theta_min > self.theta_max)):
            raise ParameterError("Angle range minimum above maximum.")
        if (not self.is_bound):
            return
        w = self.weights
        if (n_vertices is not None and len(w) != n_vertices):
            raise ParameterError("Weight rows do not match the template. rows:{} vertices:{}".format(len(w), n_vertices))
        if (np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-6)):
            raise ParameterError("Blend weights must be nonnegative and sum to one per vertex.")
        unused = np.flatnonzero(~np.any(w > 0, axis=0))
        if (len(unused) > 0):
            raise ParameterError("Joint influences no vertex. joint:{}".format(self.names[unused[0]]))
        if (len(self.segments) != len(w) or self.segments.min() < 0 or self.segments.max() >= n):
            raise ParameterError("Segment table does not match the template.")



@dataclass(frozen=True)
class BodyParams:
    '''
    theta
        (J,3) axis-angle per joint; the root's rotates the whole body
    translation
        (3,) root translation
    beta
        (J,3) per-segment scale factors
    '''
    theta: np.ndarray
    translation: np.ndarray
    beta: np.ndarray

    @classmethod
    def rest(cls, n_joints):
        return cls(np.zeros((n_joints, 3)), np.zeros(3), np.ones((n_joints, 3)))

    @property
    def n_joints(self):
        return len(self.theta)

    def vector(self):
        return np.concatenate((self.theta.reshape(-1), self.translation, self.beta.reshape(-1)))

    @classmethod
    def from_vector(cls, v, n_joints):
        v = np.asarray(v, dtype=np.float64)
        t = 3 * n_joints
        return cls(v[:t].reshape(n_joints, 3).copy(), v[t:t + 3].copy(), v[t + 3:].reshape(n_joints, 3).copy())

    def replace(self, theta=None, translation=None, beta=None):
        return BodyParams(
            self.theta if theta is None else np.asarray(theta, dtype=np.float64),
            self.translation if translation is None else np.asarray(translation, dtype=np.float64),
            self.beta if beta is None else np.asarray(beta, dtype=np.float64),
        )

    def validate(self):
        if (not np.all(np.isfinite(self.vector()))):
            raise ParameterError("Body parameters are not finite.")
        if (np.any(self.beta <= BETA_MIN) or np.any(self.beta >= BETA_MAX)):
            raise ParameterError("Scale factors must lie in ({}, {}). min:{:.6g} max:{:.6g}".format(
                BETA_MIN,
                BETA_MAX,
                self.beta.min(),
                self.beta.max()
            ))
        norm = np.linalg.norm(self.theta, axis=1)
        if (np.any(norm > np.pi + ROTATION_SLACK)):
            raise ParameterError("Rotation vectors must be at most pi long. joint:{} norm:{:.6g}".format(
                int(np.argmax(norm)),
                norm.max()
            ))

    def wrapped(self):
        '''
        Same pose with every rotation vector at most pi long.
        '''
        theta = self.theta.copy()
        norm = np.linalg.norm(theta, axis=1)
        over = norm > np.pi
        if (np.any(over)):
            theta[over] = Rotation.from_rotvec(theta[over]).as_rotvec()
        return self.replace(theta=theta)

    def as_dict(self):
        return {
            'theta': self.theta.tolist(),
            'translation': self.translation.tolist(),
            'beta': self.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d['theta'], dtype=np.float64),
            np.asarray(d['translation'], dtype=np.float64),
            np.asarray(d['beta'], dtype=np.float64),
        )


def param_count(n_joints):
    return 6 * n_joints + 3

def theta_slice(n_joints):
    return slice(0, 3 * n_joints)

def translation_slice(n_joints):
    return slice(3 * n_joints, 3 * n_joints + 3)

def beta_slice(n_joints):
    return slice(3 * n_joints + 3, 6 * n_joints + 3)



@dataclass(frozen=True)
class PriorConfig:
    beta_star: np.ndarray
    theta_star: np.ndarray
    theta_min: np.ndarray
    theta_max: np.ndarray
    lambda_beta: float = LAMBDA_BETA
    lambda_theta: float = LAMBDA_THETA

    @classmethod
    def from_tree(cls, tree, lambda_beta=LAMBDA_BETA, lambda_theta=LAMBDA_THETA):
        '''
        Average shape and the midrange of every joint angle.
        '''
        return cls(
            beta_star=np.ones((tree.n_joints, 3)),
            theta_star=0.5 * (tree.theta_min + tree.theta_max),
            theta_min=tree.theta_min,
            theta_max=tree.theta_max,
            lambda_beta=lambda_beta,
            lambda_theta=lambda_theta,
        )

    def params(self, translation=None):
        '''
        BodyParams at the priors.
        '''
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        return BodyParams(self.theta_star.copy(), t, self.beta_star.copy())


def prior_losses(params, priors):
    '''
    return
        (l_beta, l_theta, d l_beta / d beta, d l_theta / d theta)
    '''
    db = params.beta - priors.beta_star
    dt = params.theta - priors.theta_star
    return float((db * db).sum()), float((dt * dt).sum()), 2.0 * db, 2.0 * dt



## Skinning
def left_jacobian(r):
    '''
    d exp(r) = [J(r) dr]x exp(r) for the rotation exponential.
    '''
    phi = np.linalg.norm(r)
    k = _skew(r)
    if (phi < 1e-8):
        return np.eye(3) + 0.5 * k + k @ k / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(phi)) / phi ** 2 * k
        + (phi - np.sin(phi)) / phi ** 3 * k @ k
    )

def _skew(r):
    return np.array([
        [0.0, -r[2], r[1]],
        [r[2], 0.0, -r[0]],
        [-r[1], r[0], 0.0],
    ])

def scaled_rest(tree, vertices, beta, segments=None):
    '''
    Rest skeleton and rest surface after segment scaling. Each
    segment scales about its own joint; joints below move with it.

    segments
        segment per given vertex, default the tree's table
    return
        (joints (J,3), vertices (V,3))
    '''
    rest = tree.rest
    jr = rest.copy()
    for c in range(1, tree.n_joints):
        p = tree.parents[c]
        jr[c] = rest[c] + (jr[p] - rest[p]) + (beta[p] - 1.0) * (rest[c] - rest[p])
    s = tree.segments if segments is None else segments
    xs = vertices + (jr[s] - rest[s]) + (beta[s] - 1.0) * (vertices - rest[s])
    return jr, xs

def pose_skeleton(tree, params, jr):
    '''
    Forward kinematics.
    return
        (global rotations G (J,3,3), offsets D (J,3)) where a rest
        point x bound to joint j poses to x + (G_j - I)(x - jr_j) + D_j
    '''
    rot = Rotation.from_rotvec(params.theta).as_matrix()
    n = tree.n_joints
    eye = np.eye(3)
    g = np.empty((n, 3, 3))
    d = np.empty((n, 3))
    g[0] = rot[0]
    d[0] = params.translation
    for c in range(1, n):
        p = tree.parents[c]
        g[c] = g[p] @ rot[c]
        d[c] = d[p] + (g[p] - eye) @ (jr[c] - jr[p])
    return g, d

def skin_vertices(tree, vertices, params):
    jr, xs = scaled_rest(tree, vertices, params.beta)
    g, d = pose_skeleton(tree, params, jr)
    rel = xs[:, None, :] - jr[None, :, :]
    contrib = np.einsum('jab,vjb->vja', g - np.eye(3), rel) + d[None, :, :]
    return xs + np.einsum('vj,vja->va', tree.weights, contrib)

def skin(tree, template, params):
    '''
    Posed and scaled template. Connectivity is unchanged.
    '''
    params.validate()
    return template.with_vertices(skin_vertices(tree, template.vertices, params))

def skin_jacobian(tree, template, params, vertices=None):
    '''
    Analytic derivatives of skinned positions.

    vertices
        optional subset of vertex indices
    return
        (n,3,P) array, P = 6J + 3 in parameter vector order
    '''
    idx = np.arange(template.n_vertices) if vertices is None else np.asarray(vertices, dtype=np.int64)
    n = tree.n_joints
    w = tree.weights[idx]
    seg = tree.segments[idx]
    x = template.vertices[idx]
    jr, xs = scaled_rest(tree, x, params.beta, seg)
    g, d = pose_skeleton(tree, params, jr)
    posed_joints = jr + d
    # y[v, j]: vertex v carried rigidly by joint j
    y = np.einsum('jab,vjb->vja', g, xs[:, None, :] - jr[None, :, :]) + posed_joints[None, :, :]
    jac = np.zeros((len(idx), 3, param_count(n)))

    # rotations: joint k turns everything below it about its posed position
    for k in range(n):
        sub = tree.descendants[k]
        wk = w[:, sub]
        moment = np.einsum('vj,vja->va', wk, y[:, sub]) - wk.sum(axis=1)[:, None] * posed_joints[k]
        parent_rot = g[tree.parents[k]] if k > 0 else np.eye(3)
        axes = parent_rot @ left_jacobian(params.theta[k])
        for a in range(3):
            jac[:, :, 3 * k + a] = np.cross(axes[:, a], moment)

    jac[:, :, translation_slice(n)] = w.sum(axis=1)[:, None, None] * np.eye(3)[None]

    # scales
    rest = tree.rest
    blend_rot = np.einsum('vj,jab->vab', w, g)
    b0 = beta_slice(n).start
    for q in range(n):
        below = tree.branch[q]
        strict = below >= 0
        for a in range(3):
            dj = np.zeros((n, 3))
            dj[strict, a] = rest[below[strict], a] - rest[q, a]
            dx = dj[seg].copy()
            own = seg == q
            dx[own, a] += x[own, a] - rest[q, a]
            dp = dj @ g[q].T
            joint_term = dp - np.einsum('jab,jb->ja', g, dj)
            jac[:, :, b0 + 3 * q + a] = np.einsum('vab,vb->va', blend_rot, dx) + w @ joint_term
    return jac

## Assets
@dataclass(frozen=True)
class BodyModel:
    '''
    A template surface with its bound kinematic tree.
    '''
    tree: KinematicTree
    template: object

    def skin(self, params):
        return skin(self.tree, self.template, params)

    def jacobian(self, params, vertices=None):
        return skin_jacobian(self.tree, self.template, params, vertices)

    def priors(self, lambda_beta=LAMBDA_BETA, lambda_theta=LAMBDA_THETA):
        return PriorConfig.from_tree(self.tree, lambda_beta, lambda_theta)

    def rest_params(self):
        return BodyParams.rest(self.tree.n_joints)


def load_kinematic_tree(path):
    '''
    Read a kinematic tree from YAML.

    joints
        list of {name, parent, rest, tip, range}; range is three
        [min, max] pairs, one per rotation axis
    weights
        optional list of [vertex, joint, weight]
    segments
        optional list, joint index per vertex
    '''
    with open(path, encoding='utf-8') as f:
        data = yaml.safe_load(f)
    return tree_from_dict(data)

def tree_from_dict(data):
    try:
        joints = data['joints']
        names = tuple(j['name'] for j in joints)
        parents = np.array([-1 if j['parent'] is None else names.index(j['parent']) for j in joints], dtype=np.int64)
        rest = np.array([j['rest'] for j in joints], dtype=np.float64).reshape(-1, 3)
        tips = np.array([j.get('tip', j['rest']) for j in joints], dtype=np.float64).reshape(-1, 3)
        ranges = np.array([j['range'] for j in joints], dtype=np.float64).reshape(-1, 3, 2)
    except (KeyError, TypeError, ValueError) as e:
        raise ParameterError("Kinematic tree is malformed. detail:{}".format(e))
    tree = KinematicTree(names, parents, rest, tips, ranges[:, :, 0].copy(), ranges[:, :, 1].copy())
    if (data.get('weights') is not None):
        table = np.asarray(data['weights'], dtype=np.float64).reshape(-1, 3)
        segments = np.asarray(data['segments'], dtype=np.int64)
        w = np.zeros((len(segments), len(names)))
        w[table[:, 0].astype(np.int64), table[:, 1].astype(np.int64)] = table[:, 2]
        tree = tree.with_skin(w, segments)
    tree.validate()
    return tree

def tree_to_dict(tree, weights=True):
    joints = []
    for j, name in enumerate(tree.names):
        p = tree.parents[j]
        joints.append({
            'name': name,
            'parent': None if p < 0 else tree.names[p],
            'rest': [float(c) for c in tree.rest[j]],
            'tip': [float(c) for c in tree.tips[j]],
            'range': [[float(tree.theta_min[j, a]), float(tree.theta_max[j, a])] for a in range(3)],
        })
    r = {'joints': joints}
    if (weights and tree.is_bound):
        v, j = np.nonzero(tree.weights)
        r['weights'] = [[int(a), int(b), float(tree.weights[a, b])] for a, b in zip(v, j)]
        r['segments'] = [int(s) for s in tree.segments]
    return r

def save_kinematic_tree(tree, path):
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(tree_to_dict(tree), f, sort_keys=False, default_flow_style=None)
