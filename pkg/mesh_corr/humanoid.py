'''
The bundled template body: a closed genus-0 humanoid built from a voxel
silhouette in a T-pose, with skinning bound by bone proximity.
'''
import logging

import numpy as np

from mesh_corr.body_model import BodyModel, load_kinematic_tree
from mesh_corr.conf import data_path
from mesh_corr.constants import BLEND_FRACTION
from mesh_corr.mesh_core import Mesh, smooth_taubin
from mesh_corr.validators import validate_mesh


logger = logging.getLogger(__name__)

VOXEL_SIZE = 0.08
SMOOTHING_STEPS = 20

# (i range, j range, k range), inclusive, in voxels. x lateral (left
# positive), y forward, z up. Parts touch face to face only.
BODY_BLOCKS = (
    # legs
    ((1, 1), (-1, 0), (0, 10)),
    ((-2, -2), (-1, 0), (0, 10)),
    # feet
    ((1, 1), (1, 1), (0, 0)),
    ((-2, -2), (1, 1), (0, 0)),
    # torso
    ((-2, 1), (-1, 0), (11, 17)),
    # arms
    ((2, 9), (-1, -1), (17, 17)),
    ((-10, -3), (-1, -1), (17, 17)),
    # neck and head
    ((-1, 0), (-1, 0), (18, 20)),
)

# outward axis -> the two in-face axes, right-handed
FACE_AXES = {0: (1, 2), 1: (2, 0), 2: (0, 1)}



def voxel_set(blocks=BODY_BLOCKS):
    cells = set()
    for (i0, i1), (j0, j1), (k0, k1) in blocks:
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for k in range(k0, k1 + 1):
                    cells.add((i, j, k))
    return cells

def voxel_surface(cells, size=VOXEL_SIZE, resolution=3):
    '''
    Boundary of a voxel set, every exposed face split into
    resolution x resolution quads, two triangles each.
    '''
    n = resolution
    keys = []
    faces = []
    grid = np.arange(n + 1)
    u, v = np.meshgrid(grid, grid, indexing='ij')
    for cell in sorted(cells):
        base = np.array(cell) * n
        for axis in range(3):
            for sign in (1, -1):
                nb = list(cell)
                nb[axis] += sign
                if (tuple(nb) in cells):
                    continue
                b, c = FACE_AXES[axis]
                pts = np.zeros((n + 1, n + 1, 3), dtype=np.int64)
                pts[..., axis] = base[axis] + (n if sign > 0 else 0)
                pts[..., b] = base[b] + u
                pts[..., c] = base[c] + v
                start = len(keys)
                keys.extend(pts.reshape(-1, 3).tolist())
                ids = start + np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
                p00 = ids[:-1, :-1].reshape(-1)
                p10 = ids[1:, :-1].reshape(-1)
                p11 = ids[1:, 1:].reshape(-1)
                p01 = ids[:-1, 1:].reshape(-1)
                if (sign > 0):
                    tris = (np.stack((p00, p10, p11), 1), np.stack((p00, p11, p01), 1))
                else:
                    tris = (np.stack((p00, p11, p10), 1), np.stack((p00, p01, p11), 1))
                faces.extend(tris)
    keys = np.array(keys, dtype=np.int64)
    lattice, inverse = np.unique(keys, axis=0, return_inverse=True)
    faces = inverse.reshape(-1)[np.concatenate(faces)]
    return Mesh(lattice * (size / n), faces)

def bind_skin(tree, mesh, blend=BLEND_FRACTION):
    '''
    Segment per vertex by nearest bone, lowest joint on ties. Weights
    blend linearly into the parent over the first part of a bone and
    into the child at its tip over the last part, half and half at the
    joint itself.
    '''
    x = mesh.vertices
    a = tree.rest
    d = tree.tips - a
    length2 = np.maximum((d * d).sum(axis=1), 1e-300)
    t = np.clip(np.einsum('vjc,jc->vj', x[:, None, :] - a[None], d) / length2, 0.0, 1.0)
    closest = a[None] + t[..., None] * d[None]
    dist = np.linalg.norm(x[:, None, :] - closest, axis=2)
    segments = np.argmin(dist, axis=1)
    tv = t[np.arange(len(x)), segments]
    n = tree.n_joints
    tip_child = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        for c in tree.children(j):
            if (np.allclose(tree.rest[c], tree.tips[j])):
                tip_child[j] = c
    w = np.zeros((len(x), n))
    rows = np.arange(len(x))
    w[rows, segments] = 1.0
    parent = tree.parents[segments]
    head = (tv < blend) & (parent >= 0)
    share = 0.5 * (1.0 - tv[head] / blend)
    w[rows[head], segments[head]] -= share
    w[rows[head], parent[head]] += share
    child = tip_child[segments]
    tail = (tv > 1.0 - blend) & (child >= 0)
    share = 0.5 * (tv[tail] - (1.0 - blend)) / blend
    w[rows[tail], segments[tail]] -= share
    w[rows[tail], child[tail]] += share
    return tree.with_skin(w, segments)

def build_humanoid(resolution=3, tree_path=None, smoothing=SMOOTHING_STEPS):
    '''
    return
        BodyModel for the bundled template
    '''
    tree = load_kinematic_tree(tree_path or data_path('kinematic_tree.yaml'))
    mesh = voxel_surface(voxel_set(), VOXEL_SIZE, resolution)
    if (smoothing):
        mesh = mesh.with_vertices(smooth_taubin(mesh, smoothing))
    validate_mesh(mesh, closed=True)
    tree = bind_skin(tree, mesh)
    tree.validate(mesh.n_vertices)
    logger.info("Built humanoid template, vertices:%s faces:%s", mesh.n_vertices, mesh.n_faces)
    return BodyModel(tree, mesh)

def load_body_model(template=None, kinematic_tree=None, resolution=3):
    '''
    Template and tree from files, or the bundled humanoid. A tree
    without weights is bound to the template here.
    '''
    from mesh_corr.mesh_io import read_mesh

    if (template is None):
        return build_humanoid(resolution, kinematic_tree)
    mesh = read_mesh(template)
    tree = load_kinematic_tree(kinematic_tree or data_path('kinematic_tree.yaml'))
    if (not tree.is_bound):
        tree = bind_skin(tree, mesh)
    tree.validate(mesh.n_vertices)
    return BodyModel(tree, mesh)
