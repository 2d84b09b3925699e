'''
Meshes shared by the tests.
'''
from functools import lru_cache

import numpy as np

from mesh_corr.mesh_core import Mesh, icosphere, subdivide


def sphere(level=2, radius=1.0):
    return icosphere(level, radius)

def planar_strip(nx=20, ny=4, size=0.05):
    '''
    Flat grid in the z=0 plane, faces up.
    '''
    xs, ys = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing='ij')
    vertices = np.stack((xs.reshape(-1), ys.reshape(-1), np.zeros(xs.size)), axis=1) * size
    ids = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    p00 = ids[:-1, :-1].reshape(-1)
    p10 = ids[1:, :-1].reshape(-1)
    p11 = ids[1:, 1:].reshape(-1)
    p01 = ids[:-1, 1:].reshape(-1)
    faces = np.concatenate((np.stack((p00, p10, p11), 1), np.stack((p00, p11, p01), 1)))
    return Mesh(vertices, faces)

def tube(around=16, along=8, radius=0.1, length=0.8, caps=False):
    '''
    Cylinder along z, normals outward. Open unless caps, which fans
    each end to a centre vertex.
    '''
    a = 2.0 * np.pi * np.arange(around) / around
    z = np.linspace(0.0, length, along + 1)
    vertices = np.array([(radius * np.cos(t), radius * np.sin(t), h) for h in z for t in a])
    faces = []
    for r in range(along):
        for k in range(around):
            p00 = r * around + k
            p10 = r * around + (k + 1) % around
            p01 = p00 + around
            p11 = p10 + around
            faces.append((p00, p10, p11))
            faces.append((p00, p11, p01))
    if (caps):
        bottom = len(vertices)
        top = bottom + 1
        ring = along * around
        vertices = np.vstack((vertices, [(0.0, 0.0, 0.0), (0.0, 0.0, length)]))
        for k in range(around):
            faces.append((bottom, (k + 1) % around, k))
            faces.append((top, ring + k, ring + (k + 1) % around))
    return Mesh(vertices, faces)

def octahedron(subdivisions=0, radius=1.0):
    vertices = np.array([
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    ], dtype=np.float64) * radius
    faces = np.array([
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ])
    mesh = Mesh(vertices, faces)
    for _ in range(subdivisions):
        mesh, _ = subdivide(mesh)
    return mesh

def tetrahedron(offset=(0.0, 0.0, 0.0), scale=1.0):
    vertices = np.array([
        [1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1],
    ], dtype=np.float64) * scale + np.asarray(offset)
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(vertices, faces)

def combine(*meshes):
    '''
    One Mesh holding every mesh given, vertex blocks in order.
    '''
    vertices = []
    faces = []
    start = 0
    for m in meshes:
        vertices.append(m.vertices)
        faces.append(m.faces + start)
        start += m.n_vertices
    return Mesh(np.concatenate(vertices), np.concatenate(faces))

@lru_cache(maxsize=None)
def coarse_humanoid():
    '''
    The bundled body at the lowest resolution.
    '''
    from mesh_corr.humanoid import build_humanoid

    return build_humanoid(resolution=1)

@lru_cache(maxsize=None)
def coarse_embedding(d=4):
    from mesh_corr.embedding import build_embedding

    return build_embedding(coarse_humanoid().template, d)
