'''
Geodesic distances on meshes, the geodesic center of gravity, and the
scalar signals that orient convolution patches.

Distances are shortest paths on an augmented graph: mesh vertices plus
one node at every edge midpoint, with a link between every pair of
nodes that share a face, weighted by straight-line length.
'''
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from mesh_corr import checks
from mesh_corr.constants import SIGNAL_GEODESIC, SIGNAL_RANDOM, SIGNAL_VERTICAL
from mesh_corr.decorators import register
from mesh_corr.utils import format_float, write_csv
from mesh_corr.validators import MeshValidationError


logger = logging.getLogger(__name__)

# sources per shortest-path call for many-source work
SOURCE_BATCH = 256



@dataclass(frozen=True)
class GeodesicField:
    '''
    distances
        (V,) meters, inf where unreachable
    gradients
        (F,3) per-face gradient of the linear interpolant, tangent to
        the face
    source
        source vertex indices
    '''
    distances: np.ndarray
    gradients: np.ndarray
    source: tuple

    @property
    def reachable(self):
        return np.isfinite(self.distances)



def augmented_graph(mesh):
    '''
    Symmetric csr weight matrix over V + E nodes. Node V + e is the
    midpoint of edge e.
    '''
    v = mesh.n_vertices
    nodes = np.concatenate((mesh.faces, mesh.face_edges + v), axis=1)
    i, j = np.triu_indices(6, k=1)
    pairs = np.stack((nodes[:, i], nodes[:, j]), axis=2).reshape(-1, 2)
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    pos = np.concatenate((mesh.vertices, mesh.edge_midpoints))
    w = np.linalg.norm(pos[pairs[:, 0]] - pos[pairs[:, 1]], axis=1)
    n = len(pos)
    rows = np.concatenate((pairs[:, 0], pairs[:, 1]))
    cols = np.concatenate((pairs[:, 1], pairs[:, 0]))
    return sparse.csr_matrix((np.concatenate((w, w)), (rows, cols)), shape=(n, n))

def face_gradients(mesh, values):
    '''
    Gradient of the per-face linear interpolant of vertex values,
    sum of f_i (n x e_i) / 2A with e_i the edge opposite corner i.
    Degenerate faces and faces touching a non-finite value get zero.
    '''
    p = mesh.vertices[mesh.faces]
    f = values[mesh.faces]
    n = mesh.face_normals
    area = mesh.face_areas
    opposite = (p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0])
    g = np.zeros((mesh.n_faces, 3))
    ok = (area > 1e-300) & np.all(np.isfinite(f), axis=1)
    for k in range(3):
        g[ok] += f[ok, k, None] * np.cross(n[ok], opposite[k][ok])
    g[ok] /= 2.0 * area[ok, None]
    return g

def geodesic_distances(mesh, source, graph=None):
    '''
    Single- or multi-source geodesic distances.

    source
        vertex index, or a sequence of them
    graph
        optional prebuilt augmented_graph(mesh)
    '''
    if (graph is None):
        graph = augmented_graph(mesh)
    src = np.atleast_1d(np.asarray(source, dtype=np.int64))
    d = dijkstra(graph, directed=False, indices=src, min_only=True)[:mesh.n_vertices]
    unreachable = np.count_nonzero(~np.isfinite(d) & mesh.referenced)
    if (unreachable):
        logger.warning("Geodesic distances: %s vertices unreachable from source %s", unreachable, src.tolist())
    return GeodesicField(
        distances=d,
        gradients=face_gradients(mesh, d),
        source=tuple(int(s) for s in src),
    )

def all_pairs_geodesics(mesh, graph=None, batch=SOURCE_BATCH):
    '''
    Dense (V,V) geodesic distance matrix, symmetrised.
    '''
    if (graph is None):
        graph = augmented_graph(mesh)
    v = mesh.n_vertices
    out = np.empty((v, v))
    for start in range(0, v, batch):
        idx = np.arange(start, min(start + batch, v))
        out[idx] = dijkstra(graph, directed=False, indices=idx)[:, :v]
    # both directions are the same graph; remove last-bit asymmetry
    return np.minimum(out, out.T)

def geodesic_objective(mesh, graph=None, batch=SOURCE_BATCH):
    '''
    Area-weighted sum of squared geodesic distances from every vertex.
    '''
    if (graph is None):
        graph = augmented_graph(mesh)
    v = mesh.n_vertices
    areas = mesh.vertex_areas
    out = np.empty(v)
    for start in range(0, v, batch):
        idx = np.arange(start, min(start + batch, v))
        d = dijkstra(graph, directed=False, indices=idx)[:, :v]
        # unreferenced vertices carry no area
        d[:, areas == 0] = 0.0
        out[idx] = (d * d) @ areas
    return out

def geodesic_center(mesh, graph=None):
    '''
    Vertex minimising the area-weighted sum of squared geodesic
    distances to the rest of the surface. Lowest index on ties.
    '''
    if (mesh.face_components()[0] != 1):
        raise MeshValidationError(
            "Geodesic center needs a connected mesh.",
            code='disconnected',
        )
    j = geodesic_objective(mesh, graph)
    j[~mesh.referenced] = np.inf
    return int(np.argmin(j))



@dataclass(frozen=True)
class SignalField:
    '''
    values
        (V,) scalar per vertex, None for randomised orientation
    gradients
        (F,3), None for randomised orientation
    randomize
        if True, patch rings take a random cyclic shift instead of an
        aligned start
    '''
    kind: str
    values: np.ndarray
    gradients: np.ndarray
    randomize: bool = False
    center: int = -1

    def restrict(self, mesh, lineage):
        '''
        The same signal on a decimated mesh. lineage maps each coarse
        vertex to the vertex of this field's mesh it descends from.
        '''
        if (self.randomize):
            return self
        values = self.values[lineage]
        return SignalField(
            kind=self.kind,
            values=values,
            gradients=face_gradients(mesh, values),
            randomize=False,
            center=self.center,
        )

    def write_csv(self, path, mesh):
        '''
        Per-vertex dump for inspection.
        '''
        values = self.values if self.values is not None else np.zeros(mesh.n_vertices)
        rows = (
            {
                'vertex': i,
                'x': format_float(p[0]),
                'y': format_float(p[1]),
                'z': format_float(p[2]),
                'value': format_float(v),
            }
            for i, (p, v) in enumerate(zip(mesh.vertices, values))
        )
        write_csv(path, ['vertex', 'x', 'y', 'z', 'value'], rows)



class SignalFunction:
    '''
    A scalar function on a scan whose gradient gives patches a
    consistent starting direction.
    Subclasses set kind and implement values(). Register them with
    @register('signals') to make the kind available by name.
    '''
    kind = None
    randomize = False

    @classmethod
    def name(cls):
        return cls.kind

    @classmethod
    def check(cls, **kwargs):
        return checks.check_signal_kind('kind', cls.kind, 'mesh_corr.E030', **kwargs)

    def values(self, mesh):
        raise NotImplementedError

    def __call__(self, mesh):
        if (self.randomize):
            return SignalField(self.kind, None, None, randomize=True)
        values = np.asarray(self.values(mesh), dtype=np.float64)
        return SignalField(
            kind=self.kind,
            values=values,
            gradients=face_gradients(mesh, values),
            center=getattr(self, 'center', -1),
        )


@register('signals')
class GeodesicFromCenter(SignalFunction):
    '''
    Distance from the geodesic center of gravity. Independent of pose.
    '''
    kind = SIGNAL_GEODESIC

    def values(self, mesh):
        graph = augmented_graph(mesh)
        self.center = geodesic_center(mesh, graph)
        logger.debug("Geodesic center %s", self.center)
        return geodesic_distances(mesh, self.center, graph).distances


@register('signals')
class VerticalHeight(SignalFunction):
    '''
    Height above the floor.
    '''
    kind = SIGNAL_VERTICAL

    def values(self, mesh):
        return mesh.vertices[:, 2]


@register('signals')
class RandomOrientation(SignalFunction):
    kind = SIGNAL_RANDOM
    randomize = True



def signal_function(mesh, kind):
    '''
    Evaluate a registered signal on a mesh.
    return
        SignalField
    '''
    from mesh_corr import registry

    return registry.signals.get(kind)()(mesh)
