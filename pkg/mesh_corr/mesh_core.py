'''
Indexed triangle meshes and the scan clean-up that happens before
anything else touches a scan.

All lengths are meters. Faces are counter-clockwise seen from outside.
'''
import logging
from functools import cached_property

import numpy as np
from trimesh import Trimesh, creation, smoothing
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from mesh_corr.utils import MeshCorrError
from mesh_corr.validators import MeshValidationError, validate_mesh


logger = logging.getLogger(__name__)



class EmptyMeshError(MeshCorrError):
    pass


class DegenerateNormalError(MeshCorrError):
    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge



def build_edges(faces):
    '''
    Canonical edge table for a face array.

    Undirected pairs are stored (min, max) and sorted lexicographically.
    return
        (edges (E,2), face_edges (F,3), incidence order, counts)
        face_edges[f, i] is the edge from faces[f, i] to faces[f, (i+1)%3].
        incidence order lists half-edge ids grouped by edge, so
        order[ptr[e]:ptr[e+1]] // 3 are the faces of edge e.
    '''
    half = np.stack((faces, np.roll(faces, -1, axis=1)), axis=2).reshape(-1, 2)
    key = np.sort(half, axis=1)
    edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    face_edges = inverse.reshape(-1, 3)
    order = np.argsort(inverse, kind='stable')
    return edges, face_edges, order, counts


class Mesh:
    '''
    Indexed triangle mesh with a canonical edge list.

    Instances are treated as immutable. Arrays are flagged read-only and
    derived quantities are cached on first use.

    vertices
        (V,3) positions
    faces
        (F,3) vertex indices
    normals
        optional (V,3) per-vertex normals. If absent, area-weighted
        face normal averages are used.
    '''
    def __init__(self, vertices, faces, normals=None):
        vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if (len(faces) == 0):
            raise EmptyMeshError("Mesh has no faces.")
        if (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshValidationError(
                "Face references a vertex out of range.",
                code='face_index',
            )
        if (np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) or np.any(faces[:, 2] == faces[:, 0])):
            raise MeshValidationError(
                "Face references the same vertex twice.",
                code='degenerate_face',
            )
        self._set_topology(faces)
        self._set_geometry(vertices, normals)

    def _set_topology(self, faces):
        edges, face_edges, order, counts = build_edges(faces)
        ptr = np.concatenate(([0], np.cumsum(counts)))
        edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_faces[:, 0] = order[ptr[:-1]] // 3
        two = counts >= 2
        edge_faces[two, 1] = order[ptr[:-1][two] + 1] // 3
        self.faces = faces
        self.edges = edges
        self.face_edges = face_edges
        self.edge_faces = edge_faces
        self.edge_face_count = counts
        self._incidence = (order // 3, ptr)
        for a in (faces, edges, face_edges, edge_faces, counts):
            a.setflags(write=False)

    def _set_geometry(self, vertices, normals):
        self.vertices = vertices
        self.custom_normals = normals is not None
        if (normals is None):
            normals = self._area_weighted_normals()
        else:
            normals = np.array(normals, dtype=np.float64).reshape(-1, 3)
            if (normals.shape != vertices.shape):
                raise MeshValidationError(
                    "Normal count does not match vertex count.",
                    code='normals',
                )
            normals = _normalize_rows(normals, fallback=(0.0, 0.0, 1.0))
        self.normals = normals
        vertices.setflags(write=False)
        normals.setflags(write=False)

    def with_vertices(self, vertices, normals=None):
        '''
        Same connectivity, new positions.
        '''
        mesh = Mesh.__new__(Mesh)
        for k in ('faces', 'edges', 'face_edges', 'edge_faces', 'edge_face_count', '_incidence'):
            setattr(mesh, k, getattr(self, k))
        vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        if (vertices.shape != self.vertices.shape):
            raise MeshValidationError(
                "Vertex count does not match the mesh.",
                code='vertex_count',
            )
        mesh._set_geometry(vertices, normals)
        return mesh

    def _area_weighted_normals(self):
        # cross product length is twice the face area
        cr = self._face_cross(self.vertices)
        acc = np.zeros_like(self.vertices)
        for i in range(3):
            np.add.at(acc, self.faces[:, i], cr)
        return _normalize_rows(acc, fallback=(0.0, 0.0, 1.0))

    def _face_cross(self, vertices):
        p = vertices[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_edges(self):
        return len(self.edges)

    def incident_faces(self, edge):
        faces, ptr = self._incidence
        return faces[ptr[edge]:ptr[edge + 1]]

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self._face_cross(self.vertices), axis=1)

    @cached_property
    def face_normals(self):
        return _normalize_rows(self._face_cross(self.vertices), fallback=(0.0, 0.0, 0.0))

    @cached_property
    def area(self):
        return float(self.face_areas.sum())

    @cached_property
    def vertex_areas(self):
        '''
        Barycentric vertex areas, one third of the incident face areas.
        '''
        a3 = np.repeat(self.face_areas[:, None] / 3.0, 3, axis=1)
        return np.bincount(self.faces.reshape(-1), a3.reshape(-1), minlength=self.n_vertices)

    @cached_property
    def edge_lengths(self):
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def edge_midpoints(self):
        return self.vertices[self.edges].mean(axis=1)

    @cached_property
    def face_centroids(self):
        return self.vertices[self.faces].mean(axis=1)

    @cached_property
    def adjacency(self):
        '''
        Symmetric binary vertex adjacency as a csr matrix.
        '''
        n = self.n_vertices
        i = np.concatenate((self.edges[:, 0], self.edges[:, 1]))
        j = np.concatenate((self.edges[:, 1], self.edges[:, 0]))
        return sparse.csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))

    @cached_property
    def referenced(self):
        return np.bincount(self.faces.reshape(-1), minlength=self.n_vertices) > 0

    @cached_property
    def boundary_edges(self):
        return self.edge_face_count == 1

    @cached_property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].reshape(-1)] = True
        return mask

    @cached_property
    def vertex_face(self):
        '''
        One incident face per vertex and the vertex position in it,
        -1 for unreferenced vertices.
        '''
        face = np.full(self.n_vertices, -1, dtype=np.int64)
        corner = np.full(self.n_vertices, -1, dtype=np.int64)
        used, first = np.unique(self.faces.reshape(-1), return_index=True)
        face[used] = first // 3
        corner[used] = first % 3
        return face, corner

    def components(self):
        '''
        Connected components over vertex adjacency.
        return
            (count, per-vertex labels). Unreferenced vertices are their
            own components.
        '''
        return connected_components(self.adjacency, directed=False)

    def face_components(self):
        n, labels = self.components()
        return n, labels[self.faces[:, 0]]

    def fan_labels(self):
        '''
        Label corners by fan. Corners (face, vertex) are joined across
        manifold edges; a vertex whose corners carry more than one label
        is a non-manifold (bowtie) vertex.
        return
            (count, per-corner labels (F*3))
        '''
        two = self.edge_face_count == 2
        e = np.flatnonzero(two)
        f1 = self.edge_faces[e, 0]
        f2 = self.edge_faces[e, 1]
        rows = []
        cols = []
        for k in range(2):
            x = self.edges[e, k]
            c1 = 3 * f1 + np.argmax(self.faces[f1] == x[:, None], axis=1)
            c2 = 3 * f2 + np.argmax(self.faces[f2] == x[:, None], axis=1)
            rows.append(c1)
            cols.append(c2)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        n = 3 * self.n_faces
        graph = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return connected_components(graph, directed=False)

    def non_manifold_vertices(self):
        _, labels = self.fan_labels()
        pairs = np.unique(np.stack((self.faces.reshape(-1), labels), axis=1), axis=0)
        fans = np.bincount(pairs[:, 0], minlength=self.n_vertices)
        return np.flatnonzero(fans > 1)

    def is_manifold(self):
        '''
        Every edge has 1 or 2 faces and every vertex a single fan.
        '''
        if (np.any(self.edge_face_count > 2)):
            return False
        return len(self.non_manifold_vertices()) == 0

    def is_closed_manifold(self):
        return bool(np.all(self.edge_face_count == 2)) and self.is_manifold()

    def boundary_loop_count(self):
        b = self.boundary_edges
        if (not np.any(b)):
            return 0
        n = self.n_vertices
        be = self.edges[b]
        graph = sparse.csr_matrix((np.ones(len(be)), (be[:, 0], be[:, 1])), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        return len(np.unique(labels[self.boundary_vertices]))

    def euler_characteristic(self):
        return int(np.count_nonzero(self.referenced)) - self.n_edges + self.n_faces

    def genus(self):
        '''
        Genus of an orientable manifold, summed over components.
        '''
        n, labels = self.components()
        c = len(np.unique(labels[self.referenced]))
        return (2 * c - self.euler_characteristic() - self.boundary_loop_count()) // 2

    def __repr__(self):
        return "{}(vertices:{}, faces:{}, edges:{})".format(
            self.__class__.__name__,
            self.n_vertices,
            self.n_faces,
            self.n_edges,
        )



def _normalize_rows(a, fallback):
    norm = np.linalg.norm(a, axis=1)
    out = np.empty_like(a)
    ok = norm > 1e-300
    out[ok] = a[ok] / norm[ok, None]
    out[~ok] = fallback
    return out

def submesh(mesh, face_mask):
    '''
    Mesh of the selected faces, unreferenced vertices dropped.
    Vertex order is preserved.
    return
        (Mesh, kept vertex indices into the source)
    '''
    faces = mesh.faces[face_mask]
    if (len(faces) == 0):
        raise EmptyMeshError("Face selection is empty.")
    kept = np.unique(faces)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    normals = mesh.normals[kept] if mesh.custom_normals else None
    return Mesh(mesh.vertices[kept], remap[faces], normals), kept

def largest_component(mesh):
    '''
    Face mask of the connected component with the largest surface area.
    Ties go to the lowest component label.
    '''
    n, labels = mesh.face_components()
    if (n == 1):
        return np.ones(mesh.n_faces, dtype=bool)
    areas = np.bincount(labels, mesh.face_areas, minlength=n)
    return labels == int(np.argmax(areas))

def _overfull_edge_faces(mesh, areas):
    # faces to delete so no edge has more than two
    drop = set()
    for e in np.flatnonzero(mesh.edge_face_count > 2):
        remaining = [int(f) for f in mesh.incident_faces(e) if int(f) not in drop]
        remaining.sort(key=lambda f: (areas[f], f))
        while (len(remaining) > 2):
            drop.add(remaining.pop(0))
    return drop

def _bowtie_faces(mesh, areas):
    # faces of every fan but the largest at each bowtie vertex
    drop = set()
    bad = mesh.non_manifold_vertices()
    if (len(bad) == 0):
        return drop
    _, labels = mesh.fan_labels()
    corner_vertex = mesh.faces.reshape(-1)
    for v in bad:
        corners = np.flatnonzero(corner_vertex == v)
        fans = {}
        for c in corners:
            fans.setdefault(labels[c], []).append(c // 3)
        best = max(fans.values(), key=lambda fs: (sum(areas[f] for f in fs), -min(fs)))
        for fs in fans.values():
            if (fs is not best):
                drop.update(int(f) for f in fs)
    return drop

def clean(mesh, max_rounds=20):
    '''
    Keep the largest component and repair non-manifold elements by
    deleting faces: at an edge with more than two faces the smallest
    go first; at a bowtie vertex every fan but the largest goes.
    return
        (Mesh, kept vertex indices into the source). The source mesh is
        returned as-is when nothing needs removing.
    '''
    if (mesh.is_manifold() and mesh.face_components()[0] == 1 and np.all(mesh.referenced)):
        return mesh, np.arange(mesh.n_vertices)
    current = mesh
    kept = np.arange(mesh.n_vertices)
    for _ in range(max_rounds):
        areas = current.face_areas
        drop = _overfull_edge_faces(current, areas)
        if (not drop):
            drop = _bowtie_faces(current, areas)
        if (drop):
            mask = np.ones(current.n_faces, dtype=bool)
            mask[list(drop)] = False
            logger.debug("Repair deleted %s face(s)", len(drop))
        else:
            mask = largest_component(current)
            if (np.all(mask) and np.all(current.referenced)):
                return current, kept
        current, sub = submesh(current, mask)
        kept = kept[sub]
    validate_mesh(current)
    return current, kept

def preprocess_with_lineage(mesh, target_edges):
    '''
    Clean a scan and decimate it to exactly target_edges edges.
    return
        (Mesh, source vertex index for each output vertex)
    '''
    from mesh_corr.decimate import DecimationError, qslim_decimate

    cleaned, kept = clean(mesh)
    if (target_edges > cleaned.n_edges):
        raise DecimationError("Target edge count exceeds the mesh. target:{} edges:{}".format(
            target_edges,
            cleaned.n_edges
        ))
    if (target_edges == cleaned.n_edges):
        validate_mesh(cleaned)
        return cleaned, kept
    coarse, trace = qslim_decimate(cleaned, target_edges)
    validate_mesh(coarse)
    return coarse, kept[trace.vertex_lineage]

def preprocess(mesh, target_edges):
    '''
    Largest component, manifold repair, then decimation to
    target_edges edges.
    '''
    return preprocess_with_lineage(mesh, target_edges)[0]

def edge_features(mesh):
    '''
    Input features per edge: midpoint xyz and the renormalised mean of
    the endpoint normals.
    return
        (E,6) array
    '''
    mid = mesh.edge_midpoints
    n = mesh.normals[mesh.edges].sum(axis=1)
    norm = np.linalg.norm(n, axis=1)
    bad = norm < 1e-12
    if (np.any(bad)):
        fn = mesh.face_normals[mesh.edge_faces[bad, 0]]
        if (np.any(np.linalg.norm(fn, axis=1) < 0.5)):
            e = int(np.flatnonzero(bad)[0])
            raise DegenerateNormalError("No usable normal for edge. edge:{}".format(e), edge=e)
        n[bad] = fn
        norm[bad] = 1.0
    feats = np.concatenate((mid, n / norm[:, None]), axis=1)
    if (not np.all(np.isfinite(feats))):
        raise DegenerateNormalError("Non-finite edge features.")
    return feats

def subdivide(mesh):
    '''
    Midpoint subdivision, every face split in four.
    return
        (Mesh, parents (V',2)). Original vertices are their own parents,
        new vertices sit at the midpoint of their two parents.
    '''
    v = mesh.n_vertices
    mids = mesh.edge_midpoints
    fe = mesh.face_edges + v
    a, b, c = mesh.faces[:, 0], mesh.faces[:, 1], mesh.faces[:, 2]
    ab, bc, ca = fe[:, 0], fe[:, 1], fe[:, 2]
    faces = np.concatenate((
        np.stack((a, ab, ca), axis=1),
        np.stack((ab, b, bc), axis=1),
        np.stack((ca, bc, c), axis=1),
        np.stack((ab, bc, ca), axis=1),
    ))
    # keep the four children of each face together
    faces = faces.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    parents = np.concatenate((np.repeat(np.arange(v)[:, None], 2, axis=1), mesh.edges))
    return Mesh(np.concatenate((mesh.vertices, mids)), faces), parents

def icosphere(level=3, radius=1.0):
    '''
    Subdivided icosahedron. level 3 has 642 vertices and 1280 faces.
    '''
    s = creation.icosphere(subdivisions=level, radius=radius)
    return Mesh(np.asarray(s.vertices, dtype=np.float64), np.asarray(s.faces, dtype=np.int64))

def smooth_taubin(mesh, n=1, lambda_=0.5, mu=-0.53):
    '''
    Taubin smoothing, n pairs of shrink and inflate steps over the
    uniform neighbour Laplacian.
    return
        smoothed vertex positions
    '''
    tm = Trimesh(vertices=np.array(mesh.vertices), faces=mesh.faces, process=False)
    smoothing.filter_taubin(tm, lamb=lambda_, nu=-mu, iterations=2 * n)
    return np.asarray(tm.vertices, dtype=np.float64)
