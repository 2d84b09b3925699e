'''
Quadric-error edge-collapse decimation, and the sparse maps that move
edge features between a mesh and its decimated version.
'''
import heapq
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from mesh_corr.constants import MAXPOOL_THRESHOLD, QUADRIC_CONDITION_LIMIT
from mesh_corr.mesh_core import Mesh
from mesh_corr.utils import MeshCorrError


logger = logging.getLogger(__name__)



class DecimationError(MeshCorrError):
    pass


class DecimationFloorError(DecimationError):
    '''
    No legal collapse remains. achieved is the edge count reached.
    '''
    def __init__(self, message, achieved):
        super().__init__("{} achieved:{}".format(message, achieved))
        self.achieved = achieved


class PoolingShapeError(MeshCorrError):
    pass



@dataclass(frozen=True)
class Collapse:
    '''
    One edge collapse. Vertex and face numbers are those of the source
    mesh; edge numbers are source edge ids, which an edge keeps while it
    survives.

    involved
        collapsed edge, then (keep, a), (remove, a), (keep, b),
        (remove, b) where a, b are the opposite vertices; -1 on a
        boundary side
    merges
        (into, source, w_into, w_source, w_edge) per removed face: the
        source edge and the collapsed edge are folded into the surviving
        edge, weighted by length
    '''
    edge: int
    keep: int
    remove: int
    faces: tuple
    involved: tuple
    position: tuple
    merges: tuple


@dataclass
class CollapseTrace:
    source_edges: int
    target_edges: int
    collapses: list = field(default_factory=list)
    # coarse vertex -> source vertex
    vertex_lineage: np.ndarray = None
    # coarse edge -> source edge id of the surviving edge
    edge_order: np.ndarray = None
    source_midpoints: np.ndarray = None

    def __len__(self):
        return len(self.collapses)



def _plane_quadric(normal, point, weight):
    p = np.append(normal, -np.dot(normal, point))
    return weight * np.outer(p, p)


class QuadricDecimator:
    '''
    Mutable collapse state for one mesh. Use qslim_decimate().
    '''
    boundary_weight = 10.0

    def __init__(self, mesh):
        self.mesh = mesh
        self.pos = np.array(mesh.vertices)
        self.faces = np.array(mesh.faces)
        self.face_alive = np.ones(mesh.n_faces, dtype=bool)
        self.vertex_alive = mesh.referenced.copy()
        self.vertex_faces = [set() for _ in range(mesh.n_vertices)]
        for f, tri in enumerate(self.faces):
            for v in tri:
                self.vertex_faces[v].add(f)
        self.edge_id = {(int(a), int(b)): i for i, (a, b) in enumerate(mesh.edges)}
        self.edge_key = {i: k for k, i in self.edge_id.items()}
        self.n_edges = mesh.n_edges
        self.stamp = np.zeros(mesh.n_edges, dtype=np.int64)
        self.scale = float(np.mean(mesh.edge_lengths)) if mesh.n_edges else 1.0
        self._init_quadrics()

    def _init_quadrics(self):
        mesh = self.mesh
        q = np.zeros((mesh.n_vertices, 4, 4))
        normals = mesh.face_normals
        areas = mesh.face_areas
        for f, tri in enumerate(mesh.faces):
            k = _plane_quadric(normals[f], mesh.vertices[tri[0]], areas[f])
            for v in tri:
                q[v] += k
        # planes through boundary edges, perpendicular to their face
        for e in np.flatnonzero(mesh.boundary_edges):
            a, b = mesh.edges[e]
            f = mesh.edge_faces[e, 0]
            d = mesh.vertices[b] - mesh.vertices[a]
            n = np.cross(d, normals[f])
            length = np.linalg.norm(n)
            if (length < 1e-300):
                continue
            k = _plane_quadric(n / length, mesh.vertices[a], self.boundary_weight * np.dot(d, d))
            q[a] += k
            q[b] += k
        self.quadrics = q

    ## topology queries
    def key(self, a, b):
        return (a, b) if a < b else (b, a)

    def edge_faces(self, a, b):
        return self.vertex_faces[a] & self.vertex_faces[b]

    def neighbours(self, v):
        r = set()
        for f in self.vertex_faces[v]:
            r.update(int(x) for x in self.faces[f])
        r.discard(v)
        return r

    def third(self, f, a, b):
        for x in self.faces[f]:
            if (x != a and x != b):
                return int(x)

    def is_boundary_vertex(self, v):
        return any(len(self.edge_faces(v, w)) == 1 for w in self.neighbours(v))

    def incident_edges(self, v):
        return [self.edge_id[self.key(v, w)] for w in self.neighbours(v)]

    ## costs
    def placement(self, a, b):
        '''
        return
            (keep, remove, position) or None when the edge may not
            collapse on boundary grounds
        '''
        fs = self.edge_faces(a, b)
        ba = self.is_boundary_vertex(a)
        bb = self.is_boundary_vertex(b)
        if (len(fs) == 2 and ba and bb):
            return None
        if (len(fs) == 2 and (ba or bb)):
            keep, remove = (a, b) if ba else (b, a)
            return keep, remove, self.pos[keep].copy()
        keep, remove = (a, b) if a < b else (b, a)
        q = self.quadrics[a] + self.quadrics[b]
        m = q[:3, :3]
        x = None
        with np.errstate(all='ignore'):
            cond = np.linalg.cond(m)
        if (np.isfinite(cond) and cond <= QUADRIC_CONDITION_LIMIT):
            x = np.linalg.solve(m, -q[:3, 3])
        if (x is None or not np.all(np.isfinite(x))):
            x = 0.5 * (self.pos[a] + self.pos[b])
        return keep, remove, x

    def cost(self, a, b, x):
        h = np.append(x, 1.0)
        q = self.quadrics[a] + self.quadrics[b]
        return max(0.0, float(h @ q @ h))

    def candidate(self, eid):
        a, b = self.edge_key[eid]
        placed = self.placement(a, b)
        if (placed is None):
            return None
        return self.cost(a, b, placed[2])

    ## legality
    def link_ok(self, a, b, fs):
        opposite = {self.third(f, a, b) for f in fs}
        if (self.neighbours(a) & self.neighbours(b) != opposite):
            return False
        if (len(fs) == 1):
            c = opposite.pop()
            # an isolated triangle or a three-edge hole would close up
            if (len(self.edge_faces(a, c)) == 1 and len(self.edge_faces(b, c)) == 1):
                return False
        return True

    def geometry_ok(self, keep, remove, x, fs):
        eps = 1e-12 * self.scale * self.scale
        for v in (keep, remove):
            for f in self.vertex_faces[v]:
                if (f in fs):
                    continue
                tri = self.faces[f]
                p = self.pos[tri]
                old = np.cross(p[1] - p[0], p[2] - p[0])
                q = p.copy()
                q[tri == keep] = x
                q[tri == remove] = x
                new = np.cross(q[1] - q[0], q[2] - q[0])
                new_len = np.linalg.norm(new)
                if (new_len < eps):
                    return False
                if (np.dot(old, new) <= 0.0):
                    return False
        return True

    def reduction(self, fs):
        return 3 if len(fs) == 2 else 2

    ## collapse
    def collapse(self, eid, keep, remove, x, fs):
        merges = []
        involved = [eid]
        removed_edges = [eid]
        opposite = set()
        le = np.linalg.norm(self.pos[keep] - self.pos[remove])
        for f in sorted(fs):
            c = self.third(f, keep, remove)
            opposite.add(c)
            into = self.edge_id[self.key(keep, c)]
            src = self.edge_id[self.key(remove, c)]
            lk = np.linalg.norm(self.pos[keep] - self.pos[c])
            lr = np.linalg.norm(self.pos[remove] - self.pos[c])
            total = lk + lr + le
            if (total <= 0.0):
                w = (1.0 / 3.0,) * 3
            else:
                w = (lk / total, lr / total, le / total)
            merges.append((into, src) + tuple(float(x) for x in w))
            involved.extend((into, src))
            removed_edges.append(src)
        while (len(involved) < 5):
            involved.append(-1)
        for f in fs:
            self.face_alive[f] = False
            for v in self.faces[f]:
                self.vertex_faces[v].discard(f)
        for e in removed_edges:
            del self.edge_id[self.edge_key.pop(e)]
        # re-key the remaining edges of the removed vertex
        for w in self.neighbours(remove):
            if (w in opposite):
                # merged into (keep, w) above
                continue
            old = self.key(remove, w)
            e = self.edge_id.pop(old)
            k = self.key(keep, w)
            self.edge_id[k] = e
            self.edge_key[e] = k
        for f in list(self.vertex_faces[remove]):
            tri = self.faces[f]
            tri[tri == remove] = keep
            self.vertex_faces[keep].add(f)
        self.vertex_faces[remove] = set()
        self.vertex_alive[remove] = False
        self.pos[keep] = x
        self.quadrics[keep] = self.quadrics[keep] + self.quadrics[remove]
        self.n_edges -= len(removed_edges)
        fs_sorted = sorted(fs)
        return Collapse(
            edge=int(eid),
            keep=int(keep),
            remove=int(remove),
            faces=tuple(int(f) for f in fs_sorted) + (-1,) * (2 - len(fs_sorted)),
            involved=tuple(int(e) for e in involved),
            position=tuple(float(c) for c in x),
            merges=tuple(merges),
        )

    def push(self, heap, eid):
        self.stamp[eid] += 1
        c = self.candidate(eid)
        if (c is not None):
            heapq.heappush(heap, (c, int(eid), int(self.stamp[eid])))

    def run(self, target_edges):
        heap = []
        for eid in self.edge_key:
            c = self.candidate(eid)
            if (c is not None):
                heap.append((c, int(eid), 0))
        heapq.heapify(heap)
        deferred = []
        collapses = []
        while (self.n_edges > target_edges):
            if (not heap):
                raise DecimationFloorError("No legal collapse remains.", self.n_edges)
            cost, eid, stamp = heapq.heappop(heap)
            if (not(eid in self.edge_key) or stamp != self.stamp[eid]):
                continue
            a, b = self.edge_key[eid]
            placed = self.placement(a, b)
            if (placed is None):
                continue
            keep, remove, x = placed
            fs = self.edge_faces(a, b)
            remaining = self.n_edges - self.reduction(fs) - target_edges
            if (remaining != 0 and remaining < 2):
                deferred.append((cost, eid, stamp))
                continue
            if (np.count_nonzero(self.vertex_alive) <= 4):
                continue
            if (not self.link_ok(a, b, fs) or not self.geometry_ok(keep, remove, x, fs)):
                continue
            collapses.append(self.collapse(eid, keep, remove, x, fs))
            touched = set(self.incident_edges(keep))
            for w in self.neighbours(keep):
                touched.update(self.incident_edges(w))
            for e in sorted(touched):
                self.push(heap, e)
            for entry in deferred:
                heapq.heappush(heap, entry)
            deferred = []
        return collapses

    def result(self):
        kept = np.unique(self.faces[self.face_alive])
        remap = np.full(len(self.pos), -1, dtype=np.int64)
        remap[kept] = np.arange(len(kept))
        coarse = Mesh(self.pos[kept], remap[self.faces[self.face_alive]])
        order = np.array([self.edge_id[(int(kept[i]), int(kept[j]))] for i, j in coarse.edges], dtype=np.int64)
        return coarse, kept, order



def qslim_decimate(mesh, target_edges):
    '''
    Quadric-error decimation down to exactly target_edges edges.

    Collapses are taken cheapest first; equal costs go to the lower
    edge id. A collapse is skipped when it would break the link
    condition, flip or flatten a face, pinch a boundary, or leave an
    edge deficit that cannot be closed exactly.
    return
        (Mesh, CollapseTrace)
    '''
    m = mesh.n_edges
    if (target_edges > m):
        raise DecimationError("Target edge count exceeds the mesh. target:{} edges:{}".format(target_edges, m))
    if (target_edges < 6):
        raise DecimationFloorError("Target edge count below the smallest closed mesh.", m)
    if (target_edges == m):
        trace = CollapseTrace(
            source_edges=m,
            target_edges=m,
            vertex_lineage=np.arange(mesh.n_vertices),
            edge_order=np.arange(m),
            source_midpoints=mesh.edge_midpoints,
        )
        return mesh, trace
    dec = QuadricDecimator(mesh)
    collapses = dec.run(target_edges)
    coarse, kept, order = dec.result()
    logger.debug("Decimated %s -> %s edges, %s collapses", m, coarse.n_edges, len(collapses))
    trace = CollapseTrace(
        source_edges=m,
        target_edges=target_edges,
        collapses=collapses,
        vertex_lineage=kept,
        edge_order=order,
        source_midpoints=mesh.edge_midpoints,
    )
    return coarse, trace

def replay_trace(mesh, trace):
    '''
    Apply the collapses of a trace to its source mesh.
    '''
    pos = np.array(mesh.vertices)
    faces = np.array(mesh.faces)
    alive = np.ones(len(faces), dtype=bool)
    for c in trace.collapses:
        for f in c.faces:
            if (f >= 0):
                alive[f] = False
        faces[faces == c.remove] = c.keep
        pos[c.keep] = c.position
    if (not trace.collapses):
        return mesh
    kept = np.unique(faces[alive])
    remap = np.full(len(pos), -1, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    return Mesh(pos[kept], remap[faces[alive]])

def target_for_ratio(mesh, ratio):
    '''
    Edge count for the next level down. Closed meshes lose edges three
    at a time, so the count is kept a multiple of three there.
    '''
    t = int(round(mesh.n_edges / ratio))
    if (not np.any(mesh.boundary_edges)):
        t = 3 * int(round(t / 3.0))
    return max(t, 6)

def decimate_levels(mesh, levels, ratio=4):
    '''
    Successive decimations for a multi-level hierarchy.
    return
        (meshes, traces), len(meshes) == levels, len(traces) == levels-1
    '''
    meshes = [mesh]
    traces = []
    for _ in range(levels - 1):
        coarse, trace = qslim_decimate(meshes[-1], target_for_ratio(meshes[-1], ratio))
        meshes.append(coarse)
        traces.append(trace)
    return meshes, traces



class PoolingMap:
    '''
    Sparse row-stochastic n x m matrix carrying edge features from a
    mesh with m edges to its decimation with n edges.

    matrix
        scipy sparse, rows sum to 1
    source_midpoints
        (m,3) fine edge midpoints, used to fill fine edges no coarse
        edge covers when unpooling
    '''
    pool_header = struct.Struct('<III')
    coo_dtype = np.dtype([('row', '<u4'), ('col', '<u4'), ('weight', '<f4')])

    def __init__(self, matrix, source_midpoints=None):
        matrix = sparse.csr_matrix(matrix, dtype=np.float64)
        matrix.eliminate_zeros()
        matrix.sort_indices()
        self.matrix = matrix
        self.n, self.m = matrix.shape
        self.source_midpoints = source_midpoints
        covered = np.zeros(self.m, dtype=bool)
        covered[matrix.indices] = True
        self.discarded = np.flatnonzero(~covered)
        self._build_support()
        self._build_unpool()

    def _build_support(self):
        mat = self.matrix
        support = []
        for r in range(self.n):
            cols = mat.indices[mat.indptr[r]:mat.indptr[r + 1]]
            w = mat.data[mat.indptr[r]:mat.indptr[r + 1]]
            keep = cols[w >= MAXPOOL_THRESHOLD]
            if (len(keep) == 0):
                # every weight under the threshold: keep the heaviest
                keep = cols[[int(np.argmax(w))]]
            support.append(keep)
        self.support = support
        width = max(len(s) for s in support)
        index = np.empty((self.n, width), dtype=np.int64)
        for r, s in enumerate(support):
            index[r, :len(s)] = s
            index[r, len(s):] = s[0]
        self.support_index = index

    def _build_unpool(self):
        dt = self.matrix.T.tocsr()
        colsum = np.asarray(dt.sum(axis=1)).reshape(-1)
        supported = colsum > 0
        scale = np.zeros(self.m)
        scale[supported] = 1.0 / colsum[supported]
        u = sparse.diags(scale) @ dt
        if (not np.all(supported)):
            if (self.source_midpoints is None):
                logger.warning("Pooling map has %s uncovered edges and no midpoints to fill them", int(np.count_nonzero(~supported)))
            else:
                src = np.flatnonzero(supported)
                tree = cKDTree(self.source_midpoints[src])
                _, nn = tree.query(self.source_midpoints[~supported])
                target = np.arange(self.m)
                target[~supported] = src[nn]
                pick = sparse.csr_matrix((np.ones(self.m), (np.arange(self.m), target)), shape=(self.m, self.m))
                u = pick @ u
        self.unpool_matrix = sparse.csr_matrix(u)

    def save(self, path):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        table = np.empty(coo.nnz, dtype=self.coo_dtype)
        table['row'] = coo.row[order]
        table['col'] = coo.col[order]
        table['weight'] = coo.data[order]
        data = self.pool_header.pack(self.m, self.n, coo.nnz) + table.tobytes()
        Path(path).write_bytes(data)

    @classmethod
    def load(cls, path, source_midpoints=None):
        data = Path(path).read_bytes()
        m, n, nnz = cls.pool_header.unpack_from(data)
        table = np.frombuffer(data, dtype=cls.coo_dtype, count=nnz, offset=cls.pool_header.size)
        mat = sparse.csr_matrix(
            (table['weight'].astype(np.float64), (table['row'].astype(np.int64), table['col'].astype(np.int64))),
            shape=(n, m),
        )
        # f32 weights: renormalise rows
        rowsum = np.asarray(mat.sum(axis=1)).reshape(-1)
        rowsum[rowsum == 0] = 1.0
        return cls(sparse.diags(1.0 / rowsum) @ mat, source_midpoints)

    def __repr__(self):
        return "{}(m:{}, n:{}, nnz:{})".format(
            self.__class__.__name__,
            self.m,
            self.n,
            self.matrix.nnz,
        )



def build_pooling_map(trace):
    '''
    Compose the per-collapse averages of a trace into one map.
    Each surviving edge is the edge-length weighted average of itself,
    the edge removed with its face and the collapsed edge, so every
    source edge reaches at least one coarse edge.
    '''
    rows = {i: {i: 1.0} for i in range(trace.source_edges)}
    for c in trace.collapses:
        edge = rows.pop(c.edge)
        for into, src, w_into, w_src, w_edge in c.merges:
            merged = {k: w_into * v for k, v in rows[into].items()}
            for part, w in ((rows.pop(src), w_src), (edge, w_edge)):
                for k, v in part.items():
                    merged[k] = merged.get(k, 0.0) + w * v
            rows[into] = merged
    r_idx = []
    c_idx = []
    weights = []
    for r, eid in enumerate(trace.edge_order):
        row = rows[int(eid)]
        total = sum(row.values())
        for k in sorted(row):
            r_idx.append(r)
            c_idx.append(k)
            weights.append(row[k] / total)
    mat = sparse.csr_matrix(
        (weights, (r_idx, c_idx)),
        shape=(len(trace.edge_order), trace.source_edges),
    )
    return PoolingMap(mat, trace.source_midpoints)

def _check_rows(D, f, expected):
    if (f.shape[0] != expected):
        raise PoolingShapeError("Feature rows do not match the pooling map. rows:{} expected:{}".format(
            f.shape[0],
            expected
        ))

def mean_pool(D, f):
    _check_rows(D, f, D.m)
    return D.matrix @ f

def max_pool(D, f):
    '''
    Channel-wise maximum over each coarse edge's support.
    return
        (n x channels features, n x channels source edge of each maximum)
    '''
    _check_rows(D, f, D.m)
    gathered = f[D.support_index]
    arg = np.argmax(gathered, axis=1)
    out = np.take_along_axis(gathered, arg[:, None, :], axis=1)[:, 0, :]
    src = np.take_along_axis(D.support_index, arg, axis=1)
    return out, src

def unpool(D, g):
    '''
    Back to the fine mesh: each fine edge takes the weighted average of
    its coarse parents; uncovered fine edges copy the nearest covered
    one.
    '''
    _check_rows(D, g, D.n)
    return D.unpool_matrix @ g
