'''
Geometric operations behind the scan filters. Every operation takes
and returns a ScanState so per-vertex labels follow the surface.
'''
import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from mesh_corr.mesh_core import EmptyMeshError, Mesh, clean, subdivide, submesh
from mesh_corr.surface_field import augmented_graph, geodesic_distances


logger = logging.getLogger(__name__)



@dataclass(frozen=True)
class ScanState:
    '''
    A scan in progress.

    rest
        (V,3) where each vertex sits on the rest template
    template_face
        (V,) template face holding that rest position
    segments
        (V,) body segment (joint index) per vertex
    '''
    mesh: Mesh
    rest: np.ndarray
    template_face: np.ndarray
    segments: np.ndarray

    @classmethod
    def from_template(cls, template, posed_vertices, segments):
        face, _ = template.vertex_face
        return cls(
            template.with_vertices(posed_vertices),
            template.vertices.copy(),
            face,
            np.asarray(segments, dtype=np.int64),
        )

    def take(self, mesh, kept):
        return ScanState(mesh, self.rest[kept], self.template_face[kept], self.segments[kept])

    def barycentric(self, template):
        '''
        return
            (V,3) barycentric coordinates of rest in template_face
        '''
        tri = template.vertices[template.faces[self.template_face]]
        a = tri[:, 0]
        v0 = tri[:, 1] - a
        v1 = tri[:, 2] - a
        v2 = self.rest - a
        d00 = (v0 * v0).sum(axis=1)
        d01 = (v0 * v1).sum(axis=1)
        d11 = (v1 * v1).sum(axis=1)
        d20 = (v2 * v0).sum(axis=1)
        d21 = (v2 * v1).sum(axis=1)
        denom = d00 * d11 - d01 * d01
        denom[np.abs(denom) < 1e-300] = 1.0
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        r = np.clip(np.stack((1.0 - v - w, v, w), axis=1), 0.0, 1.0)
        return r / r.sum(axis=1, keepdims=True)



def subdivide_scan(state, times=1):
    '''
    Midpoint subdivision of a scan whose faces are still the template's,
    face for face. New vertices take the rest midpoint and the first
    parent's segment; child faces stay inside their parent's template
    face.
    '''
    mesh = state.mesh
    rest = state.rest
    segments = state.segments
    origin = np.arange(mesh.n_faces)
    for _ in range(times):
        mesh, parents = subdivide(mesh)
        rest = rest[parents].mean(axis=1)
        segments = segments[parents[:, 0]]
        origin = np.repeat(origin, 4)
    vface, _ = mesh.vertex_face
    return ScanState(mesh, rest, origin[vface], segments)

def apply_face_mask(state, mask):
    '''
    Keep the selected faces, then repair to a single manifold
    component.
    '''
    if (not np.any(mask)):
        raise EmptyMeshError("Every face was removed.")
    mesh, kept = submesh(state.mesh, mask)
    mesh, kept2 = clean(mesh)
    return state.take(mesh, kept[kept2])



## Weld
def contact_pairs(state, distance, rest_separation):
    '''
    Vertex pairs from distinct segments that are closer than distance
    when posed but were far apart at rest.
    return
        (n,2) array, lower index first
    '''
    pairs = cKDTree(state.mesh.vertices).query_pairs(distance, output_type='ndarray')
    if (len(pairs) == 0):
        return pairs.reshape(0, 2)
    pairs = np.sort(pairs, axis=1)
    s = state.segments
    apart = np.linalg.norm(state.rest[pairs[:, 0]] - state.rest[pairs[:, 1]], axis=1) > rest_separation
    keep = (s[pairs[:, 0]] != s[pairs[:, 1]]) & apart
    return pairs[keep]

def _loop(mesh, face_mask):
    '''
    The single boundary loop around a face region, ordered along the
    half-edges of the faces outside it. None if the region is not a
    disk.
    '''
    inside = np.zeros(mesh.n_edges, dtype=np.int64)
    np.add.at(inside, mesh.face_edges[face_mask].reshape(-1), 1)
    rim = np.flatnonzero((inside == 1) & (mesh.edge_face_count == 2))
    if (len(rim) < 3 or np.any(inside[mesh.edge_face_count == 1] > 0)):
        return None
    succ = {}
    for e in rim:
        f = [g for g in mesh.edge_faces[e] if g >= 0 and not face_mask[g]][0]
        tri = mesh.faces[f]
        a, b = mesh.edges[e]
        for k in range(3):
            if (tri[k] == a and tri[(k + 1) % 3] == b):
                u, v = a, b
                break
            if (tri[k] == b and tri[(k + 1) % 3] == a):
                u, v = b, a
                break
        if (u in succ):
            return None
        succ[int(u)] = int(v)
    start = min(succ)
    loop = [start]
    while True:
        nxt = succ.get(loop[-1])
        if (nxt is None):
            return None
        if (nxt == start):
            break
        if (len(loop) > len(succ)):
            return None
        loop.append(nxt)
    if (len(loop) != len(succ)):
        return None
    return loop

def bridge(mesh, loop_a, loop_b):
    '''
    Triangles joining two boundary loops that face each other, each
    step advancing along the loop with the shorter diagonal.
    '''
    p = mesh.vertices
    a = list(loop_a)
    # the opposite hole runs the other way round seen along the bridge
    b = list(reversed(loop_b))
    k0 = int(np.argmin(np.linalg.norm(p[b] - p[a[0]], axis=1)))
    b = b[k0:] + b[:k0]
    n, m = len(a), len(b)
    i = j = 0
    faces = []
    while (i < n or j < m):
        ai, ai1 = a[i % n], a[(i + 1) % n]
        bj, bj1 = b[j % m], b[(j + 1) % m]
        step_a = i < n and (j >= m or np.linalg.norm(p[ai1] - p[bj]) <= np.linalg.norm(p[bj1] - p[ai]))
        if (step_a):
            faces.append((ai1, ai, bj))
            i += 1
        else:
            faces.append((bj, bj1, ai))
            j += 1
    return np.array(faces, dtype=np.int64)

def weld(state, distance, rest_separation):
    '''
    Fuse the surface where distinct body parts touch: the one-ring
    around each contact is cut out on both sides and the two openings
    joined by a bridge, so the genus can rise.
    return
        (ScanState, number of bridges)
    '''
    mesh = state.mesh
    pairs = contact_pairs(state, distance, rest_separation)
    if (len(pairs) == 0):
        return state, 0
    contact = np.zeros(mesh.n_vertices, dtype=bool)
    contact[pairs.reshape(-1)] = True
    near = contact[mesh.faces].any(axis=1)
    # face regions around contacts, joined across shared edges
    e = np.flatnonzero(mesh.edge_face_count == 2)
    f1, f2 = mesh.edge_faces[e, 0], mesh.edge_faces[e, 1]
    both = near[f1] & near[f2]
    graph = sparse.csr_matrix(
        (np.ones(int(both.sum())), (f1[both], f2[both])),
        shape=(mesh.n_faces, mesh.n_faces),
    )
    _, region = connected_components(graph, directed=False)
    region = np.where(near, region, -1)
    vregion = np.full(mesh.n_vertices, -1, dtype=np.int64)
    vf, _ = mesh.vertex_face
    vregion[contact] = region[vf[contact]]
    links = sorted({
        (int(min(ra, rb)), int(max(ra, rb)))
        for ra, rb in zip(vregion[pairs[:, 0]], vregion[pairs[:, 1]])
        if ra >= 0 and rb >= 0 and ra != rb
    })
    drop = np.zeros(mesh.n_faces, dtype=bool)
    used = set()
    new_faces = []
    for ra, rb in links:
        if (ra in used or rb in used):
            continue
        ma = region == ra
        mb = region == rb
        la = _loop(mesh, ma)
        lb = _loop(mesh, mb)
        if (la is None or lb is None or set(la) & set(lb)):
            continue
        if (drop[_touching(mesh, la + lb)].any()):
            continue
        used.update((ra, rb))
        drop |= ma | mb
        new_faces.append(bridge(mesh, la, lb))
    if (not new_faces):
        return state, 0
    faces = np.concatenate([mesh.faces[~drop]] + new_faces)
    fused = Mesh(mesh.vertices, faces)
    result, kept = submesh(fused, np.ones(fused.n_faces, dtype=bool))
    logger.debug("Weld bridged %s contact(s)", len(new_faces))
    return state.take(result, kept), len(new_faces)

def _touching(mesh, vertices):
    '''
    Faces with a corner in vertices.
    '''
    mark = np.zeros(mesh.n_vertices, dtype=bool)
    mark[vertices] = True
    return mark[mesh.faces].any(axis=1)



## Occlusion
def view_basis(azimuth, elevation):
    '''
    return
        (right, up, forward) unit vectors of an orthographic camera
        looking at the origin
    '''
    forward = -np.array([
        np.cos(elevation) * np.cos(azimuth),
        np.cos(elevation) * np.sin(azimuth),
        np.sin(elevation),
    ])
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return right, up, forward

def _encode(ids):
    return [(int(i) & 0xFF, (int(i) >> 8) & 0xFF, (int(i) >> 16) & 0xFF) for i in ids]

def visible_faces(mesh, azimuth, elevation, size):
    '''
    Faces seen from one direction: front faces painted far to near into
    a face-id image.
    return
        bool mask over faces
    '''
    right, up, forward = view_basis(azimuth, elevation)
    center = mesh.vertices.mean(axis=0)
    p = mesh.vertices - center
    u = p @ right
    v = p @ up
    depth = p @ forward
    extent = max(np.abs(u).max(), np.abs(v).max(), 1e-9)
    scale = 0.5 * (size - 1) / extent
    px = (u * scale + 0.5 * (size - 1))
    py = (0.5 * (size - 1) - v * scale)
    front = (mesh.face_normals @ -forward) > 0
    order = np.flatnonzero(front)
    order = order[np.argsort(-depth[mesh.faces[order]].mean(axis=1), kind='stable')]
    image = PILImage.new('RGB', (size, size), (0, 0, 0))
    draw = ImageDraw.Draw(image)
    colours = _encode(order + 1)
    for f, colour in zip(order, colours):
        tri = mesh.faces[f]
        draw.polygon([(px[k], py[k]) for k in tri], fill=colour)
    a = np.asarray(image, dtype=np.int64)
    ids = a[..., 0] | (a[..., 1] << 8) | (a[..., 2] << 16)
    seen = np.unique(ids)
    seen = seen[seen > 0] - 1
    mask = np.zeros(mesh.n_faces, dtype=bool)
    mask[seen] = True
    return mask

def occlude(state, viewpoints, elevation, size):
    '''
    Delete faces no viewpoint sees. Viewpoints circle the scan evenly.
    '''
    seen = np.zeros(state.mesh.n_faces, dtype=bool)
    for k in range(viewpoints):
        seen |= visible_faces(state.mesh, 2.0 * np.pi * k / viewpoints, elevation, size)
    logger.debug("Occlusion removes %s of %s faces", int((~seen).sum()), state.mesh.n_faces)
    return apply_face_mask(state, seen)



## Amputation
def amputate(state, seed_point, radius):
    '''
    Delete every face within a geodesic radius of the scan vertex whose
    rest position is nearest seed_point.
    '''
    seed = int(np.argmin(np.linalg.norm(state.rest - seed_point, axis=1)))
    mesh = state.mesh
    d = geodesic_distances(mesh, seed, augmented_graph(mesh)).distances
    inside = (d[mesh.faces] < radius).any(axis=1)
    return apply_face_mask(state, ~inside)



@dataclass
class ScanContext:
    '''
    What a filter may use besides the scan.
    notes
        filter name -> value, written to the dataset manifest
    '''
    rng: np.random.Generator
    body: object
    notes: dict
