'''
The template correspondence space: a Euclidean embedding of template
geodesic distances, labels that place scan points in it, and
nearest-vertex lookups back onto the template.
'''
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from sklearn import manifold

from mesh_corr.surface_field import all_pairs_geodesics
from mesh_corr.utils import MeshCorrError, read_table, write_table
from mesh_corr.validators import MeshValidationError


logger = logging.getLogger(__name__)

SMACOF_ITERATIONS = 300
SMACOF_TOLERANCE = 1e-7
# nearest-neighbour candidates examined for exact tie-breaking
NN_CANDIDATES = 8



class EmbeddingRankError(MeshCorrError):
    def __init__(self, message, rank):
        super().__init__("{} rank:{}".format(message, rank))
        self.rank = rank



def double_center(d2):
    '''
    -1/2 J D2 J, J the centering matrix.
    '''
    row = d2.mean(axis=1, keepdims=True)
    col = d2.mean(axis=0, keepdims=True)
    return -0.5 * (d2 - row - col + d2.mean())

def classical_mds(dist, d):
    '''
    Classical multidimensional scaling.

    dist
        (n,n) symmetric distances
    return
        (coordinates (n,d), eigenvalues descending, strain)
        Each coordinate column has its largest-magnitude entry positive.
    '''
    dist = np.asarray(dist, dtype=np.float64)
    b = double_center(dist * dist)
    w, v = np.linalg.eigh(b)
    order = np.argsort(w)[::-1]
    w = w[order]
    v = v[:, order]
    tol = 1e-12 * max(float(np.abs(w).max()), 1e-300)
    positive = w > tol
    rank = int(np.count_nonzero(positive))
    if (rank < d):
        raise EmbeddingRankError("Fewer positive eigenvalues than embedding dimensions.", rank)
    coords = v[:, :d] * np.sqrt(w[:d])
    for k in range(d):
        col = coords[:, k]
        if (col[np.argmax(np.abs(col))] < 0):
            coords[:, k] = -col
    coords -= coords.mean(axis=0)
    return coords, w, strain_from_spectrum(w, d)

def strain_from_spectrum(eigenvalues, d):
    '''
    Share of the positive spectrum left out by a d-dimensional
    embedding.
    '''
    pos = eigenvalues[eigenvalues > 0]
    return float(1.0 - pos[:d].sum() / pos.sum())

def strain_curve(eigenvalues, dims=range(1, 9)):
    '''
    return
        list of (d, strain)
    '''
    return [(d, strain_from_spectrum(eigenvalues, d)) for d in dims]



@dataclass(frozen=True)
class CorrespondenceField:
    '''
    Per-edge or per-vertex coordinates in the template embedding.

    on
        'edges' or 'vertices'
    predicted
        True for network output, False for ground truth
    '''
    values: np.ndarray
    on: str = 'edges'
    predicted: bool = True

    def __post_init__(self):
        if (not np.all(np.isfinite(self.values))):
            raise MeshValidationError(
                "Correspondence field has non-finite values.",
                code='non_finite',
            )

    def __len__(self):
        return len(self.values)

    def to_edges(self, mesh):
        if (self.on == 'edges'):
            return self
        return CorrespondenceField(self.values[mesh.edges].mean(axis=1), 'edges', self.predicted)

    def to_vertices(self, mesh):
        '''
        Edge values averaged over the edges at each vertex.
        '''
        if (self.on == 'vertices'):
            return self
        e = mesh.edges
        acc = np.zeros((mesh.n_vertices, self.values.shape[1]))
        np.add.at(acc, e[:, 0], self.values)
        np.add.at(acc, e[:, 1], self.values)
        count = np.bincount(e.reshape(-1), minlength=mesh.n_vertices)
        count[count == 0] = 1
        return CorrespondenceField(acc / count[:, None], 'vertices', self.predicted)



@dataclass(frozen=True)
class TemplateEmbedding:
    '''
    template
        rest-pose template Mesh
    omega
        (V,d) centered coordinates
    strain
        spectrum share left out by the d-dimensional embedding
    eigenvalues
        full spectrum when built here, None when loaded
    median_distortion
        relative distance error over sampled pairs, None when loaded
    '''
    template: object
    omega: np.ndarray
    strain: float
    eigenvalues: np.ndarray = None
    refined: bool = False
    median_distortion: float = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def d(self):
        return self.omega.shape[1]

    @property
    def tree(self):
        if (not 'tree' in self._cache):
            self._cache['tree'] = cKDTree(self.omega)
        return self._cache['tree']

    def strain_curve(self, dims=range(1, 9)):
        if (self.eigenvalues is None):
            raise MeshCorrError("Strain curve needs the spectrum; rebuild the embedding.")
        return strain_curve(self.eigenvalues, dims)


def embed_distances(dist, d, refine=False, seed=0):
    '''
    Embed a distance matrix.
    refine
        follow classical scaling with metric SMACOF stress majorization
    return
        (coordinates, eigenvalues, strain)
    '''
    coords, w, strain = classical_mds(dist, d)
    if (refine):
        coords, stress = manifold.smacof(
            dist,
            metric=True,
            n_components=d,
            init=coords,
            n_init=1,
            max_iter=SMACOF_ITERATIONS,
            eps=SMACOF_TOLERANCE,
            random_state=seed,
        )
        coords = coords - coords.mean(axis=0)
        logger.info("SMACOF refinement stress:%.6g", stress)
    return coords, w, strain

def build_embedding(template, d, smacof=False, seed=0):
    '''
    Embed the template's all-pairs geodesic distances in R^d.
    '''
    dist = all_pairs_geodesics(template)
    if (not np.all(np.isfinite(dist))):
        raise MeshValidationError(
            "Template is not connected.",
            code='disconnected',
        )
    omega, w, strain = embed_distances(dist, d, smacof, seed)
    emb = TemplateEmbedding(template, omega, strain, w, smacof)
    emb = replace(emb, median_distortion=distortion(emb, dist, seed=seed))
    logger.info(
        "Embedded template, vertices:%s d:%s strain:%.6g distortion:%.3g",
        template.n_vertices,
        d,
        strain,
        emb.median_distortion,
    )
    return emb

def ground_truth_field(scan, face_index, bary, emb):
    '''
    Labels for scan vertices with a known template location.

    face_index
        (V,) template face per scan vertex
    bary
        (V,3) barycentric coordinates in that face
    return
        per-vertex CorrespondenceField; .to_edges(scan) gives the
        per-edge labels
    '''
    face_index = np.asarray(face_index, dtype=np.int64)
    bary = np.asarray(bary, dtype=np.float64)
    if (len(face_index) != scan.n_vertices or bary.shape != (scan.n_vertices, 3)):
        raise MeshValidationError(
            "Barycentric table does not match the scan.",
            code='barycentric',
        )
    if (face_index.min() < 0 or face_index.max() >= emb.template.n_faces):
        raise MeshValidationError(
            "Barycentric face index out of range.",
            code='barycentric',
        )
    if (np.any(bary < -1e-9) or np.any(np.abs(bary.sum(axis=1) - 1.0) > 1e-6)):
        raise MeshValidationError(
            "Barycentric coordinates must be nonnegative and sum to one.",
            code='barycentric',
        )
    corners = emb.omega[emb.template.faces[face_index]]
    values = np.einsum('vk,vkd->vd', bary, corners)
    return CorrespondenceField(values, 'vertices', predicted=False)

def nn_query(emb, q):
    '''
    Template vertex nearest to q in the embedding, lowest index on
    ties.
    q
        (d,) or (n,d)
    return
        int, or (n,) indices
    '''
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    r = nearest_index(emb.tree, emb.omega, np.atleast_2d(q))
    return int(r[0]) if single else r

def nearest_index(tree, data, q, workers=1):
    '''
    Row of data nearest each query row, lowest index on ties.
    tree
        cKDTree over data
    '''
    q = np.asarray(q)
    out = np.empty(len(q), dtype=np.int64)
    rows = np.arange(len(q))
    k = min(NN_CANDIDATES, len(data))
    while (len(rows)):
        _, idx = tree.query(q[rows], k=k, workers=workers)
        idx = idx.reshape(len(rows), k)
        # exact distances so ties are decided the same way as a linear scan
        d2 = ((data[idx] - q[rows, None, :]) ** 2).sum(axis=2)
        best = d2 == d2.min(axis=1, keepdims=True)
        out[rows] = np.where(best, idx, np.iinfo(np.int64).max).min(axis=1)
        # all candidates tied, more may lie beyond
        if (k == len(data)):
            break
        rows = rows[best[:, -1]]
        k = min(2 * k, len(data))
    return out

def mds_error(predicted, truth):
    '''
    Mean Euclidean distance between predicted and true coordinates.
    '''
    p = predicted.values if isinstance(predicted, CorrespondenceField) else np.asarray(predicted)
    t = truth.values if isinstance(truth, CorrespondenceField) else np.asarray(truth)
    if (p.shape != t.shape):
        raise MeshValidationError(
            "Field shapes differ. predicted:%(p)s truth:%(t)s",
            code='rows',
            params={'p': p.shape, 't': t.shape},
        )
    return float(np.linalg.norm(p - t, axis=1).mean())

def distortion(emb, dist, pairs=2000, seed=0):
    '''
    Median relative error of embedded distances against geodesic
    distances over sampled vertex pairs.
    '''
    rng = np.random.default_rng(seed)
    n = len(emb.omega)
    i = rng.integers(0, n, pairs)
    j = rng.integers(0, n, pairs)
    g = dist[i, j]
    ok = g > 0
    e = np.linalg.norm(emb.omega[i[ok]] - emb.omega[j[ok]], axis=1)
    return float(np.median(np.abs(e - g[ok]) / g[ok]))

def save_embedding(emb, path):
    write_table(path, emb.omega, emb.strain)

def load_embedding(path, template):
    omega, strain = read_table(path)
    if (len(omega) != template.n_vertices):
        raise MeshValidationError(
            "Embedding rows do not match the template. rows:%(rows)s vertices:%(vertices)s",
            code='rows',
            params={'rows': len(omega), 'vertices': template.n_vertices},
        )
    return TemplateEmbedding(template, omega, float(strain))
