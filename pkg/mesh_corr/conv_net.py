'''
Edge-based mesh convolution and the multi-level U-shaped network that
regresses template-embedding coordinates per edge.

Each edge convolves over a fixed 13-edge patch: itself, the four other
edges of its two faces, and the eight edges of the faces beyond. Rings
are ordered counter-clockwise seen from outside, starting at the edge
best aligned with a signal gradient, so the kernel sees a consistent
orientation from scan to scan.
'''
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.spatial import cKDTree
from torch import nn

from mesh_corr.constants import (
    INPUT_WIDTH,
    LOSS_EPSILON,
    PATCH_SIZE,
    RING1_SIZE,
    RING2_SIZE,
)
from mesh_corr.decimate import build_pooling_map, decimate_levels
from mesh_corr.embedding import CorrespondenceField, nearest_index
from mesh_corr.mesh_core import edge_features, preprocess_with_lineage
from mesh_corr.surface_field import signal_function
from mesh_corr.utils import MeshCorrError, worker_count


logger = logging.getLogger(__name__)



class NonManifoldEdgeError(MeshCorrError):
    def __init__(self, message, edge):
        super().__init__("{} edge:{}".format(message, edge))
        self.edge = edge


class TrainingError(MeshCorrError):
    def __init__(self, message, batch, epoch=None):
        super().__init__("{} epoch:{} batch:{}".format(message, epoch, batch))
        self.batch = batch
        self.epoch = epoch



## Patches
@dataclass(frozen=True)
class PatchTable:
    '''
    index
        (E,13) edge ids. Column 0 is the edge, 1-4 the first ring,
        5-12 the second ring.
    rings
        (E,13) the same rows before orientation, each ring starting
        at the first face's edges
    shift1, shift2
        per-edge cyclic start of each ring
    kind
        signal kind used for the orientation
    '''
    index: np.ndarray
    rings: np.ndarray
    shift1: np.ndarray
    shift2: np.ndarray
    kind: str = None

    def __len__(self):
        return len(self.index)

    def reshuffled(self, rng):
        '''
        Same rings with a fresh random cyclic start per patch.
        '''
        e = len(self.rings)
        s1 = rng.integers(0, RING1_SIZE, e)
        s2 = rng.integers(0, RING2_SIZE, e)
        return PatchTable(_orient(self.rings, s1, s2), self.rings, s1, s2, self.kind)


def _position(face_edges, faces, edges):
    # column of each edge within its face
    return np.argmax(face_edges[faces] == edges[:, None], axis=1)

def _orient(rings, s1, s2):
    e = np.arange(len(rings))[:, None]
    r1 = rings[:, 1:1 + RING1_SIZE]
    r2 = rings[:, 1 + RING1_SIZE:]
    r1 = r1[e, (np.arange(RING1_SIZE)[None, :] + s1[:, None]) % RING1_SIZE]
    r2 = r2[e, (np.arange(RING2_SIZE)[None, :] + s2[:, None]) % RING2_SIZE]
    return np.concatenate((rings[:, :1], r1, r2), axis=1)

def patch_rings(mesh):
    '''
    Unoriented patch rows. Missing neighbours at a boundary repeat the
    centre edge.
    '''
    over = np.flatnonzero(mesh.edge_face_count > 2)
    if (len(over) > 0):
        raise NonManifoldEdgeError("Edge has more than two faces.", int(over[0]))
    n = mesh.n_edges
    fe = mesh.face_edges
    ef = mesh.edge_faces
    own = np.arange(n)
    rings = np.empty((n, PATCH_SIZE), dtype=np.int64)
    rings[:, 0] = own
    f1 = ef[:, 0]
    p1 = _position(fe, f1, own)
    rings[:, 1] = fe[f1, (p1 + 1) % 3]
    rings[:, 2] = fe[f1, (p1 + 2) % 3]
    rings[:, 3] = own
    rings[:, 4] = own
    two = ef[:, 1] >= 0
    f2 = ef[two, 1]
    p2 = _position(fe, f2, own[two])
    rings[two, 3] = fe[f2, (p2 + 1) % 3]
    rings[two, 4] = fe[f2, (p2 + 2) % 3]
    # second ring: across each first-ring edge, away from the centre
    for k in range(RING1_SIZE):
        r = rings[:, 1 + k]
        near = f1 if k < 2 else ef[:, 1]
        far = np.where(ef[r, 0] == near, ef[r, 1], ef[r, 0])
        ok = (r != own) & (far >= 0)
        c0 = 1 + RING1_SIZE + 2 * k
        rings[:, c0] = own
        rings[:, c0 + 1] = own
        g = far[ok]
        q = _position(fe, g, r[ok])
        rings[ok, c0] = fe[g, (q + 1) % 3]
        rings[ok, c0 + 1] = fe[g, (q + 2) % 3]
    return rings

def edge_gradients(mesh, signal):
    '''
    Signal gradient per edge, mean over its faces.
    '''
    ef = mesh.edge_faces
    g = np.array(signal.gradients[ef[:, 0]])
    two = ef[:, 1] >= 0
    g[two] = 0.5 * (g[two] + signal.gradients[ef[two, 1]])
    return g

def _aligned_start(mesh, ring, grad):
    mid = mesh.edge_midpoints
    d = ((mid[ring] - mid[:, None, :]) * grad[:, None, :]).sum(axis=2)
    # rounding keeps near-ties stable under rigid motion
    return np.argmax(np.round(d, 12), axis=1)

def build_patch_table(mesh, signal, rng=None):
    '''
    Oriented 13-edge patches for every edge of a manifold mesh.

    signal
        SignalField. A randomised signal takes a random cyclic start
        per patch from rng.
    '''
    rings = patch_rings(mesh)
    if (signal.randomize):
        rng = rng if rng is not None else np.random.default_rng(0)
        table = PatchTable(rings, rings, None, None, signal.kind)
        return table.reshuffled(rng)
    grad = edge_gradients(mesh, signal)
    s1 = _aligned_start(mesh, rings[:, 1:1 + RING1_SIZE], grad)
    s2 = _aligned_start(mesh, rings[:, 1 + RING1_SIZE:], grad)
    return PatchTable(_orient(rings, s1, s2), rings, s1, s2, signal.kind)

def conv(patches, f, K, bias):
    '''
    Patch convolution as one matrix product: gather each patch into a
    row of 13 * k_i features, multiply by K (13 * k_i, k_o), add bias.
    Works on numpy arrays and torch tensors alike.
    '''
    index = patches.index if isinstance(patches, PatchTable) else patches
    g = f[index]
    return g.reshape(g.shape[0], -1) @ K + bias



## Hierarchy
@dataclass
class MeshHierarchy:
    '''
    Everything the network needs about one scan: the mesh at each
    level, the pooling maps between levels, and the patches.

    lineage
        per level, coarse vertex -> level-0 vertex
    '''
    meshes: list
    traces: list
    pools: list
    patches: list
    lineage: list
    signal: object
    _tensors: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, mesh, levels, ratio, kind, rng=None):
        meshes, traces = decimate_levels(mesh, levels, ratio)
        pools = [build_pooling_map(t) for t in traces]
        lineage = [np.arange(mesh.n_vertices)]
        for t in traces:
            lineage.append(lineage[-1][t.vertex_lineage])
        signal = signal_function(mesh, kind)
        patches = [
            build_patch_table(m, signal.restrict(m, lin), rng)
            for m, lin in zip(meshes, lineage)
        ]
        logger.debug("Hierarchy edges: %s", [m.n_edges for m in meshes])
        return cls(meshes, traces, pools, patches, lineage, signal)

    @property
    def levels(self):
        return len(self.meshes)

    @property
    def randomize(self):
        return self.signal.randomize

    def features(self):
        return edge_features(self.meshes[0])

    def reshuffle(self, rng):
        '''
        New random patch starts, for randomised signals.
        '''
        if (self.randomize):
            self.patches = [p.reshuffled(rng) for p in self.patches]
            self._tensors.clear()

    def tensors(self, dtype=torch.float32):
        '''
        Torch copies of the index tables and unpool matrices.
        '''
        key = str(dtype)
        if (not key in self._tensors):
            index = [torch.as_tensor(p.index, dtype=torch.long) for p in self.patches]
            support = [torch.as_tensor(d.support_index, dtype=torch.long) for d in self.pools]
            unpool = []
            for d in self.pools:
                coo = d.unpool_matrix.tocoo()
                idx = torch.as_tensor(np.stack((coo.row, coo.col)), dtype=torch.long)
                unpool.append(torch.sparse_coo_tensor(idx, torch.as_tensor(coo.data, dtype=dtype), coo.shape).coalesce())
            self._tensors[key] = (index, support, unpool)
        return self._tensors[key]



## Network
class PatchConv(nn.Module):
    '''
    Patch convolution with kernel (13 * in, out) and bias (out,).
    '''
    def __init__(self, in_width, out_width, generator=None):
        super().__init__()
        self.in_width = in_width
        self.out_width = out_width
        fan_in = PATCH_SIZE * in_width
        bound = 1.0 / math.sqrt(fan_in)
        self.K = nn.Parameter(torch.empty(fan_in, out_width).uniform_(-bound, bound, generator=generator))
        self.bias = nn.Parameter(torch.empty(out_width).uniform_(-bound, bound, generator=generator))

    def forward(self, index, f):
        return conv(index, f, self.K, self.bias)


class ResBlock(nn.Module):
    '''
    conv, rectifier, conv, plus a skip. The skip is a 1x1 projection
    when the widths differ.
    '''
    def __init__(self, in_width, out_width, generator=None):
        super().__init__()
        self.conv1 = PatchConv(in_width, out_width, generator)
        self.conv2 = PatchConv(out_width, out_width, generator)
        self.project = None
        if (in_width != out_width):
            bound = 1.0 / math.sqrt(in_width)
            self.project = nn.Parameter(torch.empty(in_width, out_width).uniform_(-bound, bound, generator=generator))

    def forward(self, index, f):
        skip = f if self.project is None else f @ self.project
        return skip + self.conv2(index, torch.relu(self.conv1(index, f)))


class UMeshModel(nn.Module):
    '''
    Encoder-decoder over a mesh hierarchy.
    Down: a residual block per level, max-pool to the next.
    Up: unpool, concatenate the same-level encoder features, residual
    block. A final patch convolution maps to the embedding dimension.

    widths
        per-level feature width, or one int for every level
    '''
    def __init__(self, levels=4, widths=64, d=4, in_width=INPUT_WIDTH, seed=None):
        super().__init__()
        if (isinstance(widths, int)):
            widths = [widths] * levels
        widths = [int(w) for w in widths]
        if (len(widths) != levels):
            raise MeshCorrError("One width per level needed. levels:{} widths:{}".format(levels, len(widths)))
        self.levels = levels
        self.widths = widths
        self.d = d
        self.in_width = in_width
        generator = None
        if (seed is not None):
            generator = torch.Generator().manual_seed(int(seed))
        self.down = nn.ModuleList()
        w_in = in_width
        for w in widths:
            self.down.append(ResBlock(w_in, w, generator))
            w_in = w
        self.up = nn.ModuleList(
            ResBlock(widths[l + 1] + widths[l], widths[l], generator)
            for l in range(levels - 1)
        )
        self.out = PatchConv(widths[0], d, generator)

    def forward(self, hierarchy, f0):
        if (hierarchy.levels != self.levels):
            raise MeshCorrError("Hierarchy levels do not match the model. hierarchy:{} model:{}".format(
                hierarchy.levels,
                self.levels
            ))
        index, support, unpool = hierarchy.tensors(f0.dtype)
        skips = []
        h = f0
        for l in range(self.levels):
            h = self.down[l](index[l], h)
            if (l < self.levels - 1):
                skips.append(h)
                # routes gradients to the arg max entries
                h = h[support[l]].max(dim=1).values
        for l in reversed(range(self.levels - 1)):
            h = torch.sparse.mm(unpool[l], h)
            h = torch.cat((h, skips[l]), dim=1)
            h = self.up[l](index[l], h)
        return self.out(index[0], h)

    def architecture(self):
        return {'levels': self.levels, 'widths': list(self.widths), 'd': self.d, 'in_width': self.in_width}



def forward(model, hierarchy, f0=None):
    '''
    Predicted correspondence for one scan, evaluated without
    gradients.
    '''
    if (f0 is None):
        f0 = hierarchy.features()
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        out = model(hierarchy, torch.as_tensor(f0, dtype=dtype))
    return CorrespondenceField(out.double().numpy(), 'edges', predicted=True)

def mds_loss(predicted, truth, eps=LOSS_EPSILON):
    '''
    Mean smoothed Euclidean distance, sqrt(|p - t|^2 + eps^2).
    '''
    return torch.sqrt(((predicted - truth) ** 2).sum(dim=1) + eps * eps).mean()

def loss_and_gradients(model, hierarchy, f0, truth):
    '''
    return
        (loss, {parameter name: gradient array})
    '''
    dtype = next(model.parameters()).dtype
    truth = truth.values if isinstance(truth, CorrespondenceField) else truth
    model.zero_grad()
    loss = mds_loss(model(hierarchy, torch.as_tensor(f0, dtype=dtype)), torch.as_tensor(truth, dtype=dtype))
    loss.backward()
    grads = {
        name: p.grad.detach().numpy().copy() if p.grad is not None else np.zeros(tuple(p.shape))
        for name, p in model.named_parameters()
    }
    return float(loss.item()), grads



## Training
@dataclass
class TrainingSample:
    '''
    One scan ready for the network: hierarchy, level-0 edge features,
    per-edge labels.
    '''
    name: str
    hierarchy: MeshHierarchy
    features: np.ndarray
    labels: np.ndarray


def prepare_scan(mesh, edge_target, levels, ratio, kind, rng=None):
    '''
    Clean and decimate a scan, then build its hierarchy.
    return
        (MeshHierarchy, level-0 vertex -> source vertex)
    '''
    coarse, lineage = preprocess_with_lineage(mesh, edge_target)
    return MeshHierarchy.build(coarse, levels, ratio, kind, rng), lineage

def prepare_sample(name, mesh, vertex_labels, edge_target, levels, ratio, kind, rng=None):
    '''
    A TrainingSample from a scan and its per-vertex labels. Labels
    follow the decimation through vertex lineage; an edge takes the
    mean of its endpoints.
    '''
    hierarchy, lineage = prepare_scan(mesh, edge_target, levels, ratio, kind, rng)
    coarse = hierarchy.meshes[0]
    labels = CorrespondenceField(np.asarray(vertex_labels)[lineage], 'vertices', predicted=False)
    return TrainingSample(name, hierarchy, hierarchy.features(), labels.to_edges(coarse).values)

def predict_scan(model, mesh, edge_target, ratio, kind, rng=None):
    '''
    Predicted correspondence on every vertex of an undecimated scan.
    The network runs on the decimated scan; each input vertex takes
    the value of the nearest decimated vertex.
    return
        per-vertex CorrespondenceField on mesh
    '''
    hierarchy, _ = prepare_scan(mesh, edge_target, model.levels, ratio, kind, rng)
    coarse = hierarchy.meshes[0]
    values = forward(model, hierarchy).to_vertices(coarse).values
    idx = nearest_index(cKDTree(coarse.vertices), coarse.vertices, mesh.vertices)
    return CorrespondenceField(values[idx], 'vertices', predicted=True)


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    train_loss: float
    val_loss: float


def split_samples(count, validation_fraction, train_fraction, rng):
    '''
    Seeded train and validation index lists. A training subset keeps
    the validation list unchanged.
    '''
    order = rng.permutation(count)
    n_val = int(round(validation_fraction * count)) if count > 1 else 0
    n_val = min(n_val, count - 1)
    val = np.sort(order[:n_val])
    train = order[n_val:]
    if (train_fraction < 1.0):
        keep = max(1, int(round(train_fraction * len(train))))
        train = rng.choice(train, keep, replace=False)
    return np.sort(train), val

def _sample_loss(model, sample, dtype):
    pred = model(sample.hierarchy, torch.as_tensor(sample.features, dtype=dtype))
    return mds_loss(pred, torch.as_tensor(sample.labels, dtype=dtype))

def evaluate(model, samples):
    '''
    Mean loss over samples, nan for none.
    '''
    if (not samples):
        return float('nan')
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        return float(np.mean([_sample_loss(model, s, dtype).item() for s in samples]))

def train(
        model,
        samples,
        epochs=50,
        batch=4,
        learning_rate=1e-3,
        betas=(0.9, 0.999),
        seed=0,
        validation_fraction=0.2,
        train_fraction=1.0,
        workers=0,
    ):
    '''
    Adam over mini-batches of scans. Deterministic for a seed.
    return
        (model, list of LossRecord)
    '''
    torch.set_num_threads(worker_count(workers))
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    train_idx, val_idx = split_samples(len(samples), validation_fraction, train_fraction, rng)
    val_samples = [samples[i] for i in val_idx]
    logger.info("Training on %s scans, validating on %s", len(train_idx), len(val_idx))
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate, betas=tuple(betas))
    dtype = next(model.parameters()).dtype
    history = []
    for epoch in range(1, epochs + 1):
        model.train()
        for s in samples:
            s.hierarchy.reshuffle(rng)
        order = rng.permutation(train_idx)
        total = 0.0
        for b, start in enumerate(range(0, len(order), batch)):
            ids = order[start:start + batch]
            optimizer.zero_grad()
            loss = sum(_sample_loss(model, samples[i], dtype) for i in ids) / len(ids)
            if (not torch.isfinite(loss)):
                raise TrainingError("Non-finite loss.", b, epoch)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(ids)
        record = LossRecord(epoch, total / len(order), evaluate(model, val_samples))
        history.append(record)
        logger.info("epoch:%s train_loss:%.6g val_loss:%.6g", epoch, record.train_loss, record.val_loss)
    return model, history



## Checkpoints
# magic, version, levels, in_width, d, pool_ratio, m0, signal name length
CHECKPOINT_HEADER = struct.Struct('<4sIIIIIII')
CHECKPOINT_MAGIC = b'MCNN'
CHECKPOINT_VERSION = 1


def save_checkpoint(model, path, pool_ratio, m0, signal):
    '''
    Architecture header then every parameter as raw f32, in
    state_dict order.
    '''
    name = signal.encode('utf-8')
    data = CHECKPOINT_HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        model.levels,
        model.in_width,
        model.d,
        pool_ratio,
        m0,
        len(name),
    )
    data += struct.pack('<{}I'.format(model.levels), *model.widths)
    data += name
    for t in model.state_dict().values():
        data += t.detach().cpu().numpy().astype('<f4').tobytes()
    Path(path).write_bytes(data)

def load_checkpoint(path):
    '''
    return
        (model, {'pool_ratio', 'm0', 'signal'})
    '''
    data = Path(path).read_bytes()
    if (len(data) < CHECKPOINT_HEADER.size):
        raise MeshCorrError("Checkpoint too short. path:{}".format(path))
    magic, version, levels, in_width, d, pool_ratio, m0, name_len = CHECKPOINT_HEADER.unpack_from(data)
    if (magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION):
        raise MeshCorrError("Not a checkpoint file. path:{}".format(path))
    offset = CHECKPOINT_HEADER.size
    widths = struct.unpack_from('<{}I'.format(levels), data, offset)
    offset += 4 * levels
    signal = data[offset:offset + name_len].decode('utf-8')
    offset += name_len
    model = UMeshModel(levels, list(widths), d, in_width)
    state = model.state_dict()
    expected = offset + 4 * sum(t.numel() for t in state.values())
    if (expected != len(data)):
        raise MeshCorrError("Checkpoint size does not match its header. path:{}".format(path))
    for k, t in state.items():
        count = t.numel()
        blob = np.frombuffer(data, dtype='<f4', count=count, offset=offset)
        state[k] = torch.from_numpy(blob.reshape(tuple(t.shape)).astype(np.float32))
        offset += 4 * count
    model.load_state_dict(state)
    return model, {'pool_ratio': pool_ratio, 'm0': m0, 'signal': signal}
