'''
Synthetic training scans: the template posed and scaled at random,
passed through scan filters that weld contacts, hide what scanners
miss and cut away extremities. Each scan carries its ground-truth
labels, rest-template positions and body parameters.
'''
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np
import yaml
from django.core.exceptions import ImproperlyConfigured

from mesh_corr import filters_scan, registry  # noqa: F401  stock filters register on import
from mesh_corr.body_model import BodyParams, skin_vertices
from mesh_corr.constants import BETA_MAX, BETA_MIN, MAX_RETRIES
from mesh_corr.decimate import DecimationError
from mesh_corr.embedding import ground_truth_field
from mesh_corr.mesh_core import EmptyMeshError
from mesh_corr.mesh_io import write_mesh
from mesh_corr.scan_ops import ScanContext, ScanState, subdivide_scan
from mesh_corr.utils import MeshCorrError, derive_seeds, read_csv, read_table, write_csv, write_table
from mesh_corr.validators import MeshValidationError, validate_mesh


logger = logging.getLogger(__name__)

MANIFEST_FIELDS = [
    'id',
    'seed',
    'mesh',
    'labels',
    'rest',
    'params',
    'amputations',
    'bridges',
    'genus',
    'attempts',
]
# keeps sampled scales strictly inside the open interval
BETA_MARGIN = 1e-3



class GenerationError(MeshCorrError):
    def __init__(self, message, seed):
        super().__init__("{} seed:{}".format(message, seed))
        self.seed = seed



@dataclass(frozen=True)
class SynthSpec:
    '''
    pose_scale
        0 keeps the prior pose, 1 samples each joint over its whole range
    heading
        turn the body about the vertical at random
    shape_sigma
        log-normal sigma of each segment scale
    filters
        registered filter names, applied in order
    filter_options
        filter name -> dict of overrides for that filter
    '''
    seed: int = 0
    pose_scale: float = 1.0
    heading: bool = True
    shape_sigma: float = 0.08
    amputation_probability: float = 0.1
    weld: bool = True
    weld_distance: float = 0.005
    occlude: bool = True
    viewpoints: int = 8
    subdivisions: int = 1
    max_retries: int = MAX_RETRIES
    filters: tuple = ('Weld', 'Occlude', 'Amputate')
    filter_options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if (unknown):
            raise ImproperlyConfigured("Unknown synth spec keys. keys:{}".format(", ".join(unknown)))
        data = dict(data)
        if ('filters' in data):
            data['filters'] = tuple(data['filters'])
        return cls(**data)

    @classmethod
    def from_yaml(cls, path):
        try:
            with open(path, encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ImproperlyConfigured("Synth spec can not be read. path:{} detail:{}".format(path, e))
        if (not isinstance(data, dict)):
            raise ImproperlyConfigured("Synth spec must hold a mapping. path:{}".format(path))
        return cls.from_dict(data)

    def build_filters(self):
        '''
        Filter instances with this spec's settings applied.
        '''
        stock = {
            'Weld': {'enabled': self.weld, 'distance': self.weld_distance},
            'Occlude': {'enabled': self.occlude, 'viewpoints': self.viewpoints},
            'Amputate': {'probability': self.amputation_probability},
        }
        r = []
        for name in self.filters:
            try:
                klass = registry.filters.get(name)
            except registry.NotRegistered as e:
                raise ImproperlyConfigured(str(e))
            options = dict(stock.get(name, {}))
            options.update(self.filter_options.get(name, {}))
            try:
                r.append(klass(**options))
            except TypeError as e:
                raise ImproperlyConfigured(str(e))
        return r

    def check(self):
        '''
        Raise ImproperlyConfigured listing every failed check.
        '''
        from mesh_corr import checks

        errors = [
            *checks.check_float_range('pose_scale', self.pose_scale, 0.0, 1.0, 'mesh_corr.E040'),
            *checks.check_float_range('shape_sigma', self.shape_sigma, 0.0, 1.0, 'mesh_corr.E041'),
            *checks.check_numeric_range('subdivisions', self.subdivisions, 0, 3, 'mesh_corr.E042'),
            *checks.check_positive('max_retries', self.max_retries, 'mesh_corr.E043'),
            *checks.check_numeric_range('seed', self.seed, 0, 2**32 - 1, 'mesh_corr.E044'),
        ]
        for f in self.build_filters():
            errors += f.check()
        if (errors):
            raise ImproperlyConfigured("; ".join("{} {}".format(e.id, e.msg) for e in errors))
        return self


@dataclass(frozen=True)
class SynthScan:
    '''
    labels
        per-vertex CorrespondenceField, ground truth
    rest
        (V,3) rest-template position per vertex
    notes
        filter name -> note
    '''
    mesh: object
    labels: object
    params: BodyParams
    rest: np.ndarray
    notes: dict
    attempts: int = 1



def sample_params(spec, body, rng, quantiles=None):
    '''
    Pose and shape for one scan.

    quantiles
        (J*3,) values in [0,1) for the joint angles, default drawn
        from rng
    '''
    tree = body.tree
    n = tree.n_joints
    priors = body.priors()
    u = rng.random(3 * n) if quantiles is None else np.asarray(quantiles, dtype=np.float64)
    u = u.reshape(n, 3)
    sampled = tree.theta_min + u * (tree.theta_max - tree.theta_min)
    theta = priors.theta_star + spec.pose_scale * (sampled - priors.theta_star)
    heading = rng.uniform(-np.pi, np.pi) if spec.heading else 0.0
    # the root turns about the vertical only
    theta[0] = (0.0, 0.0, spec.pose_scale * heading)
    beta = np.exp(spec.shape_sigma * rng.standard_normal((n, 3)))
    beta = np.clip(beta, BETA_MIN + BETA_MARGIN, BETA_MAX - BETA_MARGIN)
    return BodyParams(theta, np.zeros(3), beta)

def generate_scan(spec, body, emb, rng, quantiles=None, filters=None):
    '''
    One synthetic scan. Raises MeshValidationError or EmptyMeshError
    when the filters leave an unusable surface.
    '''
    params = sample_params(spec, body, rng, quantiles)
    template = body.template
    posed = skin_vertices(body.tree, template.vertices, params)
    state = ScanState.from_template(template, posed, body.tree.segments)
    if (spec.subdivisions):
        state = subdivide_scan(state, spec.subdivisions)
    context = ScanContext(rng, body, {})
    for f in (spec.build_filters() if filters is None else filters):
        state = f.process(state, context)
    validate_mesh(state.mesh)
    labels = ground_truth_field(state.mesh, state.template_face, state.barycentric(template), emb)
    return SynthScan(state.mesh, labels, params, state.rest, context.notes)

def generate_with_retries(spec, body, emb, seed, quantiles=None):
    '''
    Resample until a scan passes validation.
    '''
    filters = spec.build_filters()
    for attempt in range(spec.max_retries):
        rng = np.random.default_rng([seed, attempt])
        try:
            scan = generate_scan(spec, body, emb, rng, quantiles, filters)
        except (MeshValidationError, EmptyMeshError, DecimationError) as e:
            logger.info("Rejected scan seed:%s attempt:%s detail:%s", seed, attempt, e)
            continue
        return SynthScan(scan.mesh, scan.labels, scan.params, scan.rest, scan.notes, attempt + 1)
    raise GenerationError("Retry budget exhausted. retries:{}".format(spec.max_retries), seed)

def stratified_quantiles(count, width, rng):
    '''
    Latin hypercube: in every column each of count equal strata holds
    exactly one row.
    '''
    r = np.empty((count, width))
    for k in range(width):
        r[:, k] = (rng.permutation(count) + rng.random(count)) / max(count, 1)
    return r



## Dataset
def _write_scan(out, spec, body, emb, job):
    i, seed, quantiles = job
    name = "scan_{:05d}".format(i)
    try:
        scan = generate_with_retries(spec, body, emb, seed, quantiles)
    except GenerationError as e:
        logger.error("Scan dropped. id:%s detail:%s", name, e)
        return None
    write_mesh(scan.mesh, out / (name + '.ply'))
    write_table(out / (name + '.omega'), scan.labels.values, emb.strain)
    write_table(out / (name + '.rest'), scan.rest)
    data = scan.params.as_dict()
    data['notes'] = scan.notes
    with open(out / (name + '.yaml'), 'w', encoding='utf-8') as f:
        yaml.safe_dump(data, f, sort_keys=True)
    logger.info("Generated %s vertices:%s attempts:%s", name, scan.mesh.n_vertices, scan.attempts)
    return {
        'id': name,
        'seed': seed,
        'mesh': name + '.ply',
        'labels': name + '.omega',
        'rest': name + '.rest',
        'params': name + '.yaml',
        'amputations': scan.notes.get('Amputate', ''),
        'bridges': scan.notes.get('Weld', 0),
        'genus': scan.mesh.genus(),
        'attempts': scan.attempts,
    }

def generate_dataset(spec, count, body, emb, out, workers=1):
    '''
    Write count scans and manifest.csv into out. Output depends only on
    the SynthSpec, count and inputs.
    return
        manifest rows of the accepted scans
    '''
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = derive_seeds(spec.seed, count)
    rng = np.random.default_rng(spec.seed)
    quantiles = stratified_quantiles(count, 3 * body.tree.n_joints, rng)
    jobs = [(i, seeds[i], quantiles[i]) for i in range(count)]
    work = partial(_write_scan, out, spec, body, emb)
    if (workers > 1 and count > 1):
        with ProcessPoolExecutor(max_workers=min(workers, count)) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(job) for job in jobs]
    rows = [r for r in rows if r is not None]
    write_csv(out / 'manifest.csv', MANIFEST_FIELDS, rows)
    logger.info("Dataset written. accepted:%s requested:%s", len(rows), count)
    return rows

def read_manifest(path):
    '''
    Manifest rows with file entries resolved against the manifest's
    directory.
    '''
    path = Path(path)
    try:
        rows = read_csv(path)
    except OSError as e:
        raise MeshCorrError("Manifest can not be read. path:{} detail:{}".format(path, e))
    base = path.parent
    for row in rows:
        for k in ('mesh', 'labels', 'rest', 'params', 'field'):
            if (row.get(k)):
                row[k] = base / row[k]
    return rows

def read_params(path):
    with open(path, encoding='utf-8') as f:
        return BodyParams.from_dict(yaml.safe_load(f))

def read_labels(path):
    values, _ = read_table(path)
    return values
