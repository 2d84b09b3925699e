'''
Pipeline configuration.

Values are merged, later sources winning:
    DEFAULTS
    settings.MESH_CORR
    a YAML file (command --config)
    MESH_CORR_* environment variables (paths only)
    explicit overrides (command options)
'''
import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

import yaml
from django.conf import settings
from django.core.checks import Error
from django.core.exceptions import ImproperlyConfigured

from mesh_corr import checks
from mesh_corr.constants import (
    DEFAULT_DIM,
    DEFAULT_M0,
    DESK_M0,
    INNER_ITERATIONS,
    LAMBDA_BETA,
    LAMBDA_OMEGA,
    LAMBDA_OMEGA_DECAY,
    LAMBDA_THETA,
    OUTER_ITERATIONS,
    SIGNAL_GEODESIC,
)


DEFAULTS = {
    # None means the bundled procedural humanoid
    'template': None,
    'kinematic_tree': None,
    'embedding': None,
    'dataset': None,
    'checkpoint': None,
    'output': None,
    'm0': DEFAULT_M0,
    'desk_scale': False,
    'desk_m0': DESK_M0,
    'levels': 4,
    'width': 64,
    'pool_ratio': 4,
    'dim': DEFAULT_DIM,
    'lambda_omega': LAMBDA_OMEGA,
    'lambda_omega_decay': LAMBDA_OMEGA_DECAY,
    'lambda_beta': LAMBDA_BETA,
    'lambda_theta': LAMBDA_THETA,
    'outer_iterations': OUTER_ITERATIONS,
    'inner_iterations': INNER_ITERATIONS,
    'signal': SIGNAL_GEODESIC,
    'epochs': 50,
    'batch': 4,
    'learning_rate': 1e-3,
    'betas': (0.9, 0.999),
    'validation_fraction': 0.2,
    'train_fraction': 1.0,
    'seed': 0,
    'workers': 0,
    'template_resolution': 3,
    'smacof': False,
}

# environment variable -> key
ENVIRONMENT = {
    'MESH_CORR_TEMPLATE': 'template',
    'MESH_CORR_TREE': 'kinematic_tree',
    'MESH_CORR_EMBEDDING': 'embedding',
    'MESH_CORR_DATASET': 'dataset',
    'MESH_CORR_OUTPUT': 'output',
}

PATH_KEYS = ('template', 'kinematic_tree', 'embedding', 'dataset', 'checkpoint', 'output')



@dataclass(frozen=True)
class PipelineConfig:
    template: str = None
    kinematic_tree: str = None
    embedding: str = None
    dataset: str = None
    checkpoint: str = None
    output: str = None
    m0: int = DEFAULT_M0
    desk_scale: bool = False
    desk_m0: int = DESK_M0
    levels: int = 4
    width: int = 64
    pool_ratio: int = 4
    dim: int = DEFAULT_DIM
    lambda_omega: float = LAMBDA_OMEGA
    lambda_omega_decay: float = LAMBDA_OMEGA_DECAY
    lambda_beta: float = LAMBDA_BETA
    lambda_theta: float = LAMBDA_THETA
    outer_iterations: int = OUTER_ITERATIONS
    inner_iterations: int = INNER_ITERATIONS
    signal: str = SIGNAL_GEODESIC
    epochs: int = 50
    batch: int = 4
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    validation_fraction: float = 0.2
    train_fraction: float = 1.0
    seed: int = 0
    workers: int = 0
    template_resolution: int = 3
    smacof: bool = False

    @property
    def edge_target(self):
        '''
        Edge count every scan is decimated to.
        '''
        return self.desk_m0 if self.desk_scale else self.m0

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    def as_dict(self):
        return dataclasses.asdict(self)



def load_yaml_config(path):
    '''
    Read a YAML mapping of config keys.
    '''
    try:
        with open(path, encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ImproperlyConfigured("Config file can not be read. path:{} detail:{}".format(path, e))
    except yaml.YAMLError as e:
        raise ImproperlyConfigured("Config file is not valid YAML. path:{} detail:{}".format(path, e))
    if (data is None):
        return {}
    if (not isinstance(data, dict)):
        raise ImproperlyConfigured("Config file must hold a mapping. path:{}".format(path))
    return data

def _project_settings():
    if (not settings.configured):
        return {}
    r = getattr(settings, 'MESH_CORR', {})
    if (not isinstance(r, dict)):
        raise ImproperlyConfigured("settings.MESH_CORR must be a dict.")
    return r

def merged_settings(config_path=None, overrides=None, environ=None):
    '''
    Merge every configuration source into one dict.
    Unknown keys raise ImproperlyConfigured.
    '''
    environ = os.environ if environ is None else environ
    r = dict(DEFAULTS)
    sources = [('settings.MESH_CORR', _project_settings())]
    if (config_path):
        sources.append((str(config_path), load_yaml_config(config_path)))
    sources.append(('environment', {k: environ[e] for e, k in ENVIRONMENT.items() if environ.get(e)}))
    sources.append(('options', {k: v for k, v in (overrides or {}).items() if v is not None}))
    for source, values in sources:
        unknown = sorted(set(values) - set(DEFAULTS))
        if (unknown):
            raise ImproperlyConfigured("Unknown config keys. source:{} keys:{}".format(
                source,
                ", ".join(unknown)
            ))
        r.update(values)
    if (isinstance(r['betas'], list)):
        r['betas'] = tuple(r['betas'])
    for k in PATH_KEYS:
        if (r[k] is not None):
            r[k] = str(r[k])
    return r

def check_config(d):
    '''
    Validate a merged config dict.
    return
        list of django.core.checks messages
    '''
    errors = [
        *checks.check_positive('m0', d['m0'], 'mesh_corr.E002'),
        *checks.check_boolean('desk_scale', d['desk_scale'], 'mesh_corr.E003'),
        *checks.check_positive('desk_m0', d['desk_m0'], 'mesh_corr.E004'),
        *checks.check_numeric_range('levels', d['levels'], 1, 8, 'mesh_corr.E005'),
        *checks.check_positive('width', d['width'], 'mesh_corr.E006'),
        *checks.check_numeric_range('pool_ratio', d['pool_ratio'], 2, 16, 'mesh_corr.E007'),
        *checks.check_numeric_range('dim', d['dim'], 1, 64, 'mesh_corr.E008'),
        *checks.check_positive_float('lambda_omega', d['lambda_omega'], 'mesh_corr.E009'),
        *checks.check_float_range('lambda_omega_decay', d['lambda_omega_decay'], 0.0, 1.0, 'mesh_corr.E010'),
        *checks.check_float_range('lambda_beta', d['lambda_beta'], 0.0, 1e6, 'mesh_corr.E011'),
        *checks.check_float_range('lambda_theta', d['lambda_theta'], 0.0, 1e6, 'mesh_corr.E012'),
        *checks.check_positive('outer_iterations', d['outer_iterations'], 'mesh_corr.E013'),
        *checks.check_positive('inner_iterations', d['inner_iterations'], 'mesh_corr.E014'),
        *checks.check_signal_registered('signal', d['signal'], 'mesh_corr.E015'),
        *checks.check_numeric_range('epochs', d['epochs'], 0, 10**7, 'mesh_corr.E016'),
        *checks.check_positive('batch', d['batch'], 'mesh_corr.E017'),
        *checks.check_positive_float('learning_rate', d['learning_rate'], 'mesh_corr.E018'),
        *checks.check_float_range('validation_fraction', d['validation_fraction'], 0.0, 0.9, 'mesh_corr.E019'),
        *checks.check_float_range('train_fraction', d['train_fraction'], 1e-6, 1.0, 'mesh_corr.E020'),
        *checks.check_numeric_range('seed', d['seed'], 0, 2**32 - 1, 'mesh_corr.E021'),
        *checks.check_numeric_range('workers', d['workers'], 0, 1024, 'mesh_corr.E022'),
        *checks.check_numeric_range('template_resolution', d['template_resolution'], 1, 16, 'mesh_corr.E023'),
        *checks.check_boolean('smacof', d['smacof'], 'mesh_corr.E024'),
        *checks.check_file_exists('template', d['template'], 'mesh_corr.E025'),
        *checks.check_file_exists('kinematic_tree', d['kinematic_tree'], 'mesh_corr.E026'),
    ]
    betas = d['betas']
    if (not(isinstance(betas, tuple) and len(betas) == 2)):
        errors.append(Error(
            "'betas' value '{}' must be a pair.".format(betas),
            id='mesh_corr.E027',
        ))
    else:
        errors += checks.check_float_range('betas', betas[0], 0.0, 0.999999, 'mesh_corr.E027')
        errors += checks.check_float_range('betas', betas[1], 0.0, 0.999999, 'mesh_corr.E027')
    return errors

def get_config(config_path=None, overrides=None, environ=None):
    '''
    Merged, checked configuration.
    Raises ImproperlyConfigured listing every failed check.
    '''
    d = merged_settings(config_path, overrides, environ)
    errors = check_config(d)
    if (errors):
        raise ImproperlyConfigured("; ".join("{} {}".format(e.id, e.msg) for e in errors))
    return PipelineConfig(**d)

def data_path(name):
    '''
    Path of a data file shipped with the app.
    '''
    return Path(__file__).resolve().parent / 'data' / name
