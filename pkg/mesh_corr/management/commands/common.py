import logging
from contextlib import contextmanager
from pathlib import Path

from django.core.exceptions import ImproperlyConfigured, ValidationError
from django.core.management.base import CommandError

from mesh_corr import conf
from mesh_corr.utils import MeshCorrError, module_label, worker_count


# verbosity option -> level of the app logger
VERBOSITY_LEVELS = {
    0: logging.WARNING,
    1: logging.INFO,
    2: logging.DEBUG,
    3: logging.DEBUG,
}

USAGE_ERROR = 2
RUNTIME_ERROR = 1



def add_config_arguments(parser):
    parser.add_argument(
        '-C',
        '--config',
        type=str,
        help='YAML file of pipeline settings, overlaid on settings.MESH_CORR',
    )
    parser.add_argument(
        '--seed',
        type=int,
        help='Random seed. Repeated runs with one seed give identical files',
    )
    parser.add_argument(
        '-w',
        '--workers',
        type=int,
        help='Worker processes, 0 for every available core',
    )
    parser.add_argument(
        '--desk-scale',
        action='store_true',
        default=None,
        help='Decimate scans to the small desk-scale edge count',
    )

def add_body_arguments(parser):
    parser.add_argument(
        '--template',
        type=str,
        help='Template mesh (OBJ or PLY). Default is the bundled humanoid',
    )
    parser.add_argument(
        '--tree',
        type=str,
        help='Kinematic tree YAML for the template',
    )
    parser.add_argument(
        '-e',
        '--embedding',
        type=str,
        help='Template embedding file from the embed command. Default builds one',
    )

def error_line(e):
    '''
    One machine-readable line for an exception.
    '''
    detail = " ".join(str(e).split())
    module = module_label(e) if type(e).__module__.startswith("mesh_corr") else "cli"
    return "module:{} error:{} detail:{}".format(module, type(e).__name__, detail)

def usage_error(message):
    return CommandError(message, returncode=USAGE_ERROR)

@contextmanager
def command_errors():
    '''
    Turn pipeline failures into CommandError. Configuration and missing
    input are usage errors, everything the pipeline raises is a
    runtime error.
    '''
    try:
        yield
    except CommandError:
        raise
    except MeshCorrError as e:
        raise CommandError(error_line(e), returncode=RUNTIME_ERROR)
    except (ImproperlyConfigured, ValidationError, FileNotFoundError) as e:
        raise CommandError(error_line(e), returncode=USAGE_ERROR)

def set_verbosity(options):
    level = VERBOSITY_LEVELS.get(options['verbosity'], logging.DEBUG)
    logging.getLogger('mesh_corr').setLevel(level)

def get_config(options, **overrides):
    '''
    Merged, checked settings. Command options given override every
    other source.
    '''
    for k in ('seed', 'workers', 'desk_scale', 'template', 'embedding'):
        if (options.get(k) is not None):
            overrides.setdefault(k, options[k])
    if (options.get('tree') is not None):
        overrides.setdefault('kinematic_tree', options['tree'])
    try:
        return conf.get_config(options.get('config'), overrides)
    except ImproperlyConfigured as e:
        raise CommandError(error_line(e), returncode=USAGE_ERROR)

def workers(config):
    return worker_count(config.workers)

def existing_file(path, name):
    '''
    Path of an input file, or a usage error.
    '''
    if (path is None):
        raise usage_error("module:cli error:MissingArgument detail:--{} is required".format(name))
    p = Path(path)
    if (not p.is_file()):
        raise usage_error("module:cli error:FileNotFoundError detail:{} not found. path:{}".format(name, p))
    return p

def output_path(path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p

def stem_path(path, suffix):
    '''
    Sibling path for a report, 'out/model.ckpt' -> 'out/model_loss'.
    '''
    p = Path(path)
    return p.with_name(p.stem + suffix)

def load_body_and_embedding(config):
    '''
    Body model and template embedding for a config. An embedding not
    given is built from the template.
    return
        (BodyModel, TemplateEmbedding)
    '''
    from mesh_corr.embedding import build_embedding, load_embedding
    from mesh_corr.humanoid import load_body_model

    body = load_body_model(config.template, config.kinematic_tree, config.template_resolution)
    if (config.embedding):
        emb = load_embedding(existing_file(config.embedding, 'embedding'), body.template)
    else:
        emb = build_embedding(body.template, config.dim, config.smacof, config.seed)
    return body, emb

def write_summary(command, options, data):
    '''
    key:value lines on stdout, at verbosity 1 and above.
    '''
    if (options['verbosity'] > 0):
        for k, v in data.items():
            command.stdout.write("{}:{}".format(k, v))
