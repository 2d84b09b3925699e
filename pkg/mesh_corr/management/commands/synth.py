import dataclasses
from pathlib import Path

from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import BaseCommand

from mesh_corr.conf import data_path
from mesh_corr.embedding import save_embedding
from mesh_corr.management.commands import common
from mesh_corr.synth import SynthSpec, generate_dataset

# written beside the scans, so later commands use the labels' embedding
EMBEDDING_NAME = 'embedding.omega'


class Command(BaseCommand):
    help = 'Generate synthetic scans with ground-truth labels, and a manifest.csv.'

    def add_arguments(self, parser):
        parser.add_argument(
            '-s',
            '--spec',
            type=str,
            help='Synthetic-scan spec YAML. Default is the bundled spec',
        )
        parser.add_argument(
            '-n',
            '--count',
            type=int,
            required=True,
            help='Number of scans',
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Output directory',
        )
        common.add_config_arguments(parser)
        common.add_body_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options)
        if (options['count'] < 1):
            raise common.usage_error("module:cli error:ValueError detail:--count must be positive. count:{}".format(options['count']))
        path = common.existing_file(options['spec'] or data_path('synth.yaml'), 'spec')
        try:
            spec = SynthSpec.from_yaml(path)
            if (options['seed'] is not None):
                spec = dataclasses.replace(spec, seed=options['seed'])
            spec.check()
        except ImproperlyConfigured as e:
            raise common.usage_error(common.error_line(e))
        out = Path(options['out'])
        with common.command_errors():
            body, emb = common.load_body_and_embedding(config)
            out.mkdir(parents=True, exist_ok=True)
            save_embedding(emb, out / EMBEDDING_NAME)
            rows = generate_dataset(spec, options['count'], body, emb, out, common.workers(config))
        common.write_summary(self, options, {
            'requested': options['count'],
            'accepted': len(rows),
            'manifest': out / 'manifest.csv',
        })
