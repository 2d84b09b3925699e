import numpy as np
from django.core.management.base import BaseCommand

from mesh_corr.conv_net import load_checkpoint, predict_scan
from mesh_corr.management.commands import common
from mesh_corr.mesh_io import read_mesh
from mesh_corr.utils import write_table


class Command(BaseCommand):
    help = 'Predict the correspondence field of a scan with a trained checkpoint.'

    def add_arguments(self, parser):
        parser.add_argument(
            '-m',
            '--model',
            type=str,
            required=True,
            help='Checkpoint from the train command',
        )
        parser.add_argument(
            '--mesh',
            type=str,
            required=True,
            help='Scan mesh',
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Field file, one row of embedding coordinates per scan vertex',
        )
        common.add_config_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options)
        checkpoint = common.existing_file(options['model'], 'model')
        src = common.existing_file(options['mesh'], 'mesh')
        with common.command_errors():
            model, meta = load_checkpoint(checkpoint)
            mesh = read_mesh(src)
            field = predict_scan(
                model,
                mesh,
                meta['m0'],
                meta['pool_ratio'],
                meta['signal'],
                np.random.default_rng(config.seed),
            )
            write_table(common.output_path(options['out']), field.values)
        common.write_summary(self, options, {
            'vertices': len(field),
            'dim': field.values.shape[1],
            'signal': meta['signal'],
        })
