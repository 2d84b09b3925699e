from django.core.management.base import BaseCommand

from mesh_corr.embedding import CorrespondenceField
from mesh_corr.management.commands import common
from mesh_corr.mesh_io import read_mesh
from mesh_corr.register import MatchWeights, guided_icp, nonrigid_refine, save_registration
from mesh_corr.utils import read_table


class Command(BaseCommand):
    help = 'Fit the body model to a scan by guided ICP, led by a predicted field.'

    def add_arguments(self, parser):
        parser.add_argument(
            '--mesh',
            type=str,
            required=True,
            help='Scan mesh',
        )
        parser.add_argument(
            '-f',
            '--field',
            type=str,
            required=True,
            help='Field file from the predict command, one row per scan vertex',
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Output directory',
        )
        parser.add_argument(
            '--nonrigid',
            action='store_true',
            help='Follow the fit with free per-vertex offsets',
        )
        common.add_config_arguments(parser)
        common.add_body_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options)
        src = common.existing_file(options['mesh'], 'mesh')
        field_path = common.existing_file(options['field'], 'field')
        with common.command_errors():
            body, emb = common.load_body_and_embedding(config)
            scan = read_mesh(src)
            values, _ = read_table(field_path)
            predicted = CorrespondenceField(values, 'vertices', predicted=True)
            reg = guided_icp(
                scan,
                predicted,
                body,
                emb,
                MatchWeights.from_config(config),
                workers=common.workers(config),
            )
            if (options['nonrigid']):
                reg = nonrigid_refine(reg)
            save_registration(reg, options['out'])
        common.write_summary(self, options, reg.summary())
