from pathlib import Path

from django.core.management.base import BaseCommand

from mesh_corr.embedding import CorrespondenceField
from mesh_corr.management.commands import common
from mesh_corr.mesh_io import read_mesh
from mesh_corr.register import MatchWeights, coregister, save_registration
from mesh_corr.synth import read_manifest
from mesh_corr.utils import MeshCorrError, read_table


class Command(BaseCommand):
    help = 'Register several scans of one subject, optionally with one shared body shape.'

    def add_arguments(self, parser):
        parser.add_argument(
            '-m',
            '--manifest',
            type=str,
            required=True,
            help="CSV with 'id', 'mesh' and 'field' columns, paths relative to the CSV. A synth manifest works, its 'labels' standing in for fields",
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Output directory, one registration directory per id',
        )
        parser.add_argument(
            '--shared-shape',
            action='store_true',
            help='Fit one set of segment scales to every scan',
        )
        parser.add_argument(
            '--rounds',
            type=int,
            default=5,
            help='Alternations of pose and shared shape updates',
        )
        common.add_config_arguments(parser)
        common.add_body_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options)
        manifest = common.existing_file(options['manifest'], 'manifest')
        if (options['rounds'] < 1):
            raise common.usage_error("module:cli error:ValueError detail:--rounds must be positive. rounds:{}".format(options['rounds']))
        out = Path(options['out'])
        with common.command_errors():
            rows = read_manifest(manifest)
            if (not rows):
                raise MeshCorrError("Manifest has no scans. path:{}".format(manifest))
            body, emb = common.load_body_and_embedding(config)
            scans = []
            fields = []
            for row in rows:
                if (not row.get('mesh')):
                    raise MeshCorrError("Manifest row has no mesh. path:{}".format(manifest))
                row.setdefault('id', Path(row['mesh']).stem)
                field_path = row.get('field') or row.get('labels')
                if (not field_path):
                    raise MeshCorrError("Manifest row has no field. id:{}".format(row['id']))
                scans.append(read_mesh(row['mesh']))
                values, _ = read_table(field_path)
                fields.append(CorrespondenceField(values, 'vertices', predicted=True))
            regs = coregister(
                scans,
                fields,
                body,
                emb,
                MatchWeights.from_config(config),
                shared_shape=options['shared_shape'],
                rounds=options['rounds'],
                workers=common.workers(config),
            )
            for row, reg in zip(rows, regs):
                save_registration(reg, out / row['id'])
        if (options['verbosity'] > 0):
            for row, reg in zip(rows, regs):
                s = reg.summary()
                self.stdout.write("id:{} loss_xi:{:.6g} loss_icp:{:.6g}".format(row['id'], s['loss_xi'], s['loss_icp']))
