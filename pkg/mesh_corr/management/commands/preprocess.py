from django.core.management.base import BaseCommand

from mesh_corr.management.commands import common
from mesh_corr.mesh_core import preprocess_with_lineage
from mesh_corr.mesh_io import read_mesh, write_mesh
from mesh_corr.utils import write_csv


class Command(BaseCommand):
    help = 'Clean a scan to one manifest component and decimate it to a fixed edge count.'

    def add_arguments(self, parser):
        parser.add_argument(
            'in',
            type=str,
            help='Scan mesh, OBJ or PLY',
        )
        parser.add_argument(
            'out',
            type=str,
            help='Output mesh, format from the extension',
        )
        parser.add_argument(
            '-n',
            '--edges',
            type=int,
            help='Target edge count. Default is m0 from the config',
        )
        parser.add_argument(
            '--lineage',
            type=str,
            help='CSV of the source vertex each output vertex descends from',
        )
        common.add_config_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options)
        src = common.existing_file(options['in'], 'in')
        edges = options['edges'] or config.edge_target
        if (edges < 3):
            raise common.usage_error("module:cli error:ValueError detail:--edges must be at least 3. edges:{}".format(edges))
        with common.command_errors():
            mesh = read_mesh(src)
            coarse, lineage = preprocess_with_lineage(mesh, edges)
            write_mesh(coarse, common.output_path(options['out']))
            if (options['lineage']):
                write_csv(
                    common.output_path(options['lineage']),
                    ['vertex', 'source'],
                    ({'vertex': i, 'source': int(s)} for i, s in enumerate(lineage)),
                )
        common.write_summary(self, options, {
            'vertices': coarse.n_vertices,
            'faces': coarse.n_faces,
            'edges': coarse.n_edges,
            'genus': coarse.genus(),
        })
