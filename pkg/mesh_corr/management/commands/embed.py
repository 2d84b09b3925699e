from django.core.management.base import BaseCommand

from mesh_corr import reports
from mesh_corr.embedding import build_embedding, save_embedding
from mesh_corr.humanoid import build_humanoid
from mesh_corr.management.commands import common
from mesh_corr.mesh_io import read_mesh


class Command(BaseCommand):
    help = 'Embed the template geodesic distances in R^d. Also writes the strain against dimension as CSV and SVG.'

    def add_arguments(self, parser):
        parser.add_argument(
            '--template',
            type=str,
            help='Template mesh. Default is the bundled humanoid',
        )
        parser.add_argument(
            '-d',
            '--dim',
            type=int,
            help='Embedding dimension. Default is dim from the config',
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Embedding file',
        )
        parser.add_argument(
            '--smacof',
            action='store_true',
            default=None,
            help='Refine classical scaling with SMACOF stress majorization',
        )
        parser.add_argument(
            '--max-dim',
            type=int,
            default=8,
            help='Highest dimension in the strain curve',
        )
        common.add_config_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options, dim=options['dim'], smacof=options['smacof'])
        if (options['max_dim'] < 1):
            raise common.usage_error("module:cli error:ValueError detail:--max-dim must be positive. max_dim:{}".format(options['max_dim']))
        with common.command_errors():
            if (config.template):
                template = read_mesh(common.existing_file(config.template, 'template'))
            else:
                template = build_humanoid(config.template_resolution, config.kinematic_tree).template
            emb = build_embedding(template, config.dim, config.smacof, config.seed)
            out = common.output_path(options['out'])
            save_embedding(emb, out)
            dims = range(1, min(options['max_dim'], template.n_vertices) + 1)
            curve = emb.strain_curve(dims)
            reports.strain_report(common.stem_path(out, '_strain'), curve)
        common.write_summary(self, options, {
            'vertices': template.n_vertices,
            'dim': emb.d,
            'strain': "{:.6g}".format(emb.strain),
            'distortion': "{:.3g}".format(emb.median_distortion),
        })
