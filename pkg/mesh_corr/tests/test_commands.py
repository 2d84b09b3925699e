import tempfile
from io import StringIO
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from mesh_corr.decimate import DecimationError
from mesh_corr.embedding import load_embedding
from mesh_corr.management.commands.common import error_line, stem_path
from mesh_corr.mesh_io import read_mesh, write_mesh
from mesh_corr.tests.utils import sphere
from mesh_corr.utils import read_csv


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.dir = Path(self._dir.name)

    def tearDown(self):
        self._dir.cleanup()

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()



class TestCommon(SimpleTestCase):

    def test_error_line_pipeline(self):
        line = error_line(DecimationError("Target edge count exceeds the mesh.\n target:9"))
        self.assertEqual(line, "module:decimate error:DecimationError detail:Target edge count exceeds the mesh. target:9")

    def test_error_line_other(self):
        line = error_line(ValidationError("bad"))
        self.assertTrue(line.startswith("module:cli error:ValidationError detail:"))

    def test_stem_path(self):
        self.assertEqual(stem_path('out/model.ckpt', '_loss'), Path('out/model_loss'))



class TestPreprocess(CommandTestCase):

    def test_decimate_obj(self):
        src = write_mesh(sphere(2), self.dir / 'scan.obj')
        dst = self.dir / 'out' / 'coarse.ply'
        lineage = self.dir / 'lineage.csv'
        text = self.call('preprocess', str(src), str(dst), edges=300, lineage=str(lineage))
        coarse = read_mesh(dst)
        self.assertEqual(coarse.n_edges, 300)
        self.assertIn("edges:300", text)
        self.assertIn("genus:0", text)
        rows = read_csv(lineage)
        self.assertEqual(len(rows), coarse.n_vertices)
        self.assertTrue(all(0 <= int(r['source']) < 162 for r in rows))

    def test_quiet(self):
        src = write_mesh(sphere(1), self.dir / 'scan.ply')
        text = self.call('preprocess', str(src), str(self.dir / 'coarse.obj'), edges=100, verbosity=0)
        self.assertEqual(text, '')

    def test_missing_input(self):
        with self.assertRaises(CommandError) as cm:
            self.call('preprocess', str(self.dir / 'absent.obj'), str(self.dir / 'o.obj'), edges=100)
        self.assertEqual(cm.exception.returncode, 2)

    def test_bad_extension(self):
        src = self.dir / 'scan.stl'
        src.write_bytes(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        with self.assertRaises(CommandError) as cm:
            self.call('preprocess', str(src), str(self.dir / 'o.obj'), edges=3)
        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn("error:ValidationError", str(cm.exception))

    def test_small_edge_target(self):
        src = write_mesh(sphere(1), self.dir / 'scan.obj')
        with self.assertRaises(CommandError) as cm:
            self.call('preprocess', str(src), str(self.dir / 'o.obj'), edges=2)
        self.assertEqual(cm.exception.returncode, 2)

    def test_target_above_mesh(self):
        # icosphere level 1 has 120 edges
        src = write_mesh(sphere(1), self.dir / 'scan.obj')
        with self.assertRaises(CommandError) as cm:
            self.call('preprocess', str(src), str(self.dir / 'o.obj'), edges=500)
        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn("module:decimate error:DecimationError", str(cm.exception))



class TestEmbed(CommandTestCase):

    def test_embed_template(self):
        template = sphere(1)
        path = write_mesh(template, self.dir / 'template.obj')
        out = self.dir / 'emb' / 'template.omega'
        text = self.call('embed', template=str(path), dim=3, out=str(out), max_dim=4)
        emb = load_embedding(out, read_mesh(path))
        self.assertEqual(emb.omega.shape, (42, 3))
        self.assertIn("dim:3", text)
        self.assertIn("distortion:", text)
        rows = read_csv(self.dir / 'emb' / 'template_strain.csv')
        self.assertEqual([int(r['dim']) for r in rows], [1, 2, 3, 4])
        strains = [float(r['strain']) for r in rows]
        self.assertEqual(strains, sorted(strains, reverse=True))
        self.assertTrue((self.dir / 'emb' / 'template_strain.svg').is_file())

    def test_missing_template(self):
        with self.assertRaises(CommandError) as cm:
            self.call('embed', template=str(self.dir / 'absent.obj'), out=str(self.dir / 'e.omega'))
        self.assertEqual(cm.exception.returncode, 2)

    def test_bad_config_file(self):
        config = self.dir / 'run.yaml'
        config.write_text("dim: -1\n")
        with self.assertRaises(CommandError) as cm:
            self.call('embed', config=str(config), out=str(self.dir / 'e.omega'))
        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn("error:ImproperlyConfigured", str(cm.exception))



class TestEval(CommandTestCase):

    def test_no_pairs(self):
        pairs = self.dir / 'pairs.csv'
        pairs.write_text("a,b,registration_a,registration_b\n")
        truth = self.dir / 'manifest.csv'
        truth.write_text("id,mesh,labels,params,rest,notes\n")
        with self.assertRaises(CommandError) as cm:
            self.call('eval', pairs=str(pairs), truth=str(truth), out=str(self.dir / 'report.csv'))
        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn("No pairs to evaluate", str(cm.exception))

    def test_missing_truth(self):
        pairs = self.dir / 'pairs.csv'
        pairs.write_text("a,b,registration_a,registration_b\n")
        with self.assertRaises(CommandError) as cm:
            self.call('eval', pairs=str(pairs), truth=str(self.dir / 'absent.csv'), out=str(self.dir / 'r.csv'))
        self.assertEqual(cm.exception.returncode, 2)
