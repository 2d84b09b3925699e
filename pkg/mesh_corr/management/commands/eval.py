from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand

from mesh_corr import reports
from mesh_corr.management.commands import common
from mesh_corr.register import (
    cumulative_curve,
    ground_truth_transfer,
    load_registration,
    mean_error,
    random_transfer,
    raw_transfer,
    transfer_correspondence,
    transfer_error,
)
from mesh_corr.synth import read_manifest
from mesh_corr.utils import MeshCorrError, format_float, read_csv, read_table, write_csv


REPORT_FIELDS = [
    'a',
    'b',
    'points',
    'valid',
    'registered_cm',
    'raw_cm',
    'random_cm',
]



def read_pairs(path):
    '''
    Pair rows with paths resolved against the CSV's directory.
    '''
    rows = read_csv(path)
    base = Path(path).parent
    for row in rows:
        for k in ('a', 'b', 'registration_a', 'registration_b'):
            if (not row.get(k)):
                raise MeshCorrError("Pair row misses a column. column:{} path:{}".format(k, path))
        for k in ('registration_a', 'registration_b', 'field_a', 'field_b'):
            if (row.get(k)):
                row[k] = base / row[k]
    return rows

def evaluate_pair(row, rest, rng):
    '''
    rng
        draws the random-assignment baseline
    return
        (report row, registered errors cm, raw errors cm or None,
        random errors cm)
    '''
    for k in ('a', 'b'):
        if (not row[k] in rest):
            raise MeshCorrError("Scan id not in the truth manifest. id:{}".format(row[k]))
    reg_a = load_registration(row['registration_a'])
    reg_b = load_registration(row['registration_b'])
    truth = ground_truth_transfer(rest[row['a']], rest[row['b']], reg_b.scan)
    errors = transfer_error(transfer_correspondence(reg_a, reg_b), truth)
    raw = None
    if (row.get('field_a') and row.get('field_b')):
        field_a, _ = read_table(row['field_a'])
        field_b, _ = read_table(row['field_b'])
        raw = transfer_error(raw_transfer(reg_a.scan, field_a, reg_b.scan, field_b), truth)
    chance = transfer_error(random_transfer(reg_a.scan, reg_b.scan, rng), truth)
    report = {
        'a': row['a'],
        'b': row['b'],
        'points': reg_a.scan.n_vertices,
        'valid': len(errors),
        'registered_cm': format_float(mean_error(errors)),
        'raw_cm': '' if raw is None else format_float(mean_error(raw)),
        'random_cm': format_float(mean_error(chance)),
    }
    return report, errors, raw, chance


class Command(BaseCommand):
    help = 'Correspondence error between registered scan pairs, in cm, against ground truth.'

    def add_arguments(self, parser):
        parser.add_argument(
            '-p',
            '--pairs',
            type=str,
            required=True,
            help="CSV with 'a', 'b', 'registration_a', 'registration_b' and optional 'field_a', 'field_b' columns",
        )
        parser.add_argument(
            '-t',
            '--truth',
            type=str,
            required=True,
            help='Manifest of the scans, giving rest-template positions by id',
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Report CSV. The cumulative error curve is written beside it',
        )
        common.add_config_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(options)
        pairs = common.existing_file(options['pairs'], 'pairs')
        truth = common.existing_file(options['truth'], 'truth')
        with common.command_errors():
            rows = read_pairs(pairs)
            if (not rows):
                raise MeshCorrError("No pairs to evaluate. path:{}".format(pairs))
            rest = {r['id']: read_table(r['rest'])[0] for r in read_manifest(truth)}
            report = []
            registered = []
            raw = []
            chance = []
            rng = np.random.default_rng(config.seed)
            for row in rows:
                line, errors, raw_errors, random_errors = evaluate_pair(row, rest, rng)
                report.append(line)
                registered.append(errors)
                chance.append(random_errors)
                if (raw_errors is not None):
                    raw.append(raw_errors)
            registered = np.concatenate(registered)
            summary = {
                'a': 'all',
                'b': 'all',
                'points': sum(r['points'] for r in report),
                'valid': len(registered),
                'registered_cm': format_float(mean_error(registered)),
                'raw_cm': '',
                'random_cm': format_float(mean_error(np.concatenate(chance))),
            }
            curves = {'registered': cumulative_curve(registered)}
            if (raw):
                raw = np.concatenate(raw)
                summary['raw_cm'] = format_float(mean_error(raw))
                curves['raw'] = cumulative_curve(raw)
            out = common.output_path(options['out'])
            write_csv(out, REPORT_FIELDS, report + [summary])
            reports.error_curve_report(common.stem_path(out, '_curve'), curves)
        common.write_summary(self, options, {
            'pairs': len(report),
            'mean_cm': summary['registered_cm'],
            'raw_cm': summary['raw_cm'] or '-',
            'random_cm': summary['random_cm'],
        })
