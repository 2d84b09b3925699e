import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand

from mesh_corr import reports
from mesh_corr.conv_net import UMeshModel, prepare_sample, save_checkpoint, train
from mesh_corr.management.commands import common
from mesh_corr.mesh_io import read_mesh
from mesh_corr.synth import read_labels, read_manifest
from mesh_corr.utils import MeshCorrError, derive_seeds


logger = logging.getLogger(__name__)



def _prepare(edge_target, levels, ratio, kind, job):
    name, mesh_path, labels_path, seed = job
    return prepare_sample(
        name,
        read_mesh(mesh_path),
        read_labels(labels_path),
        edge_target,
        levels,
        ratio,
        kind,
        np.random.default_rng(seed),
    )

def load_samples(rows, config, workers):
    '''
    Decimated training samples for manifest rows, in row order.
    '''
    seeds = derive_seeds(config.seed, len(rows))
    jobs = [(r['id'], r['mesh'], r['labels'], s) for r, s in zip(rows, seeds)]
    work = partial(_prepare, config.edge_target, config.levels, config.pool_ratio, config.signal)
    if (workers > 1 and len(jobs) > 1):
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            samples = list(pool.map(work, jobs))
    else:
        samples = [work(job) for job in jobs]
    logger.info("Prepared %s training scans, edges:%s", len(samples), config.edge_target)
    return samples


class Command(BaseCommand):
    help = 'Train the mesh network on a synthetic dataset. Writes a checkpoint and the loss history.'

    def add_arguments(self, parser):
        parser.add_argument(
            '-d',
            '--data',
            type=str,
            required=True,
            help='Dataset directory holding manifest.csv',
        )
        parser.add_argument(
            '-o',
            '--out',
            type=str,
            required=True,
            help='Checkpoint file',
        )
        parser.add_argument(
            '--epochs',
            type=int,
            help='Training epochs. Default from the config',
        )
        parser.add_argument(
            '--signal',
            type=str,
            help='Registered signal kind orienting the patches',
        )
        common.add_config_arguments(parser)

    def handle(self, *args, **options):
        common.set_verbosity(options)
        config = common.get_config(
            options,
            dataset=options['data'],
            epochs=options['epochs'],
            signal=options['signal'],
        )
        manifest = common.existing_file(Path(config.dataset) / 'manifest.csv', 'data')
        with common.command_errors():
            rows = read_manifest(manifest)
            if (not rows):
                raise MeshCorrError("Dataset has no scans. path:{}".format(manifest))
            samples = load_samples(rows, config, common.workers(config))
            d = samples[0].labels.shape[1]
            model = UMeshModel(config.levels, config.width, d, seed=config.seed)
            model, history = train(
                model,
                samples,
                epochs=config.epochs,
                batch=config.batch,
                learning_rate=config.learning_rate,
                betas=config.betas,
                seed=config.seed,
                validation_fraction=config.validation_fraction,
                train_fraction=config.train_fraction,
                workers=config.workers,
            )
            out = common.output_path(options['out'])
            save_checkpoint(model, out, config.pool_ratio, config.edge_target, config.signal)
            if (history):
                reports.loss_report(common.stem_path(out, '_loss'), history)
        summary = {'scans': len(samples), 'epochs': len(history)}
        if (history):
            summary['train_loss'] = "{:.6g}".format(history[-1].train_loss)
            if (history[-1].val_loss is not None):
                summary['val_loss'] = "{:.6g}".format(history[-1].val_loss)
        common.write_summary(self, options, summary)
