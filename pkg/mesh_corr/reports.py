'''
CSV tables and SVG line charts for command output.
Charts are drawn on the Agg canvas; no display is needed.
'''
import logging

import matplotlib
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from mesh_corr.utils import format_float, write_csv


logger = logging.getLogger(__name__)

# fixed ids and no date, so the same data gives the same bytes
SVG_PARAMS = {
    'svg.hashsalt': 'mesh_corr',
    'svg.fonttype': 'none',
}



def line_chart(path, series, title, xlabel, ylabel, logy=False):
    '''
    Write an SVG line chart.

    series
        list of (label, xs, ys)
    '''
    with matplotlib.rc_context(SVG_PARAMS):
        fig = Figure(figsize=(6, 4))
        FigureCanvasAgg(fig)
        ax = fig.add_subplot(1, 1, 1)
        for label, xs, ys in series:
            ax.plot(list(xs), list(ys), label=label, linewidth=1.5)
        if (logy):
            ax.set_yscale('log')
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if (len(series) > 1):
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
    logger.debug("Chart written. path:%s", path)
    return path

def strain_report(stem, curve):
    '''
    stem.csv and stem.svg of strain against embedding dimension.
    curve
        list of (d, strain)
    '''
    write_csv(
        str(stem) + '.csv',
        ['dim', 'strain'],
        ({'dim': d, 'strain': format_float(s)} for d, s in curve),
    )
    line_chart(
        str(stem) + '.svg',
        [('strain', [d for d, _ in curve], [s for _, s in curve])],
        'Embedding strain',
        'dimensions',
        'strain',
    )

def loss_report(stem, history):
    '''
    history
        list of LossRecord
    '''
    write_csv(
        str(stem) + '.csv',
        ['epoch', 'train_loss', 'val_loss'],
        (
            {
                'epoch': r.epoch,
                'train_loss': format_float(r.train_loss),
                'val_loss': '' if r.val_loss is None else format_float(r.val_loss),
            }
            for r in history
        ),
    )
    epochs = [r.epoch for r in history]
    series = [('train', epochs, [r.train_loss for r in history])]
    val = [r for r in history if r.val_loss is not None]
    if (val):
        series.append(('validation', [r.epoch for r in val], [r.val_loss for r in val]))
    line_chart(str(stem) + '.svg', series, 'Training loss', 'epoch', 'loss', logy=True)

def error_curve_report(stem, curves):
    '''
    curves
        dict label -> list of (threshold cm, fraction)
    '''
    labels = list(curves)
    rows = []
    for k, (t, _) in enumerate(curves[labels[0]]):
        row = {'threshold_cm': format_float(t)}
        for label in labels:
            row[label] = format_float(curves[label][k][1])
        rows.append(row)
    write_csv(str(stem) + '.csv', ['threshold_cm', *labels], rows)
    line_chart(
        str(stem) + '.svg',
        [(label, [t for t, _ in c], [f for _, f in c]) for label, c in curves.items()],
        'Cumulative correspondence error',
        'error (cm)',
        'fraction of points',
    )
