import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
import plotly.graph_objects as go

from mveval.metrics import ReliabilityBins
from mveval.report import AUROC, ECE, ExperimentReport, SweepResult, metric_label

logger = logging.getLogger('mveval')

PLOTLY_JS = 'directory'


def reliability_figure(bins_by_method: Dict[str, ReliabilityBins], title: str) -> go.Figure:
    """ accuracy against mean confidence per occupied bin, with the diagonal of perfect calibration """
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=[0.5, 1.0], y=[0.5, 1.0], mode='lines', name='calibrated',
                             line=dict(dash='dash', color='gray')))
    for label, bins in bins_by_method.items():
        occupied = bins.occupied
        fig.add_trace(go.Scatter(x=bins.mean_confidence[occupied],
                                 y=bins.accuracy[occupied],
                                 mode='lines+markers',
                                 name=f'{label} (ECE {bins.ece():.3f})',
                                 text=[f'n={int(c)}' for c in bins.counts[occupied]]))
    fig.update_layout(title=title, legend_title_text='Method')
    fig.update_xaxes(title_text='Confidence', range=[0.45, 1.0])
    fig.update_yaxes(title_text='Accuracy', range=[0.0, 1.05])
    return fig


def sweep_box_figure(sweep: SweepResult, metric: str) -> go.Figure:
    """ one box of bootstrap samples per sweep row: quartiles, whiskers and median """
    fig = go.Figure()
    for row in sweep.rows:
        samples = row.results[metric].samples
        fig.add_trace(go.Box(y=np.asarray(samples), name=row.label, boxpoints=False))
    fig.update_layout(title=f'{metric_label(metric)} by {sweep.parameter}', showlegend=False)
    fig.update_xaxes(title_text=sweep.parameter)
    fig.update_yaxes(title_text=metric_label(metric))
    return fig


def write_figure(fig: go.Figure, path: str) -> str:
    """ static html; the div id is fixed so identical figures give identical files """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(path, include_plotlyjs=PLOTLY_JS, div_id=Path(path).stem)
    return path


def emit_plots(report: ExperimentReport, out_dir: str) -> List[str]:
    written = []
    labels = report.column_labels()
    for repeat in report.repeats:
        bins = {labels[method]: repeat.reliability[method]
                for method in report.methods if method in repeat.reliability}
        if bins:
            fig = reliability_figure(bins, f'Reliability, repeat {repeat.repeat}')
            written.append(write_figure(fig, str(Path(out_dir, f'reliability_repeat{repeat.repeat}.html'))))
    for sweep in report.sweeps:
        for metric in (AUROC, ECE):
            fig = sweep_box_figure(sweep, metric)
            written.append(write_figure(fig, str(Path(out_dir, f'sweep_{sweep.parameter}_{metric}.html'))))
    for path in written:
        logger.info(f'wrote {path}')
    return written
