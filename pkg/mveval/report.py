"""
Experiment reports: the result types produced by the protocol and their
renderings. JSON carries full precision; Markdown and CSV tables format
metrics to three decimals as 0.871 (95% CI: 0.850-0.893) followed by the
p-value of the comparison against the reference method.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from mveval.file_io import FileIO, LocalIO
from mveval.metrics import ReliabilityBins
from mveval.stats import BootstrapResult, ComparisonResult
from mveval.utils import format_ci, format_metric, format_p_value

logger = logging.getLogger('mveval')

AUROC = 'auroc'
ECE = 'ece'
MCC_PREFIX = 'mcc_'

REPORT_JSON = 'report.json'
REPORT_MD = 'report.md'
REPORT_CSV = 'report.csv'
FORMATS = ('json', 'md', 'csv')


def mcc_key(bundle_size: int) -> str:
    return f'{MCC_PREFIX}{bundle_size}'


def metric_label(key: str) -> str:
    """ row label with the direction arrow, e.g. 'MMC (# images: 2) ↓' """
    if key == AUROC:
        return 'AUROC ↑'
    if key == ECE:
        return 'ECE ↓'
    if key.startswith(MCC_PREFIX):
        return f'MMC (# images: {key[len(MCC_PREFIX):]}) ↓'
    return key


def metric_keys(bundle_sizes: Sequence[int]) -> List[str]:
    return [AUROC, ECE] + [mcc_key(size) for size in sorted(set(bundle_sizes))]


def _results_to_json(results: Dict[str, Dict[str, BootstrapResult]]) -> Dict[str, Any]:
    return {metric: {method: result.to_json() for method, result in by_method.items()}
            for metric, by_method in results.items()}


def _results_from_json(data: Dict[str, Any]) -> Dict[str, Dict[str, BootstrapResult]]:
    return {metric: {method: BootstrapResult.from_json(result) for method, result in by_method.items()}
            for metric, by_method in data.items()}


@dataclass
class RepeatResult:
    repeat: int
    original_indices: Dict[str, int]
    results: Dict[str, Dict[str, BootstrapResult]]  # metric -> method name -> result
    comparisons: List[ComparisonResult]
    reliability: Dict[str, ReliabilityBins] = field(default_factory=dict)

    def comparison(self, metric: str, method: str) -> Optional[ComparisonResult]:
        for comparison in self.comparisons:
            if comparison.metric == metric and comparison.method_b == method:
                return comparison
        return None

    def to_json(self) -> Dict[str, Any]:
        return {
            'repeat': self.repeat,
            'original_indices': self.original_indices,
            'results': _results_to_json(self.results),
            'comparisons': [c.to_json() for c in self.comparisons],
            'reliability': {method: bins.to_json() for method, bins in self.reliability.items()},
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'RepeatResult':
        return cls(repeat=data['repeat'],
                   original_indices=dict(data['original_indices']),
                   results=_results_from_json(data['results']),
                   comparisons=[ComparisonResult.from_json(c) for c in data['comparisons']],
                   reliability={method: ReliabilityBins.from_json(bins)
                                for method, bins in data.get('reliability', {}).items()})


@dataclass
class SweepRow:
    label: str
    method: str
    results: Dict[str, BootstrapResult]  # metric -> result

    def to_json(self) -> Dict[str, Any]:
        return {'label': self.label, 'method': self.method,
                'results': {metric: result.to_json() for metric, result in self.results.items()}}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'SweepRow':
        return cls(data['label'], data['method'],
                   {metric: BootstrapResult.from_json(r) for metric, r in data['results'].items()})


@dataclass
class SweepResult:
    """ AUROC and ECE for one method family as a single parameter varies """
    parameter: str
    rows: List[SweepRow]

    def to_json(self) -> Dict[str, Any]:
        return {'parameter': self.parameter, 'rows': [row.to_json() for row in self.rows]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'SweepResult':
        return cls(data['parameter'], [SweepRow.from_json(row) for row in data['rows']])

    def to_frame(self) -> pd.DataFrame:
        metrics = [AUROC, ECE]
        return pd.DataFrame(
            [[row.label] + [format_ci(row.results[m].point, row.results[m].ci) for m in metrics]
             for row in self.rows],
            columns=[self.parameter] + [metric_label(m) for m in metrics])


@dataclass
class ExperimentReport:
    config: Dict[str, Any]
    methods: List[str]
    display_names: Dict[str, str]
    metrics: List[str]
    reference_method: Optional[str]
    repeats: List[RepeatResult]
    metadata: Dict[str, Any]
    sweeps: List[SweepResult] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {
            'config': self.config,
            'methods': self.methods,
            'display_names': self.display_names,
            'metrics': self.metrics,
            'reference_method': self.reference_method,
            'metadata': self.metadata,
            'repeats': [repeat.to_json() for repeat in self.repeats],
            'summary': self.summary_json(),
            'sweeps': [sweep.to_json() for sweep in self.sweeps],
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'ExperimentReport':
        return cls(config=data['config'],
                   methods=list(data['methods']),
                   display_names=dict(data['display_names']),
                   metrics=list(data['metrics']),
                   reference_method=data.get('reference_method'),
                   repeats=[RepeatResult.from_json(r) for r in data['repeats']],
                   metadata=dict(data['metadata']),
                   sweeps=[SweepResult.from_json(s) for s in data.get('sweeps', [])])

    def column_labels(self) -> Dict[str, str]:
        """ display names, falling back to method names when two methods share one """
        displays = [self.display_names[m] for m in self.methods]
        return {m: self.display_names[m] if displays.count(self.display_names[m]) == 1 else m
                for m in self.methods}

    def summary_json(self) -> Dict[str, Dict[str, float]]:
        """ mean point estimate over repeats per metric and method """
        if not self.repeats:
            return {}
        return {metric: {method: float(np.mean([r.results[metric][method].point for r in self.repeats]))
                         for method in self.methods}
                for metric in self.metrics}

    def repeat_table(self, repeat: RepeatResult) -> pd.DataFrame:
        labels = self.column_labels()
        rows = []
        for metric in self.metrics:
            row = [metric_label(metric)]
            for method in self.methods:
                result = repeat.results[metric][method]
                cell = format_ci(result.point, result.ci)
                comparison = repeat.comparison(metric, method)
                if comparison is not None:
                    cell = f'{cell} {format_p_value(comparison.p_value)}'
                row.append(cell)
            rows.append(row)
        return pd.DataFrame(rows, columns=['Metric'] + [labels[m] for m in self.methods])

    def summary_table(self) -> pd.DataFrame:
        labels = self.column_labels()
        summary = self.summary_json()
        return pd.DataFrame(
            [[metric_label(metric)] + [format_metric(summary[metric][m]) for m in self.methods]
             for metric in self.metrics],
            columns=['Metric'] + [labels[m] for m in self.methods])

    def long_frame(self) -> pd.DataFrame:
        """ one row per repeat x metric x method with raw values """
        rows = []
        for repeat in self.repeats:
            for metric in self.metrics:
                for method in self.methods:
                    result = repeat.results[metric][method]
                    comparison = repeat.comparison(metric, method)
                    rows.append({
                        'repeat': repeat.repeat,
                        'metric': metric,
                        'method': method,
                        'point': result.point,
                        'ci_low': result.ci_low,
                        'ci_high': result.ci_high,
                        'p_value': comparison.p_value if comparison else None,
                        'significant': comparison.significant if comparison else None,
                        'formatted': format_ci(result.point, result.ci),
                    })
        return pd.DataFrame(rows, columns=['repeat', 'metric', 'method', 'point', 'ci_low',
                                           'ci_high', 'p_value', 'significant', 'formatted'])


def render_markdown(report: ExperimentReport) -> str:
    lines = ['# Multi-view evaluation report', '']
    config = report.config
    for key in ('seed', 'n_bootstrap', 'n_repeats', 'alpha', 'ece_bins', 'stratified'):
        if key in config:
            lines.append(f'- {key}: {config[key]}')
    if report.reference_method:
        lines.append(f'- reference method: {report.reference_method}')
    lines.append('')

    for repeat in report.repeats:
        lines += [f'## Repeat {repeat.repeat}', '', report.repeat_table(repeat).to_markdown(index=False), '']
    if report.repeats:
        lines += ['## Mean over repeats', '', report.summary_table().to_markdown(index=False), '']
    for sweep in report.sweeps:
        lines += [f'## Sweep over {sweep.parameter}', '', sweep.to_frame().to_markdown(index=False), '']

    if report.metadata:
        lines += ['## Protocol', '']
        lines += [f'- {key}: {value}' for key, value in report.metadata.items()]
        lines.append('')
    return '\n'.join(lines)


def emit_report(report: ExperimentReport,
                out_dir: str,
                formats: Sequence[str] = FORMATS,
                file_io: Optional[FileIO] = None) -> List[str]:
    """
    write the report in each requested format under out_dir
    :return: written paths
    """
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f'Unknown report formats: {unknown}')
    file_io = file_io or LocalIO(out_dir)
    written = []
    if 'json' in formats:
        written.append(file_io.save_file(str(Path(out_dir, REPORT_JSON)), report.to_json()))
    if 'md' in formats:
        written.append(file_io.save_file(str(Path(out_dir, REPORT_MD)), render_markdown(report)))
    if 'csv' in formats and report.repeats:
        written.append(file_io.save_file(str(Path(out_dir, REPORT_CSV)), report.long_frame()))
    for path in written:
        logger.info(f'wrote {path}')
    return written


def load_report(path: str, file_io: Optional[FileIO] = None) -> ExperimentReport:
    file_io = file_io or LocalIO()
    return ExperimentReport.from_json(file_io.load_file(path))
