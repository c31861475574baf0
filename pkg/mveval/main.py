import argparse
import logging
import logging.config
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from mveval import __version__
from mveval.augment import Preset, generate_artificial_views, get_preset
from mveval.config import HarnessConfig, build_config, with_preset
from mveval.core_model import Dataset
from mveval.errors import ConfigError, DatasetValidationError, InvalidSpec, MetricError, \
    MvEvalError, ParseError, ScorerProtocolError, StageError, UnreadableImage, UnsupportedFormat
from mveval.file_io import LocalIO, save_score_table
from mveval.manifest import emit_manifest, parse_manifest
from mveval.plots import emit_plots
from mveval.protocol import build_report_for_sweeps, preset_sweep, run_experiment, sweep_n_images
from mveval.rasters import load_rasters, write_dataset_rasters, write_raster
from mveval.report import ExperimentReport, emit_report, load_report
from mveval.scorer import CachedScorer, ScoreItem, ScoreTable, Scorer, ScorerKind, ScorerSpec, \
    create_scorer
from mveval.synth import CalibrationMode, NoiseSpace, SynthMode, SynthSpec, generate
from mveval.utils import RandomStreams

LOG_FORMAT = '%(asctime)s - %(module)s:%(lineno)s - %(levelname)s - %(message)s'
ENV_LOGGER_INI = 'MVEVAL_LOGGER_INI'

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_SCORER = 3

VALIDATION_ERRORS = (DatasetValidationError, ParseError, ConfigError, InvalidSpec,
                     UnreadableImage, UnsupportedFormat)

logger = logging.getLogger('mveval')


def setup_logger() -> logging.Logger:
    config_path = os.environ.get(ENV_LOGGER_INI, 'logger.ini')
    if Path(config_path).is_file():
        logging.config.fileConfig(config_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, stream=sys.stderr)
    logger.debug('Logger initialized')
    return logger


def exit_code_for(error: Exception) -> int:
    cause: Exception = error
    while isinstance(cause, (StageError, MetricError)):
        cause = cause.cause
    if isinstance(cause, ScorerProtocolError):
        return EXIT_SCORER
    if isinstance(cause, VALIDATION_ERRORS):
        return EXIT_VALIDATION
    return EXIT_FAILURE


def _experiment_flags() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--seed', type=int, help='master seed')
    parser.add_argument('--config', help='JSON or YAML config file')
    parser.add_argument('--settings', help='defaults file (settings.yaml in the working directory)')
    parser.add_argument('--bootstrap', type=int, dest='n_bootstrap', help='bootstrap iterations')
    parser.add_argument('--repeats', type=int, dest='n_repeats', help='downsampling repeats')
    parser.add_argument('--ece-bins', type=int, dest='ece_bins', help='calibration bins')
    parser.add_argument('--preset', choices=[str(p) for p in Preset],
                        help='augmentation preset for MV-Artificial')
    parser.add_argument('--stratified', action=argparse.BooleanOptionalAction, default=None,
                        help='class-stratified bootstrap resampling')
    parser.add_argument('--workers', type=int, help='worker threads')
    parser.add_argument('--out', default='out', help='output directory')
    return parser


def _scorer_flags() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--scores', help='precomputed score table (csv or parquet)')
    source.add_argument('--scorer-command',
                        help='external scorer reading raster paths on stdin, one per line')
    parser.add_argument('--scorer-workdir', help='working directory of the external scorer')
    parser.add_argument('--scorer-sources', action='store_true',
                        help='send real images to the external scorer by their original file path '
                             'instead of the preprocessed raster')
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mveval',
                                     description='Single-view versus multi-view evaluation harness')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)
    experiment, scorer = _experiment_flags(), _scorer_flags()

    validate = sub.add_parser('validate', parents=[experiment], help='check a manifest')
    validate.add_argument('manifest')
    validate.add_argument('--rasters', action='store_true', help='also decode every image')

    synth = sub.add_parser('synth', parents=[experiment], help='generate a synthetic dataset')
    synth.add_argument('--spec', help='JSON or YAML synth spec; flags override it')
    synth.add_argument('--n-lesions', type=int)
    synth.add_argument('--k', type=int, help='images per lesion')
    synth.add_argument('--sigma', type=float, dest='noise_sigma', help='per-view noise scale')
    synth.add_argument('--mode', choices=[str(m) for m in SynthMode])
    synth.add_argument('--calibration', choices=[str(c) for c in CalibrationMode])
    synth.add_argument('--noise-space', choices=[str(n) for n in NoiseSpace])
    synth.add_argument('--confidence', type=float, dest='constant_confidence')
    synth.add_argument('--accuracy', type=float, dest='forced_accuracy')
    synth.add_argument('--raster-size', type=int)

    augment = sub.add_parser('augment', parents=[experiment], help='write artificial views')
    augment.add_argument('manifest')
    augment.add_argument('--n-views', type=int, default=5)

    score = sub.add_parser('score', parents=[experiment, scorer], help='score every image')
    score.add_argument('manifest')
    score.add_argument('--table', default='scores.csv', help='score table file name under --out')

    evaluate = sub.add_parser('evaluate', parents=[experiment, scorer], help='full experiment')
    evaluate.add_argument('manifest')
    evaluate.add_argument('--all-presets', action='store_true',
                          help='also evaluate MV-Artificial under every preset')

    sweep = sub.add_parser('sweep', parents=[experiment, scorer],
                           help='MV-Real over a range of extra images')
    sweep.add_argument('manifest')

    report = sub.add_parser('report', parents=[experiment], help='re-render a stored JSON report')
    report.add_argument('report_json')
    return parser


def _load_config(args: argparse.Namespace) -> HarnessConfig:
    overrides: Dict[str, Any] = {key: getattr(args, key, None)
                                 for key in ('seed', 'n_bootstrap', 'n_repeats', 'ece_bins',
                                             'stratified', 'workers')}
    config = build_config(args.config, overrides, settings_path=args.settings)
    experiment = with_preset(config.experiment, args.preset)
    return HarnessConfig(experiment, config.preprocessing, config.report)


def _scorer_spec(args: argparse.Namespace) -> ScorerSpec:
    if getattr(args, 'scores', None):
        return ScorerSpec(ScorerKind.SCORE_TABLE, table_path=args.scores)
    if getattr(args, 'scorer_command', None):
        image_root = str(Path(args.manifest).parent) if args.scorer_sources else None
        return ScorerSpec(ScorerKind.EXTERNAL_PROCESS, command=args.scorer_command,
                          working_dir=args.scorer_workdir, image_root=image_root)
    return ScorerSpec(ScorerKind.BUILTIN)


def _load_dataset(manifest: str, config: HarnessConfig, with_rasters: bool) -> Dataset:
    dataset = parse_manifest(manifest)
    if not with_rasters:
        return dataset
    return load_rasters(dataset, base_dir=str(Path(manifest).parent),
                        size=config.preprocessing.raster_size,
                        crop_threshold=config.preprocessing.crop_threshold,
                        workers=config.experiment.workers)


def _dataset_and_scorer(args: argparse.Namespace, config: HarnessConfig) -> Tuple[Dataset, Scorer]:
    spec = _scorer_spec(args)
    dataset = _load_dataset(args.manifest, config, with_rasters=spec.kind != ScorerKind.SCORE_TABLE)
    return dataset, CachedScorer(create_scorer(spec))


def _emit(report: ExperimentReport, out_dir: str, config: HarnessConfig) -> List[str]:
    written = emit_report(report, out_dir, config.report.formats, LocalIO(out_dir))
    if config.report.plots:
        written += emit_plots(report, out_dir)
    return written


def cmd_validate(args: argparse.Namespace, config: HarnessConfig) -> int:
    dataset = _load_dataset(args.manifest, config, with_rasters=args.rasters)
    k = dataset.images_per_lesion
    print(f'{args.manifest}: {len(dataset)} lesions, {int(dataset.positive_mask.sum())} melanoma, '
          f'images per lesion: {k if k is not None else "varies"}')
    return EXIT_OK


def _synth_spec(args: argparse.Namespace) -> SynthSpec:
    data: Dict[str, Any] = {}
    if args.spec:
        loaded = LocalIO().load_file(args.spec)
        if not isinstance(loaded, dict):
            raise InvalidSpec(f'{args.spec}: synth spec must be a mapping')
        data.update(loaded)
    for key in ('n_lesions', 'k', 'noise_sigma', 'mode', 'calibration', 'noise_space',
                'constant_confidence', 'forced_accuracy', 'raster_size'):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return SynthSpec.from_json(data)


def cmd_synth(args: argparse.Namespace, config: HarnessConfig) -> int:
    spec = _synth_spec(args)
    result = generate(spec, RandomStreams(config.experiment.seed).rng('synth'))
    file_io = LocalIO(args.out)
    written = [emit_manifest(result.dataset, str(Path(args.out, 'manifest.csv')), file_io)]
    if result.score_table is not None:
        written.append(save_score_table(result.score_table, str(Path(args.out, 'scores.csv')), file_io))
    written += write_dataset_rasters(result.dataset, args.out, result.rasters)
    written.append(file_io.save_file(str(Path(args.out, 'ground_truth.json')),
                                     {'spec': spec.to_json(), 'seed': config.experiment.seed,
                                      **result.ground_truth.to_json()}))
    print(f'wrote {len(written)} files to {args.out}')
    return EXIT_OK


def cmd_augment(args: argparse.Namespace, config: HarnessConfig) -> int:
    dataset = _load_dataset(args.manifest, config, with_rasters=True)
    setup = get_preset(args.preset or str(Preset.MILD))
    streams = RandomStreams(config.experiment.seed).child('augment', str(setup.name))
    written = []
    for record in dataset:
        for ref in record.images:
            raster = dataset.raster(ref)
            if raster is None:
                continue
            views = generate_artificial_views(raster, args.n_views, setup,
                                              streams.rng(ref.lesion_id, ref.index))
            for j, view in enumerate(views, start=1):
                path = Path(args.out, f'{ref.lesion_id}_{ref.index}_view{j}.png')
                written.append(write_raster(view, str(path)))
    print(f'wrote {len(written)} views to {args.out}')
    return EXIT_OK


def cmd_score(args: argparse.Namespace, config: HarnessConfig) -> int:
    dataset, scorer = _dataset_and_scorer(args, config)
    items = [ScoreItem(ref, dataset.raster(ref)) for record in dataset for ref in record.images]
    scores = scorer.score_batch(items)
    table = ScoreTable({item.ref.key: score for item, score in zip(items, scores)})
    path = save_score_table(table, str(Path(args.out, args.table)), LocalIO(args.out))
    print(f'wrote {len(table)} scores to {path}')
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: HarnessConfig) -> int:
    dataset, scorer = _dataset_and_scorer(args, config)
    report = run_experiment(config.experiment, dataset, scorer)
    if args.all_presets:
        report.sweeps.append(preset_sweep(config.experiment, dataset, scorer))
    written = _emit(report, args.out, config)
    print(f'wrote {len(written)} files to {args.out}')
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, config: HarnessConfig) -> int:
    dataset, scorer = _dataset_and_scorer(args, config)
    sweep = sweep_n_images(config.experiment, dataset, scorer)
    written = _emit(build_report_for_sweeps(config.experiment, [sweep]), args.out, config)
    print(f'wrote {len(written)} files to {args.out}')
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: HarnessConfig) -> int:
    report = load_report(args.report_json)
    written = _emit(report, args.out, config)
    print(f'wrote {len(written)} files to {args.out}')
    return EXIT_OK


COMMANDS = {
    'validate': cmd_validate,
    'synth': cmd_synth,
    'augment': cmd_augment,
    'score': cmd_score,
    'evaluate': cmd_evaluate,
    'sweep': cmd_sweep,
    'report': cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    setup_logger()
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        return COMMANDS[args.command](args, config)
    except DatasetValidationError as e:
        for issue in e.issues:
            print(issue, file=sys.stderr)
        logger.error(f'{len(e.issues)} dataset violation(s)')
        return EXIT_VALIDATION
    except MvEvalError as e:
        logger.error(str(e))
        return exit_code_for(e)


if __name__ == '__main__':
    sys.exit(main())
