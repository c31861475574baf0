import subprocess

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
import hypothesis.strategies as st
from scipy.special import expit

from mveval.core_model import ImageRef
from mveval.errors import ConfigError, InvalidRaster, MissingScore, NonFiniteScore, \
    ScorerProtocolError
from mveval.file_io import load_score_table, save_score_table
from mveval.scorer import BUILTIN_BIAS, BUILTIN_LIPSCHITZ, BuiltinScorer, CachedScorer, \
    ExternalProcessScorer, ScoreItem, ScoreTable, ScoreTableScorer, ScorerKind, ScorerSpec, \
    builtin_score, create_scorer, score_batch


def _item(lesion_id='L1', index=0, raster=None, artificial=False):
    return ScoreItem(ImageRef(lesion_id, index), raster, artificial)


def test_score_table_lookup():
    scorer = ScoreTableScorer(ScoreTable({('L1', 0): 0.8}))
    assert scorer.score_batch([_item()]) == [0.8]
    with pytest.raises(MissingScore, match="'L1' image 1"):
        scorer.score_batch([_item(index=1)])


def test_score_table_rejects_artificial_views():
    scorer = ScoreTableScorer(ScoreTable({('L1', 0): 0.8}))
    with pytest.raises(MissingScore):
        scorer.score_batch([_item(artificial=True)])


def test_score_table_rejects_bad_values():
    with pytest.raises(NonFiniteScore):
        ScoreTable({('L1', 0): float('nan')})
    with pytest.raises(NonFiniteScore):
        ScoreTable({('L1', 0): 1.2})


def test_score_table_frame_columns():
    with pytest.raises(ConfigError):
        ScoreTable.from_frame(pd.DataFrame({'lesion_id': ['L1'], 'score': [0.5]}))


def test_score_table_file(tmp_path):
    table = ScoreTable({('L1', 0): 0.123456789012, ('L1', 1): 0.5})
    path = save_score_table(table, str(tmp_path / 'scores.csv'))
    assert load_score_table(path) == table
    with pytest.raises(ConfigError):
        load_score_table(str(tmp_path / 'missing.csv'))


def test_builtin_zero_raster():
    assert builtin_score(np.zeros((4, 4, 3))) == pytest.approx(float(expit(BUILTIN_BIAS)), abs=1e-15)


def test_builtin_is_deterministic():
    img = np.random.default_rng(0).random((4, 4, 3))
    score = builtin_score(img)
    assert 0.0 <= score <= 1.0
    assert builtin_score(img.copy()) == score


@given(seed=st.integers(0, 10_000), eps=st.floats(1e-6, 0.05),
       row=st.integers(0, 3), col=st.integers(0, 3), channel=st.integers(0, 2))
def test_builtin_lipschitz(seed, eps, row, col, channel):
    img = np.random.default_rng(seed).uniform(0.0, 0.9, (4, 4, 3))
    brighter = img.copy()
    brighter[row, col, channel] += eps
    assert abs(builtin_score(brighter) - builtin_score(img)) <= BUILTIN_LIPSCHITZ * eps + 1e-12


def test_builtin_needs_raster():
    with pytest.raises(InvalidRaster):
        BuiltinScorer().score_batch([_item()])


@given(n=st.integers(0, 12))
def test_output_order_matches_input(n):
    rasters = [np.full((2, 2, 3), i / 12.0) for i in range(n)]
    items = [_item(index=i, raster=r) for i, r in enumerate(rasters)]
    assert BuiltinScorer().score_batch(items) == [builtin_score(r) for r in rasters]


def test_external_process(mocker):
    run = mocker.patch('mveval.scorer.subprocess.run',
                       return_value=subprocess.CompletedProcess([], 0, stdout='0.25\n0.75\n', stderr=''))
    scorer = ExternalProcessScorer('my-model --batch 2')
    items = [_item(index=i, raster=np.zeros((2, 2, 3))) for i in range(2)]
    assert scorer.score_batch(items) == [0.25, 0.75]

    args, kwargs = run.call_args
    assert args[0] == ['my-model', '--batch', '2']
    paths = kwargs['input'].splitlines()
    assert len(paths) == 2 and all(p.endswith('.png') for p in paths)


def test_external_process_keeps_braces(mocker):
    run = mocker.patch('mveval.scorer.subprocess.run',
                       return_value=subprocess.CompletedProcess([], 0, stdout='0.5\n', stderr=''))
    scorer = ExternalProcessScorer("awk '{print 0.5}'")
    assert scorer.score_batch([_item(raster=np.full((4, 4, 3), 0.5))]) == [0.5]
    assert run.call_args.args[0] == ['awk', '{print 0.5}']


def test_external_process_bad_command(mocker):
    run = mocker.patch('mveval.scorer.subprocess.run')
    for command in ("my-model 'unclosed", '   '):
        with pytest.raises(ScorerProtocolError):
            ExternalProcessScorer(command).score_batch([_item(raster=np.zeros((2, 2, 3)))])
    run.assert_not_called()


def test_external_process_sends_source_files(mocker, tmp_path):
    source = tmp_path / 'img' / 'L1_0.png'
    source.parent.mkdir()
    source.write_bytes(b'original bytes')
    run = mocker.patch('mveval.scorer.subprocess.run',
                       return_value=subprocess.CompletedProcess([], 0, stdout='0.1\n0.2\n0.3\n', stderr=''))
    raster = np.full((2, 2, 3), 0.4)
    items = [ScoreItem(ImageRef('L1', 0, 'img/L1_0.png'), raster),
             ScoreItem(ImageRef('L1', 0, 'img/L1_0.png'), raster, artificial=True),
             ScoreItem(ImageRef('L1', 1, 'img/L1_1.png'), raster)]
    scorer = ExternalProcessScorer('my-model', image_root=str(tmp_path))
    assert scorer.score_batch(items) == [0.1, 0.2, 0.3]

    paths = run.call_args.kwargs['input'].splitlines()
    assert paths[0] == str(source.resolve())
    assert paths[1] != paths[0] and paths[1].endswith('000001.png')
    assert paths[2].endswith('000002.png')


@pytest.mark.parametrize('stdout, returncode', [
    ('0.25\n', 0),
    ('0.25\nabc\n', 0),
    ('0.25\n1.5\n', 0),
    ('0.25\n0.75\n', 1),
])
def test_external_process_failures(mocker, stdout, returncode):
    mocker.patch('mveval.scorer.subprocess.run',
                 return_value=subprocess.CompletedProcess([], returncode, stdout=stdout, stderr='boom'))
    items = [_item(index=i, raster=np.zeros((2, 2, 3))) for i in range(2)]
    with pytest.raises((ScorerProtocolError, NonFiniteScore)):
        ExternalProcessScorer('my-model').score_batch(items)


def test_external_process_missing_binary(mocker):
    mocker.patch('mveval.scorer.subprocess.run', side_effect=FileNotFoundError('no such file'))
    with pytest.raises(ScorerProtocolError):
        ExternalProcessScorer('missing-model').score_batch([_item(raster=np.zeros((2, 2, 3)))])


def test_cached_scorer_scores_real_images_once(mocker):
    inner = BuiltinScorer()
    spy = mocker.spy(inner, 'score_batch')
    scorer = CachedScorer(inner)
    raster = np.full((2, 2, 3), 0.3)
    first = scorer.score_batch([_item(raster=raster), _item(raster=raster, artificial=True)])
    second = scorer.score_batch([_item(raster=raster), _item(raster=raster, artificial=True)])
    assert first == second
    assert [len(call.args[0]) for call in spy.call_args_list] == [2, 1]


def test_scorer_spec_validation():
    with pytest.raises(ConfigError):
        ScorerSpec(ScorerKind.EXTERNAL_PROCESS)
    with pytest.raises(ConfigError):
        ScorerSpec(ScorerKind.BUILTIN, table_path='scores.csv')


def test_score_batch_by_spec(tmp_path):
    path = save_score_table(ScoreTable({('L1', 0): 0.8}), str(tmp_path / 'scores.csv'))
    assert score_batch(ScorerSpec(ScorerKind.SCORE_TABLE, table_path=path), [_item()]) == [0.8]
    assert isinstance(create_scorer(ScorerSpec(ScorerKind.BUILTIN)), BuiltinScorer)


def test_only_external_scorer_takes_image_root():
    with pytest.raises(ConfigError):
        ScorerSpec(ScorerKind.BUILTIN, image_root='data')
    spec = ScorerSpec(ScorerKind.EXTERNAL_PROCESS, command='my-model', image_root='data')
    assert isinstance(create_scorer(spec), ExternalProcessScorer)
