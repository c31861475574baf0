import pytest

from mveval.core_model import IssueKind, Label
from mveval.errors import DatasetValidationError, ParseError
from mveval.file_io import LocalIO
from mveval.manifest import emit_manifest, manifest_frame, parse_manifest
from tests.create_dummy_data.dummy_lesions import create_dummy_manifest_rows, write_manifest


def test_parse_manifest(tmp_path):
    path = write_manifest(tmp_path / 'manifest.csv', create_dummy_manifest_rows(2, 6))
    dataset = parse_manifest(path)
    assert dataset.lesion_ids == ['L0', 'L1']
    assert dataset['L0'].label is Label.MELANOMA
    assert dataset['L1'].label is Label.NEVUS
    assert dataset.images_per_lesion == 6
    assert dataset['L1'].images[3].source == 'images/L1_3.png'
    assert dict(dataset['L0'].metadata) == {'body_site': 'back'}


def test_rows_are_sorted_by_index(tmp_path):
    rows = create_dummy_manifest_rows(1, 3)
    rows = [rows[0], rows[3], rows[1], rows[2]]
    dataset = parse_manifest(write_manifest(tmp_path / 'm.csv', rows))
    assert [ref.index for ref in dataset['L0'].images] == [0, 1, 2]


def test_missing_column(tmp_path):
    path = write_manifest(tmp_path / 'm.csv', [['lesion_id', 'image_index', 'label'], ['L0', '0', 'nevus']])
    with pytest.raises(ParseError) as e:
        parse_manifest(path)
    assert e.value.line == 1
    assert 'source' in str(e.value)


def test_bad_index_reports_line(tmp_path):
    rows = create_dummy_manifest_rows(1, 3)
    rows[2][1] = 'one'
    with pytest.raises(ParseError) as e:
        parse_manifest(write_manifest(tmp_path / 'm.csv', rows))
    assert e.value.line == 3


def test_empty_field_reports_line(tmp_path):
    rows = create_dummy_manifest_rows(1, 3)
    rows[3][3] = ''
    with pytest.raises(ParseError) as e:
        parse_manifest(write_manifest(tmp_path / 'm.csv', rows))
    assert e.value.line == 4


def test_conflicting_labels(tmp_path):
    rows = create_dummy_manifest_rows(1, 3)
    rows[2][2] = 'nevus'
    with pytest.raises(ParseError) as e:
        parse_manifest(write_manifest(tmp_path / 'm.csv', rows))
    assert e.value.line == 3


def test_malformed_row(tmp_path):
    rows = create_dummy_manifest_rows(1, 3)
    rows[2] = rows[2] + ['extra', 'fields']
    with pytest.raises(ParseError):
        parse_manifest(write_manifest(tmp_path / 'm.csv', rows))


def test_empty_file(tmp_path):
    path = tmp_path / 'm.csv'
    path.write_text('', encoding='utf-8')
    with pytest.raises(ParseError):
        parse_manifest(str(path))


def test_invalid_dataset_lists_every_issue(tmp_path):
    rows = create_dummy_manifest_rows(2, 3)
    rows[2][1] = '5'
    rows[4][2] = 'benign'
    rows[5][2] = 'benign'
    rows[6][2] = 'benign'
    with pytest.raises(DatasetValidationError) as e:
        parse_manifest(write_manifest(tmp_path / 'm.csv', rows))
    assert sorted((issue.kind for issue in e.value.issues), key=str) == \
        sorted([IssueKind.NON_CONTIGUOUS_INDICES, IssueKind.UNKNOWN_LABEL], key=str)


def test_emit_then_parse_keeps_dataset(tmp_path):
    dataset = parse_manifest(write_manifest(tmp_path / 'in.csv', create_dummy_manifest_rows(3, 2)))
    path = emit_manifest(dataset, str(tmp_path / 'out' / 'manifest.csv'), LocalIO(str(tmp_path)))
    assert parse_manifest(path) == dataset
    assert list(manifest_frame(dataset).columns) == ['lesion_id', 'image_index', 'label', 'source', 'body_site']
