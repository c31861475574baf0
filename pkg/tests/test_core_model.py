import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from mveval.core_model import Dataset, ImageRef, IssueKind, Label, LesionRecord, \
    find_dataset_issues, validate_dataset, validate_raster
from mveval.errors import DatasetValidationError, InvalidRaster
from tests.create_dummy_data.dummy_lesions import create_dummy_record, create_dummy_records


def test_valid_dataset():
    dataset = validate_dataset(create_dummy_records(2, 6))
    assert isinstance(dataset, Dataset)
    assert dataset.lesion_ids == ['L00', 'L01']
    assert dataset.images_per_lesion == 6
    assert dataset['L01'].label is Label.NEVUS


def test_empty_series():
    record = LesionRecord('L1', Label.NEVUS, ())
    with pytest.raises(DatasetValidationError) as e:
        validate_dataset([record])
    assert [issue.kind for issue in e.value.issues] == [IssueKind.EMPTY_SERIES]


def test_duplicate_lesion_id():
    records = [create_dummy_record('L1'), create_dummy_record('L1', label=Label.NEVUS)]
    with pytest.raises(DatasetValidationError) as e:
        validate_dataset(records)
    assert [issue.kind for issue in e.value.issues] == [IssueKind.DUPLICATE_LESION_ID]


def test_unknown_label_and_gap_are_both_reported():
    images = (ImageRef('L1', 0), ImageRef('L1', 2))
    record = LesionRecord('L1', Label.parse('benign'), images)
    kinds = sorted(str(issue.kind) for issue in find_dataset_issues([record]))
    assert kinds == ['NonContiguousIndices', 'UnknownLabel']


def test_mismatched_lesion_id():
    record = LesionRecord('L1', Label.MELANOMA, (ImageRef('L1', 0), ImageRef('L2', 1)))
    issues = find_dataset_issues([record])
    assert [issue.kind for issue in issues] == [IssueKind.MISMATCHED_LESION_ID]


def test_validation_is_idempotent():
    dataset = validate_dataset(create_dummy_records(4, 3))
    assert validate_dataset(dataset) is dataset


@given(n_duplicates=st.integers(0, 4), n_empty=st.integers(0, 4), n_unknown=st.integers(0, 4))
def test_issue_count_matches_violations(n_duplicates, n_empty, n_unknown):
    records = [create_dummy_record('D', k=2)] * (n_duplicates + 1)
    records += [LesionRecord(f'E{i}', Label.NEVUS, ()) for i in range(n_empty)]
    records += [create_dummy_record(f'U{i}', k=2, label='unknown') for i in range(n_unknown)]
    assert len(find_dataset_issues(records)) == n_duplicates + n_empty + n_unknown


def test_label_parse():
    assert Label.parse(' Melanoma ') is Label.MELANOMA
    assert Label.parse('nevus') is Label.NEVUS
    assert Label.parse('naevus') == 'naevus'


def test_metadata_is_read_only():
    record = LesionRecord('L1', Label.NEVUS, (ImageRef('L1', 0),), {'site': 'back'})
    with pytest.raises(TypeError):
        record.metadata['site'] = 'arm'  # type: ignore[index]


def test_validate_raster():
    validate_raster(np.zeros((1, 1, 3)))
    with pytest.raises(InvalidRaster):
        validate_raster(np.zeros((4, 4)))
    with pytest.raises(InvalidRaster):
        validate_raster(np.full((2, 2, 3), 1.5))
    with pytest.raises(InvalidRaster):
        validate_raster(np.full((2, 2, 3), np.nan))
