import json

import joblib
import numpy as np
import pandas as pd
import pytest

from breath_utils.errors import (
    AcquisitionIndexGap,
    DuplicatePatient,
    IoFailure,
    MalformedRow,
    ManifestError,
    MissingFile,
    MzOutOfRange,
    NegativeIntensity,
    NonMonotonicMz,
    UnknownRange,
    VersionMismatch,
)
from breath_utils.ingest import (
    export_dataset_csv,
    label_counts,
    load_cohort,
    load_dataset,
    parse_acquisition_file,
    read_manifest,
    save_dataset,
    write_acquisition_file,
)
from breath_utils.records import FeatureMatrix, Label
from breath_utils.synth import SynthSpec, generate_cohort, write_cohort

HEADER = "patient_id,range,acq_index,mz,intensity\n"


def write_rows(tmp_path, rows, header=HEADER, name="acq.csv"):
    path = tmp_path / name
    path.write_text(header + "".join(f"{row}\n" for row in rows))
    return path


def test_round_trip_preserves_every_sample(tmp_path, make_acquisition):
    acquisitions = [
        make_acquisition(shift=0.123456789, index=0),
        make_acquisition(shift=-0.3, index=1),
        make_acquisition(range_id="R1", peaks=((28, 3.0),), index=0),
    ]
    path = write_acquisition_file(acquisitions, tmp_path / "P001.csv")
    parsed = parse_acquisition_file(path)
    assert [(a.range_id, a.index) for a in parsed] == [("R1", 0), ("R2", 0), ("R2", 1)]
    expected = [acquisitions[2], acquisitions[0], acquisitions[1]]
    assert all(a.same_as(b) for a, b in zip(parsed, expected))


def test_header_only_file_has_no_acquisitions(tmp_path):
    assert parse_acquisition_file(write_rows(tmp_path, [])) == []


def test_empty_file_is_malformed(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(MalformedRow) as excinfo:
        parse_acquisition_file(path)
    assert excinfo.value.line == 1


def test_wrong_header(tmp_path):
    path = write_rows(tmp_path, ["P1,R2,0,49.0,1.0"], header="patient,range,index,mz,intensity\n")
    with pytest.raises(MalformedRow) as excinfo:
        parse_acquisition_file(path)
    assert excinfo.value.line == 1


def test_negative_intensity_reports_its_line(tmp_path):
    rows = ["P1,R2,0,49.0,1.0", "P1,R2,0,50.0,2.0", "P1,R2,0,51.0,-0.5"]
    with pytest.raises(NegativeIntensity) as excinfo:
        parse_acquisition_file(write_rows(tmp_path, rows))
    assert excinfo.value.line == 4
    assert ":4:" in str(excinfo.value)


@pytest.mark.parametrize("rows, error", [
    (["P1,R2,0,50.0,1.0", "P1,R2,0,50.0,2.0"], NonMonotonicMz),
    (["P1,R9,0,50.0,1.0"], UnknownRange),
    (["P1,R2,0,200.0,1.0"], MzOutOfRange),
    (["P1,R2,0,50.0,1.0", "P1,R2,2,50.0,1.0"], AcquisitionIndexGap),
    (["P1,R2,0,50.0,1.0", "P1,R2,1,50.0,1.0", "P1,R2,0,51.0,1.0"], MalformedRow),
    (["P1,R2,0,50.0,"], MalformedRow),
    (["P1,R2,0,abc,1.0"], MalformedRow),
    (["P1,R2,-1,50.0,1.0"], MalformedRow),
])
def test_invalid_rows(tmp_path, rows, error):
    with pytest.raises(error):
        parse_acquisition_file(write_rows(tmp_path, rows))


def test_non_ascii_acquisition_index_is_a_malformed_row(tmp_path):
    path = tmp_path / "acq.csv"
    path.write_text(HEADER + "P1,R2,\u00b2,50.0,1.0\n", encoding="utf-8")
    with pytest.raises(MalformedRow) as excinfo:
        parse_acquisition_file(path)
    assert excinfo.value.line == 2


def test_catchment_accepts_half_a_unit_outside_the_range(tmp_path):
    parsed = parse_acquisition_file(write_rows(tmp_path, ["P1,R2,0,48.6,1.0", "P1,R2,0,151.4,1.0"]))
    assert parsed[0].mz.tolist() == [48.6, 151.4]


def test_missing_acquisition_file(tmp_path):
    with pytest.raises(MissingFile):
        parse_acquisition_file(tmp_path / "absent.csv")


def test_synthetic_cohort_survives_a_disk_round_trip(tmp_path):
    cohort = generate_cohort(SynthSpec(seed=5, n_patients=6, positive_fraction=0.5))
    manifest = write_cohort(cohort, tmp_path)
    records = load_cohort(manifest)

    assert [r.patient_id for r in records] == [r.patient_id for r in cohort.records]
    assert [r.label for r in records] == [r.label for r in cohort.records]
    for loaded, generated in zip(records, cohort.records):
        assert set(loaded.acquisitions) == set(generated.acquisitions)
        for range_id, acquisitions in generated.acquisitions.items():
            assert all(a.same_as(b) for a, b in zip(loaded.acquisitions[range_id], acquisitions))


def test_manifest_can_be_given_as_its_directory(tmp_path):
    cohort = generate_cohort(SynthSpec(seed=5, n_patients=3, positive_fraction=0.5))
    write_cohort(cohort, tmp_path)
    manifest = read_manifest(tmp_path)
    assert [e.patient_id for e in manifest.entries] == ["P001", "P002", "P003"]


def test_label_counts_of_a_large_cohort():
    cohort = generate_cohort(SynthSpec(seed=1, n_patients=302, positive_fraction=91 / 302,
                                       min_acquisitions=10, max_acquisitions=10))
    assert label_counts(cohort.records) == {"positive": 91, "negative": 211}


def write_manifest_json(tmp_path, data):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(data))
    return path


def test_duplicate_patient(tmp_path):
    write_rows(tmp_path, ["P1,R2,0,50.0,1.0"])
    entry = {"id": "P1", "label": "positive", "files": ["acq.csv"]}
    path = write_manifest_json(tmp_path, {"format_version": 1, "patients": [entry, entry]})
    with pytest.raises(DuplicatePatient):
        load_cohort(path)


def test_manifest_references_missing_file(tmp_path):
    path = write_manifest_json(tmp_path, {
        "format_version": 1, "patients": [{"id": "P1", "label": "negative", "files": ["nope.csv"]}],
    })
    with pytest.raises(MissingFile):
        load_cohort(path)


def test_manifest_version_is_checked(tmp_path):
    path = write_manifest_json(tmp_path, {"format_version": 2, "patients": []})
    with pytest.raises(VersionMismatch):
        read_manifest(path)


def test_manifest_entry_with_bad_label(tmp_path):
    path = write_manifest_json(tmp_path, {
        "format_version": 1, "patients": [{"id": "P1", "label": "maybe", "files": []}],
    })
    with pytest.raises(ManifestError):
        read_manifest(path)


def test_manifest_patient_absent_from_its_file(tmp_path):
    write_rows(tmp_path, ["P1,R2,0,50.0,1.0"])
    path = write_manifest_json(tmp_path, {
        "format_version": 1, "patients": [{"id": "P2", "label": "negative", "files": ["acq.csv"]}],
    })
    with pytest.raises(ManifestError):
        load_cohort(path)


@pytest.fixture
def matrix():
    return FeatureMatrix(
        np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]), [Label.NEGATIVE, Label.POSITIVE, Label.POSITIVE],
        ["P1", "P2", "P2"], ["", "AB", "BA"], [49, 50],
    )


def test_dataset_container_round_trip(tmp_path, matrix):
    path = save_dataset(matrix, tmp_path / "training.joblib")
    assert load_dataset(path).equals(matrix)


def test_dataset_container_version_mismatch(tmp_path):
    path = tmp_path / "old.joblib"
    joblib.dump({"format_version": 99, "kind": "feature_matrix", "payload": {}}, path)
    with pytest.raises(VersionMismatch):
        load_dataset(path)


def test_dataset_container_of_another_kind(tmp_path):
    path = tmp_path / "model.joblib"
    joblib.dump({"format_version": 1, "kind": "model_bundle", "payload": {}}, path)
    with pytest.raises(IoFailure):
        load_dataset(path)


def test_dataset_csv_export(tmp_path, matrix):
    path = export_dataset_csv(matrix, tmp_path / "training.csv")
    frame = pd.read_csv(path, keep_default_na=False)
    assert list(frame.columns) == ["row_id", "label", "origin", "combo", "49", "50"]
    assert frame["row_id"].tolist() == ["P1", "P2-AB", "P2-BA"]
