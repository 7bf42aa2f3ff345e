import json

import pandas as pd
import pytest

from breath_utils.cli import _run_config, build_parser, main

FAST = ["--folds", "3", "--pca_components", "5", "--rf.trees", "10", "--gb.rounds", "10"]


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort")
    code = main(["gen-synth", "--out", str(out), "--patients", "18", "--seed", "3", "--positive-fraction", "0.5"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def processed_dir(cohort_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("processed")
    assert main(["preprocess", str(cohort_dir / "manifest.json"), "--out", str(out)]) == 0
    return out


def test_gen_synth_layout(cohort_dir):
    assert (cohort_dir / "manifest.json").exists()
    assert (cohort_dir / "truth.json").exists()
    assert len(list((cohort_dir / "acquisitions").glob("*.csv"))) == 18


def test_ingest_summary(cohort_dir, capsys):
    assert main(["ingest", str(cohort_dir / "manifest.json")]) == 0
    assert "18 patients: 9 positive, 9 negative" in capsys.readouterr().out


def test_ingest_of_a_missing_manifest(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "nope.json")]) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["train"],
    ["gen-synth"],
    ["gen-synth", "--out", "x", "--bogus", "1"],
    ["ingest", "manifest.json", "--folds", "3"],
])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_invalid_override_is_a_usage_error(cohort_dir, tmp_path):
    argv = ["preprocess", str(cohort_dir / "manifest.json"), "--out", str(tmp_path), "--sg.window", "8"]
    assert main(argv) == 2


def test_preprocess_outputs(processed_dir):
    for name in ("processed.joblib", "spectra.csv", "tic.csv", "discards.csv"):
        assert (processed_dir / name).exists()


def test_augment_writes_the_training_matrix(processed_dir, tmp_path):
    out = tmp_path / "training.joblib"
    csv = tmp_path / "training.csv"
    argv = ["augment", str(processed_dir / "processed.joblib"), "--out", str(out), "--csv", str(csv),
            "--mode", "multiple"]
    assert main(argv) == 0
    frame = pd.read_csv(csv, keep_default_na=False)
    assert len(frame) == 18 * 4
    assert frame["row_id"].iloc[0] == "P001-A"


def test_evaluate_then_predict(cohort_dir, processed_dir, tmp_path, capsys):
    model = tmp_path / "model.joblib"
    argv = ["evaluate", str(processed_dir / "processed.joblib"), "--out", str(tmp_path / "run"),
            "--model-out", str(model), *FAST]
    assert main(argv) == 0
    assert "Ensemble" in capsys.readouterr().out
    for name in ("report.json", "metrics.csv", "table.txt", "predictions.csv"):
        assert (tmp_path / "run" / name).exists()

    predictions = tmp_path / "predictions.csv"
    assert main(["predict", str(model), str(cohort_dir / "manifest.json"), "--out", str(predictions)]) == 0
    frame = pd.read_csv(predictions)
    assert list(frame.columns) == ["patient_id", "label", "p_positive", "status"]
    assert len(frame) == 18

    assert main(["predict", str(model), str(cohort_dir / "acquisitions" / "P001.csv")]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "patient_id,label,p_positive,status"
    assert out.splitlines()[1].startswith("P001,")


def test_evaluate_writes_identical_files_for_the_same_seed(processed_dir, tmp_path):
    runs = [tmp_path / "first", tmp_path / "second"]
    for run in runs:
        assert main(["evaluate", str(processed_dir / "processed.joblib"), "--out", str(run),
                     "--seed", "0", *FAST]) == 0
    for name in ("report.json", "metrics.csv", "table.txt", "predictions.csv"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()


def test_evaluate_straight_from_a_manifest(cohort_dir, tmp_path):
    argv = ["evaluate", str(cohort_dir / "manifest.json"), "--out", str(tmp_path), "--models", "lr,knn", *FAST]
    assert main(argv) == 0
    assert (tmp_path / "report.json").exists()


def test_more_folds_than_patients_is_a_pipeline_error(processed_dir, tmp_path, capsys):
    argv = ["evaluate", str(processed_dir / "processed.joblib"), "--out", str(tmp_path), "--folds", "30"]
    assert main(argv) == 1
    assert "TooFewPatients" in capsys.readouterr().err


def test_common_flags_reach_the_config():
    args, extra = build_parser().parse_known_args(
        ["preprocess", "m.json", "--out", "o", "--seed", "5", "--no-filter", "--mode", "multiple"]
    )
    config = _run_config(args, extra)
    assert config.seed == 5
    assert not config.filtering
    assert config.mode == "multiple"


def test_ingest_of_a_malformed_index_exits_with_a_usage_error(tmp_path, capsys):
    (tmp_path / "acq.csv").write_text(
        "patient_id,range,acq_index,mz,intensity\nP1,R2,²,50.0,1.0\n", encoding="utf-8"
    )
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"format_version": 1, "patients": [{"id": "P1", "label": "positive", "files": ["acq.csv"]}]}
    ))
    assert main(["ingest", str(tmp_path / "manifest.json")]) == 2
    assert "acq_index" in capsys.readouterr().err


def test_help_names_the_screened_condition(capsys):
    assert "COVID-19" in build_parser().format_help()
