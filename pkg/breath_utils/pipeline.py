"""
Run-level orchestration
=======================
Ties the stages together for the CLI and the experiment scripts: cohort
preprocessing with its discard log, cross-validated experiments with report
files and charts, and the final fitted model used by ``predict``.
"""

import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .augment import build_test_matrix, build_training_matrix
from .errors import EmptyCohort, NoPlateau
from .evaluation import METRICS, EvaluationReport, cross_validate
from .features import build_feature_pipeline
from .ingest import load_cohort, load_container, save_container, write_spectra_file
from .models import ENSEMBLE, ModelBundle, fit_members, oversample_indices
from .preprocess import (
    FilterParams,
    align_peaks,
    average_plateau,
    compute_tic,
    filter_spectrum,
    find_plateau,
    merge_ranges,
    remove_outliers,
    tic_normalize,
)
from .records import (
    PatientRecord,
    ProcessedCohort,
    ProcessedPatient,
    ProcessedRange,
    Status,
)
from .synth import SynthSpec, generate_cohort

logger = logging.getLogger(__name__)

PROCESSED_KIND = "processed_cohort"
MODEL_KIND = "model_bundle"
REPORT_FILES = ("report.json", "metrics.csv", "table.txt")


# --- preprocessing ----------------------------------------------------------------

def process_range(acquisitions, params: FilterParams, retain: str = "window") -> ProcessedRange:
    """Align, select the plateau, average and filter one range of one patient.

    ``retain`` picks the acquisitions kept for augmentation: the chosen
    4-window or the whole plateau. Each retained acquisition is normalized and
    filtered exactly like the average.

    Raises:
        NoPlateau: the range's TIC curve has no usable plateau
    """
    aligned = [align_peaks(acq, params.peak_floor) for acq in acquisitions]
    tic = compute_tic(aligned)
    selection = find_plateau(tic, params.plateau_q)
    unfiltered = tic_normalize(average_plateau(aligned, selection))
    indices = selection.chosen if retain == "window" else selection.plateau
    retained = [filter_spectrum(tic_normalize(aligned[i]), params) for i in indices]
    return ProcessedRange(
        range_id=aligned[0].range_id,
        selection=selection,
        tic=tic,
        unfiltered=unfiltered,
        averaged=filter_spectrum(unfiltered, params),
        retained=retained,
        retained_indices=tuple(acquisitions[i].index for i in indices),
    )


def _plateau_stage(record: PatientRecord, range_ids, params, retain):
    ranges = {}
    for range_id in range_ids:
        try:
            ranges[range_id] = process_range(record.acquisitions[range_id], params, retain)
        except NoPlateau as e:
            return None, f"{range_id}: {e}"
    return ProcessedPatient(record.patient_id, record.label, ranges), None


def _discard(record: PatientRecord, reason: str, detail: str) -> dict:
    logger.debug(f"Discarding {record.patient_id} ({reason}): {detail}")
    return {"patient_id": record.patient_id, "label": record.label.serialize(), "reason": reason,
            "detail": detail}


def preprocess_cohort(records: Sequence[PatientRecord], config) -> ProcessedCohort:
    """Plateau stage, cohort outlier pass and filtering for the configured ranges.

    Records whose plateau cannot be found are marked ``no_plateau``; records
    flagged by the outlier pass are marked ``outlier``. Both are logged in the
    cohort's discards, as are patients lacking one of the configured ranges.
    Records discarded by an earlier call stay discarded.
    """
    params = config.filter_params()
    range_ids = tuple(config.ranges)
    discards, candidates = [], []
    for record in records:
        if record.status is not Status.OK:
            discards.append(_discard(record, record.status.value, "discarded by an earlier run"))
        elif not record.has_ranges(range_ids):
            missing = [r for r in range_ids if not record.acquisitions.get(r)]
            discards.append(_discard(record, "missing_range", f"no acquisitions for {','.join(missing)}"))
        else:
            candidates.append(record)

    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_plateau_stage)(record, range_ids, params, config.retain) for record in candidates
    )
    survivors = []
    for record, (patient, failure) in zip(candidates, results):
        if patient is None:
            record.mark(Status.NO_PLATEAU)
            discards.append(_discard(record, Status.NO_PLATEAU.value, failure))
        else:
            survivors.append((record, patient))

    if survivors:
        features = pd.DataFrame(
            [np.concatenate([p.ranges[r].unfiltered.intensities for r in range_ids]) for _, p in survivors],
            index=[p.patient_id for _, p in survivors],
        )
        _, outliers = remove_outliers(features, params.z_thresh)
        flagged = set(outliers)
        kept = []
        for record, patient in survivors:
            if patient.patient_id in flagged:
                record.mark(Status.OUTLIER)
                discards.append(_discard(record, Status.OUTLIER.value, f"a feature exceeds z={params.z_thresh}"))
            else:
                kept.append(patient)
    else:
        kept = []

    order = {record.patient_id: i for i, record in enumerate(records)}
    discards.sort(key=lambda d: order[d["patient_id"]])
    cohort = ProcessedCohort(kept, discards, range_ids)
    logger.info(
        f"Preprocessed {len(records)} patients on {','.join(range_ids)}: "
        f"{len(kept)} retained, {len(discards)} discarded"
    )
    return cohort


def save_processed(cohort: ProcessedCohort, path) -> Path:
    return save_container({"cohort": cohort}, path, PROCESSED_KIND)


def load_processed(path) -> ProcessedCohort:
    return load_container(path, PROCESSED_KIND)["cohort"]


def patient_spectra(cohort: ProcessedCohort) -> List[Tuple[str, object]]:
    """(patient_id, spectrum) per retained patient; merged over all ranges for whole-spectrum runs"""
    spectra = []
    for patient in cohort.patients:
        if len(cohort.range_ids) == 1:
            spectra.append((patient.patient_id, patient.ranges[cohort.range_ids[0]].averaged))
        else:
            spectra.append((patient.patient_id, merge_ranges({r: p.averaged for r, p in patient.ranges.items()})))
    return spectra


def tic_frame(cohort: ProcessedCohort) -> pd.DataFrame:
    """Long table of TIC curves with plateau and chosen-window flags, for external plotting"""
    rows = []
    for patient in cohort.patients:
        for range_id, processed in patient.ranges.items():
            selection = processed.selection
            for i, value in enumerate(processed.tic):
                rows.append({
                    "patient_id": patient.patient_id,
                    "range": range_id,
                    "acq_index": i,
                    "tic": value,
                    "plateau": selection.plateau_start <= i <= selection.plateau_end,
                    "chosen": i in selection.chosen,
                })
    return pd.DataFrame(rows, columns=["patient_id", "range", "acq_index", "tic", "plateau", "chosen"])


def write_processed(cohort: ProcessedCohort, output_dir) -> Dict[str, Path]:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "processed": save_processed(cohort, output_dir / "processed.joblib"),
        "spectra": write_spectra_file(patient_spectra(cohort), output_dir / "spectra.csv"),
        "tic": output_dir / "tic.csv",
        "discards": output_dir / "discards.csv",
    }
    tic_frame(cohort).to_csv(paths["tic"], index=False, lineterminator="\n")
    cohort.discard_frame().to_csv(paths["discards"], index=False, lineterminator="\n")
    return paths


# --- experiments ------------------------------------------------------------------

def write_report(report: EvaluationReport, output_dir) -> List[Path]:
    """``report.json`` (config snapshot, folds, aggregate), ``metrics.csv`` and ``table.txt``"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    json_path, csv_path, table_path = (output_dir / name for name in REPORT_FILES)
    json_path.write_text(report.to_json(), encoding="utf-8")
    report.to_frame().to_csv(csv_path, index=False, lineterminator="\n", float_format="%.10g")
    table_path.write_text(report.format_table(), encoding="utf-8")
    return [json_path, csv_path, table_path]


def print_detailed_summary(report: EvaluationReport, cohort: ProcessedCohort, name: str):
    print(f"\n{'='*60}")
    print(f"RESULTS FOR {name}")
    print(f"{'='*60}")
    print(f"Patients retained: {report.n_patients} ({report.n_positive} positive, "
          f"{report.n_patients - report.n_positive} negative)")
    print(f"Patients discarded: {len(cohort.discards)}")
    print(f"Training rows: {report.n_training_rows}")
    failed = [r for r in report.folds if not r.ok]
    if failed:
        print(f"Failed folds: {len(failed)}")
    print()
    print(report.format_table())
    print(f"Ensemble balanced accuracy: {report.mean(ENSEMBLE, 'balanced_accuracy'):.3f} "
          f"± {report.std(ENSEMBLE, 'balanced_accuracy'):.3f}")


def run_experiment(records: Sequence[PatientRecord], config, output_dir=None, name: str = "experiment",
                   plots: bool = False) -> EvaluationReport:
    """Preprocess ``records``, cross-validate, write the report files and optional charts"""
    print(f"\n{'='*60}")
    print(f"RUNNING EXPERIMENT {name}")
    print(f"{'='*60}")

    cohort = preprocess_cohort(records, config)
    if len(cohort) == 0:
        raise EmptyCohort(f"experiment {name}: every patient was discarded")
    report = cross_validate(cohort, config)

    if output_dir is not None:
        output_dir = Path(output_dir)
        write_report(report, output_dir)
        cohort.discard_frame().to_csv(output_dir / "discards.csv", index=False, lineterminator="\n")
        report.predictions().to_csv(output_dir / "predictions.csv", index=False, lineterminator="\n")
        if plots:
            _experiment_charts(cohort, report, name, output_dir)

    print_detailed_summary(report, cohort, name)
    return report


def _experiment_charts(cohort, report, name, output_dir):
    from .plotting import create_metrics_chart, create_spectra_chart, create_tic_chart, setup_plotting

    setup_plotting()
    slug = name.lower().replace(" ", "_")
    generators = {
        "tic": lambda: create_tic_chart(cohort.patients[0], {"title": name, "filename": f"{slug}_tic.png"},
                                        output_dir),
        "spectra": lambda: create_spectra_chart(cohort, {"title": name, "filename": f"{slug}_spectra.png"},
                                                output_dir),
        "metrics": lambda: create_metrics_chart(report, {"title": name, "filename": f"{slug}_metrics.png"},
                                                output_dir),
    }
    for chart_name, generate in generators.items():
        try:
            print(f"Generating {chart_name} chart...")
            generate()
        except Exception as e:
            logger.warning(f"Could not generate {chart_name} chart: {e}")


def summarize_reports(reports: Dict[str, EvaluationReport], models: Sequence[str] = ("rf", ENSEMBLE)) -> pd.DataFrame:
    """One row per (experiment, model) with mean ± std cells, for grids of experiments"""
    rows = []
    for experiment, report in reports.items():
        for model in models:
            if model not in report.summary().index:
                continue
            row = {"experiment": experiment, "model": model}
            for metric in METRICS:
                row[metric] = f"{report.mean(model, metric):.2f} ± {report.std(model, metric):.2f}"
            rows.append(row)
    return pd.DataFrame(rows, columns=["experiment", "model", *METRICS])


# --- final model and prediction ---------------------------------------------------

def fit_final_model(cohort: ProcessedCohort, config) -> ModelBundle:
    """Fit the feature pipeline and every member on the whole cohort"""
    if len(cohort) == 0:
        raise EmptyCohort("no retained patients to fit a model on")
    training = build_training_matrix(
        cohort, config.ranges, config.mode, config.max_combos, config.sample_combos, config.seed,
    )
    pipeline = build_feature_pipeline(config, config.seed)
    X = pipeline.fit_transform(training.values, training.labels)
    balanced = oversample_indices(training.labels, config.seed)
    members = fit_members(X[balanced], training.labels[balanced], config)
    logger.info(f"Fitted {len(members)} members on {len(training)} rows from {len(cohort)} patients")
    return ModelBundle(config, pipeline, members, list(training.feature_index), cohort.patient_ids)


def save_model(bundle: ModelBundle, path) -> Path:
    return save_container({"bundle": bundle}, path, MODEL_KIND)


def load_model(path) -> ModelBundle:
    return load_container(path, MODEL_KIND)["bundle"]


def predict_records(bundle: ModelBundle, records: Sequence[PatientRecord]) -> pd.DataFrame:
    """Label and positive probability per patient, using the bundle's frozen preprocessing.

    Patients without a usable plateau or lacking a range get an empty label and
    their status instead of a prediction. No cohort outlier pass is applied.
    """
    config = bundle.config
    params = config.filter_params()
    range_ids = tuple(config.ranges)
    statuses: Dict[str, str] = {}
    patients = []
    for record in records:
        if not record.has_ranges(range_ids):
            statuses[record.patient_id] = "missing_range"
            continue
        patient, failure = _plateau_stage(record, range_ids, params, config.retain)
        if patient is None:
            statuses[record.patient_id] = Status.NO_PLATEAU.value
            logger.warning(f"No prediction for {record.patient_id}: {failure}")
            continue
        statuses[record.patient_id] = Status.OK.value
        patients.append(patient)

    predicted = pd.DataFrame(columns=["patient_id", "label", "p_positive"])
    if patients:
        matrix = build_test_matrix(ProcessedCohort(patients, [], range_ids), range_ids)
        predicted = bundle.predict(matrix)
    frame = pd.DataFrame({"patient_id": [r.patient_id for r in records]})
    frame = frame.merge(predicted, on="patient_id", how="left")
    frame["label"] = frame["label"].fillna("")
    frame["status"] = frame["patient_id"].map(statuses)
    return frame[["patient_id", "label", "p_positive", "status"]]


def load_experiment_records(prefix: Optional[str] = None, spec=None) -> List[PatientRecord]:
    """Records from the manifest named by ``<PREFIX>_MANIFEST``, or a synthetic cohort when unset.

    Every call returns fresh records, so discards of one experiment never leak into the next.
    """
    env_var_name = f"{prefix}_MANIFEST" if prefix else "MANIFEST"
    manifest = os.getenv(env_var_name)
    if manifest:
        print(f"Loading cohort from manifest ({env_var_name}): {manifest}")
        return load_cohort(manifest)

    spec = spec or SynthSpec()
    print(f"{env_var_name} not set, generating a synthetic cohort of {spec.n_patients} patients (seed {spec.seed})")
    return generate_cohort(spec).records
