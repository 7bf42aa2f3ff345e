"""
Command-line entry point
========================
``python -m breath_utils <command>`` with the subcommands gen-synth, ingest,
preprocess, augment, evaluate and predict. Options not listed below are read
as config overrides (``--sg.window 9``, ``--mode=multiple``).

Exit codes: 0 success, 1 pipeline error, 2 usage, config or input error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

from dotenv import load_dotenv

from .augment import build_matrices
from .config import load_run_config, overrides_from_args
from .errors import BreathAnalysisError, ConfigError, EmptyCohort, IngestError, InvalidSpec
from .evaluation import cross_validate
from .ingest import (
    describe_cohort,
    export_dataset_csv,
    load_cohort,
    parse_acquisition_file,
    save_dataset,
)
from .pipeline import (
    fit_final_model,
    load_model,
    load_processed,
    predict_records,
    preprocess_cohort,
    save_model,
    write_processed,
    write_report,
)
from .records import Label, PatientRecord
from .synth import SynthSpec, generate_cohort, write_cohort

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigError, InvalidSpec, IngestError, EmptyCohort)


class UsageError(Exception):
    """Raised instead of argparse's own exit so main() controls the exit code"""


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


def _common(parser):
    parser.add_argument("--config", help="key=value run configuration file")
    parser.add_argument("--seed", type=int, help="global seed (overrides the config file)")
    parser.add_argument("--no-filter", action="store_true", help="skip Savitzky-Golay filtering and thresholds")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="breath_utils", description="COVID-19 screening from breath-sample mass spectrometry")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = commands.add_parser("gen-synth", help="write a synthetic cohort with its ground truth")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--patients", type=int, default=SynthSpec.n_patients)
    gen.add_argument("--seed", type=int, default=SynthSpec.seed)
    gen.add_argument("--positive-fraction", type=float, default=SynthSpec.positive_fraction)
    gen.add_argument("--min-acquisitions", type=int, default=SynthSpec.min_acquisitions)
    gen.add_argument("--max-acquisitions", type=int, default=SynthSpec.max_acquisitions)
    gen.add_argument("--noise", type=float, default=SynthSpec.noise)
    gen.add_argument("--baseline-drift", type=float, default=SynthSpec.baseline_drift)
    gen.add_argument("--outlier-rate", type=float, default=SynthSpec.outlier_rate)
    gen.add_argument("--no-plateau-rate", type=float, default=SynthSpec.no_plateau_rate)
    gen.add_argument("--missing-range-rate", type=float, default=SynthSpec.missing_range_rate)
    gen.add_argument("--mz-jitter", type=float, default=SynthSpec.mz_jitter)
    gen.add_argument("--separation", type=float, default=SynthSpec.class_separation)
    gen.add_argument("-v", "--verbose", action="store_true")

    ingest = commands.add_parser("ingest", help="validate a manifest and its acquisition files")
    ingest.add_argument("manifest")
    ingest.add_argument("-v", "--verbose", action="store_true")

    pre = commands.add_parser("preprocess", help="plateau selection, outlier pass and filtering")
    pre.add_argument("manifest")
    pre.add_argument("--out", required=True)
    pre.add_argument("--plots", action="store_true", help="also render PNG charts")
    pre.add_argument("--upload", action="store_true", help="upload the outputs to S3")
    _common(pre)

    aug = commands.add_parser("augment", help="build the training feature matrix")
    aug.add_argument("processed", help="processed.joblib written by preprocess")
    aug.add_argument("--out", required=True, help="dataset container path")
    aug.add_argument("--csv", help="also export the matrix as CSV")
    _common(aug)

    evaluate = commands.add_parser("evaluate", help="patient-grouped cross-validation")
    evaluate.add_argument("source", help="manifest or processed.joblib")
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--model-out", help="also fit the final model on every patient and save it here")
    evaluate.add_argument("--plots", action="store_true")
    evaluate.add_argument("--upload", action="store_true")
    _common(evaluate)

    predict = commands.add_parser("predict", help="score patients with a saved model")
    predict.add_argument("model")
    predict.add_argument("inputs", nargs="+", help="acquisition files or a manifest")
    predict.add_argument("--out", help="CSV path (default: stdout)")
    predict.add_argument("-v", "--verbose", action="store_true")
    return parser


def _run_config(args, extra: List[str]):
    overrides: Dict[str, object] = overrides_from_args(extra)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_filter", False):
        overrides["filtering"] = "off"
    return load_run_config(getattr(args, "config", None), overrides)


def _load_processed_or_manifest(source, config):
    path = Path(source)
    if path.suffix == ".joblib":
        return load_processed(path)
    return preprocess_cohort(load_cohort(path), config)


def cmd_gen_synth(args, extra) -> int:
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    spec = SynthSpec(
        seed=args.seed,
        n_patients=args.patients,
        positive_fraction=args.positive_fraction,
        min_acquisitions=args.min_acquisitions,
        max_acquisitions=args.max_acquisitions,
        noise=args.noise,
        baseline_drift=args.baseline_drift,
        outlier_rate=args.outlier_rate,
        no_plateau_rate=args.no_plateau_rate,
        missing_range_rate=args.missing_range_rate,
        mz_jitter=args.mz_jitter,
        class_separation=args.separation,
    )
    cohort = generate_cohort(spec)
    manifest_path = write_cohort(cohort, args.out)
    print(f"Wrote {len(cohort.records)} patients to {manifest_path}")
    return 0


def cmd_ingest(args, extra) -> int:
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    records = load_cohort(args.manifest)
    print(f"{len(records)} patients: {describe_cohort(records)}")
    return 0


def cmd_preprocess(args, extra) -> int:
    config = _run_config(args, extra)
    cohort = preprocess_cohort(load_cohort(args.manifest), config)
    if len(cohort) == 0:
        raise EmptyCohort("every patient was discarded")
    paths = write_processed(cohort, args.out)
    if args.plots:
        from .plotting import create_spectra_chart, create_tic_chart, setup_plotting

        setup_plotting()
        create_tic_chart(cohort.patients[0], {}, args.out)
        create_spectra_chart(cohort, {}, args.out)
    print(f"Retained {len(cohort)} patients, discarded {len(cohort.discards)}; outputs in {args.out}")
    for name, path in paths.items():
        logger.info(f"{name}: {path}")
    if args.upload:
        from .upload_handler import upload_reports

        upload_reports(args.out)
    return 0


def cmd_augment(args, extra) -> int:
    config = _run_config(args, extra)
    cohort = load_processed(args.processed)
    training, _ = build_matrices(cohort, config.replace(ranges=cohort.range_ids))
    save_dataset(training, args.out)
    if args.csv:
        export_dataset_csv(training, args.csv)
    print(f"Wrote {len(training)} rows x {training.n_features} features to {args.out}")
    return 0


def cmd_evaluate(args, extra) -> int:
    config = _run_config(args, extra)
    cohort = _load_processed_or_manifest(args.source, config)
    if cohort.range_ids and tuple(cohort.range_ids) != tuple(config.ranges):
        config = config.replace(ranges=cohort.range_ids)
    if len(cohort) == 0:
        raise EmptyCohort("every patient was discarded")

    report = cross_validate(cohort, config)
    out = Path(args.out)
    write_report(report, out)
    report.predictions().to_csv(out / "predictions.csv", index=False, lineterminator="\n")
    print(report.format_table())

    if args.plots:
        from .plotting import create_metrics_chart, setup_plotting

        setup_plotting()
        create_metrics_chart(report, {}, out)
    if args.model_out:
        save_model(fit_final_model(cohort, config), args.model_out)
        print(f"Saved final model to {args.model_out}")
    if args.upload:
        from .upload_handler import upload_reports

        upload_reports(out)
    return 0


def _records_from_files(paths) -> List[PatientRecord]:
    by_patient: Dict[str, Dict[str, list]] = {}
    for path in paths:
        for acq in parse_acquisition_file(path):
            by_patient.setdefault(acq.patient_id, {}).setdefault(acq.range_id, []).append(acq)
    # labels are unknown at prediction time and never read
    return [PatientRecord(pid, Label.NEGATIVE, ranges) for pid, ranges in by_patient.items()]


def cmd_predict(args, extra) -> int:
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    bundle = load_model(args.model)
    source = Path(args.inputs[0])
    if len(args.inputs) == 1 and (source.suffix == ".json" or source.is_dir()):
        records = load_cohort(args.inputs[0])
    else:
        records = _records_from_files(args.inputs)
    frame = predict_records(bundle, records)
    if args.out:
        frame.to_csv(args.out, index=False, lineterminator="\n")
    else:
        sys.stdout.write(frame.to_csv(index=False, lineterminator="\n"))
    return 0


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args, extra)
    except (UsageError, *USAGE_ERRORS) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BreathAnalysisError as e:
        print(f"pipeline error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
