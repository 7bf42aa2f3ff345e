"""
Shared utilities for COVID-19 screening from breath-sample mass spectrometry
"""

from .augment import (
    augment_patient,
    build_matrices,
    build_test_matrix,
    build_training_matrix,
    test_time_aggregate,
)
from .config import RunConfig, load_run_config
from .errors import BreathAnalysisError
from .evaluation import (
    EvaluationReport,
    compute_metrics,
    cross_validate,
    leakage_audit,
    plan_folds,
)
from .features import (
    build_feature_pipeline,
    fit_pca,
    fit_scaler,
    fit_surf_star,
    prune_zero_variance,
)
from .ingest import (
    load_cohort,
    load_dataset,
    parse_acquisition_file,
    read_manifest,
    save_dataset,
)
from .models import (
    ModelBundle,
    SoftVotingEnsemble,
    fit_classifier,
    oversample_minority,
    soft_vote,
)
from .pipeline import (
    fit_final_model,
    predict_records,
    preprocess_cohort,
    run_experiment,
    write_report,
)
from .plotting import (
    setup_plotting,
    create_tic_chart,
    create_alignment_chart,
    create_spectra_chart,
    create_metrics_chart,
)
from .preprocess import (
    align_peaks,
    average_plateau,
    compute_tic,
    filter_spectrum,
    find_plateau,
    merge_ranges,
    preprocess_range,
    remove_outliers,
    savitzky_golay,
)
from .s3_uploader import (
    upload_run_artifacts,
    upload_multiple_runs
)
from .synth import SynthSpec, generate_cohort, ground_truth_check, write_cohort
from .upload_handler import (
    describe_run_directory,
    upload_reports
)

__all__ = [
    'RunConfig',
    'load_run_config',
    'BreathAnalysisError',
    # ingest
    'parse_acquisition_file',
    'read_manifest',
    'load_cohort',
    'save_dataset',
    'load_dataset',
    # preprocess
    'align_peaks',
    'compute_tic',
    'find_plateau',
    'average_plateau',
    'remove_outliers',
    'savitzky_golay',
    'filter_spectrum',
    'preprocess_range',
    'merge_ranges',
    # augment
    'augment_patient',
    'test_time_aggregate',
    'build_test_matrix',
    'build_training_matrix',
    'build_matrices',
    # features
    'prune_zero_variance',
    'fit_scaler',
    'fit_surf_star',
    'fit_pca',
    'build_feature_pipeline',
    # models
    'fit_classifier',
    'oversample_minority',
    'soft_vote',
    'SoftVotingEnsemble',
    'ModelBundle',
    # evaluation
    'plan_folds',
    'leakage_audit',
    'compute_metrics',
    'cross_validate',
    'EvaluationReport',
    # synthetic cohorts
    'SynthSpec',
    'generate_cohort',
    'write_cohort',
    'ground_truth_check',
    # runs
    'preprocess_cohort',
    'run_experiment',
    'write_report',
    'fit_final_model',
    'predict_records',
    'setup_plotting',
    'create_tic_chart',
    'create_alignment_chart',
    'create_spectra_chart',
    'create_metrics_chart',
    'upload_run_artifacts',
    'upload_multiple_runs',
    'describe_run_directory',
    'upload_reports',
]
