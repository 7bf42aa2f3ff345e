import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

import matplotlib

matplotlib.use("Agg")

from dotenv import load_dotenv

from breath_utils import RunConfig, SynthSpec, run_experiment
from breath_utils.config import MODEL_NAMES
from breath_utils.pipeline import load_experiment_records, summarize_reports

experiment_name = "RANGE2"

base_config = RunConfig(ranges=("R2",), pca_components=20, seed=0)
synth_spec = SynthSpec(seed=0, n_patients=120, positive_fraction=0.3, noise=0.1)

# (filtering, scaler, SURF*, acquisition mode) per pipeline variant
variants = {
    "filter_pca_multiple": dict(filtering=True, scaler="standard", surf=False, mode="multiple"),
    "filter_pca_single": dict(filtering=True, scaler="standard", surf=False, mode="single"),
    "nofilter_pca_single": dict(filtering=False, scaler="standard", surf=False, mode="single"),
    "filter_surf_pca_multiple": dict(filtering=True, scaler="standard", surf=True, mode="multiple"),
    "filter_robust_pca_multiple": dict(filtering=True, scaler="robust", surf=False, mode="multiple"),
}


def run_analysis():
    load_dotenv()
    current_dir = os.path.dirname(os.path.abspath(__file__))
    reports = {}
    for variant, changes in variants.items():
        records = load_experiment_records(prefix=experiment_name, spec=synth_spec)
        config = base_config.replace(**changes)
        output_dir = os.path.join(current_dir, "results", variant)
        reports[variant] = run_experiment(records, config, output_dir, f"{experiment_name} {variant}",
                                          plots=True)

    grid = summarize_reports(reports, models=list(MODEL_NAMES) + ["ensemble"])
    grid.to_csv(os.path.join(current_dir, "results", "summary.csv"), index=False, lineterminator="\n")
    print(grid.to_string(index=False))
    return reports, current_dir


def upload_results(current_dir):
    from breath_utils import upload_multiple_runs
    return upload_multiple_runs(os.path.join(current_dir, "results"))
