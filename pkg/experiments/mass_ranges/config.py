import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

import matplotlib

matplotlib.use("Agg")

from dotenv import load_dotenv

from breath_utils import RunConfig, SynthSpec, run_experiment
from breath_utils.pipeline import load_experiment_records, summarize_reports
from breath_utils.records import RANGE_IDS

experiment_name = "MASS_RANGES"

# one run per mass range, raw averaged spectra without filtering, scaling or PCA
base_config = RunConfig(filtering=False, scaler="none", pca_components=0, mode="single", seed=0)
synth_spec = SynthSpec(seed=0, n_patients=120, positive_fraction=0.3, noise=0.1)


def run_analysis():
    load_dotenv()
    current_dir = os.path.dirname(os.path.abspath(__file__))
    reports = {}
    for range_id in RANGE_IDS:
        records = load_experiment_records(prefix=experiment_name, spec=synth_spec)
        config = base_config.replace(ranges=(range_id,))
        output_dir = os.path.join(current_dir, "results", range_id.lower())
        reports[range_id] = run_experiment(records, config, output_dir, f"{experiment_name} {range_id}",
                                           plots=True)

    grid = summarize_reports(reports)
    grid.to_csv(os.path.join(current_dir, "results", "summary.csv"), index=False, lineterminator="\n")
    print(grid.to_string(index=False))
    return reports, current_dir


def upload_results(current_dir):
    from breath_utils import upload_multiple_runs
    return upload_multiple_runs(os.path.join(current_dir, "results"))
