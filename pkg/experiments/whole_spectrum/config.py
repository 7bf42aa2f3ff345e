import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

import matplotlib

matplotlib.use("Agg")

from dotenv import load_dotenv

from breath_utils import RunConfig, SynthSpec, create_alignment_chart, run_experiment, setup_plotting
from breath_utils.pipeline import load_experiment_records
from breath_utils.records import RANGE_IDS

experiment_name = "WHOLE_SPECTRUM"

# augmentation, filtering, robust scaling and PCA over all four ranges
config = RunConfig(
    ranges=RANGE_IDS,
    filtering=True,
    scaler="robust",
    pca_components=20,
    mode="multiple",
    sample_combos=64,
    seed=0,
)
synth_spec = SynthSpec(seed=0, n_patients=120, positive_fraction=0.3, noise=0.1, missing_range_rate=0.05)


def run_analysis():
    load_dotenv()
    current_dir = os.path.dirname(os.path.abspath(__file__))
    output_dir = os.path.join(current_dir, "results")
    os.makedirs(output_dir, exist_ok=True)

    records = load_experiment_records(prefix=experiment_name, spec=synth_spec)
    setup_plotting()
    first = records[0].acquisitions["R2"][0]
    create_alignment_chart(first, {"peak_floor": config.peak_floor}, output_dir)

    report = run_experiment(records, config, output_dir, experiment_name, plots=True)
    return report, output_dir


def upload_results(output_dir):
    from breath_utils import upload_reports
    return upload_reports(output_dir, experiment_name.lower())
