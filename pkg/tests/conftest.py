import os
import sys

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from breath_utils.config import RunConfig
from breath_utils.records import MASS_RANGES, RawAcquisition
from breath_utils.synth import SynthSpec, generate_cohort

settings.register_profile("fast", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def make_acquisition():
    """Acquisition on a range grid, optionally shifted, with Gaussian peaks at integer m/z"""

    def factory(peaks=((60, 1.0), (91, 2.0), (120, 0.5)), range_id="R2", shift=0.0, patient_id="P001",
                index=0, width=0.35, floor=0.0):
        grid = MASS_RANGES[range_id].grid()
        intensity = np.full(grid.shape, floor)
        for mz, amplitude in peaks:
            intensity += amplitude * np.exp(-((grid - mz) ** 2) / (2 * width ** 2))
        return RawAcquisition(patient_id, range_id, index, grid + shift, intensity)

    return factory


@pytest.fixture(scope="session")
def small_spec():
    return SynthSpec(seed=11, n_patients=24, positive_fraction=0.5, min_acquisitions=10, max_acquisitions=14)


@pytest.fixture
def small_cohort(small_spec):
    # fresh records every test: preprocessing marks discarded records in place
    return generate_cohort(small_spec)


@pytest.fixture
def fast_config():
    return RunConfig(folds=3, pca_components=5, rf_trees=20, gb_rounds=20)
