import copy

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from breath_utils.errors import InvalidSpec, NoPlateau
from breath_utils.pipeline import preprocess_cohort
from breath_utils.preprocess import align_peaks, compute_tic, find_plateau
from breath_utils.records import RANGE_IDS, Label
from breath_utils.synth import (
    SynthSpec,
    baseline_only_bins,
    design_tic,
    generate_cohort,
    ground_truth_check,
    load_truth,
    patient_id,
    reference_plateau,
    write_cohort,
)


def test_generation_is_deterministic(small_spec):
    first, second = generate_cohort(small_spec), generate_cohort(small_spec)
    assert first.truth == second.truth
    for a, b in zip(first.records, second.records):
        for range_id in RANGE_IDS:
            assert all(x.same_as(y) for x, y in zip(a.acquisitions[range_id], b.acquisitions[range_id]))


def test_labels_and_ids(small_cohort):
    records = small_cohort.records
    assert [r.patient_id for r in records][:2] == ["P001", "P002"]
    assert sum(r.label is Label.POSITIVE for r in records) == 12
    assert patient_id(1233, 5000) == "P1234"


def test_acquisitions_carry_the_designed_tic(small_cohort):
    record = small_cohort.records[0]
    for range_id, acquisitions in record.acquisitions.items():
        truth = small_cohort.truth["patients"][record.patient_id]["ranges"][range_id]
        assert len(acquisitions) == truth["n_acquisitions"]
        np.testing.assert_allclose([a.intensity.sum() for a in acquisitions], truth["tic"], rtol=1e-12)
        assert [a.index for a in acquisitions] == list(range(len(acquisitions)))
        for acq, shift in zip(acquisitions, truth["shifts"]):
            np.testing.assert_allclose(acq.mz - shift, acq.mass_range.grid())


def test_designed_plateau_is_long_enough():
    rng = np.random.default_rng(0)
    for n in range(10, 21):
        for ramp in (1, 2, 3):
            tic, length = design_tic(rng, n, ramp, 1e5, 0.0)
            assert tic.size == n
            assert 5 <= length <= n - ramp - 1
            selection = find_plateau(tic)
            assert selection.plateau_start == ramp + 1
            assert selection.chosen_start == ramp + 1


@given(st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=4, max_size=16))
def test_plateau_search_agrees_with_brute_force(values):
    expected = reference_plateau(values)
    try:
        selection = find_plateau(values)
    except NoPlateau:
        assert expected is None
        return
    assert expected == {
        "plateau": [selection.plateau_start, selection.plateau_end],
        "chosen": [selection.chosen_start, selection.chosen_start + 3],
    }


def test_truth_plateaus_match_the_search(small_cohort):
    for patient in small_cohort.truth["patients"].values():
        for truth in patient["ranges"].values():
            selection = find_plateau(truth["tic"])
            assert truth["plateau"] == [selection.plateau_start, selection.plateau_end]
            assert truth["chosen"][0] == selection.chosen_start


def test_plateau_search_agrees_with_brute_force_on_many_curves():
    rng = np.random.default_rng(2024)
    for case in range(1000):
        n = int(rng.integers(4, 21))
        if case % 2:
            ramp = int(rng.integers(1, 4))
            tic, _ = design_tic(rng, max(n, 10), ramp, rng.uniform(1e3, 1e5), rng.uniform(0.0, 0.02))
        else:
            tic = rng.uniform(0.1, 10.0, size=n)
        expected = reference_plateau(tic)
        try:
            selection = find_plateau(tic)
        except NoPlateau:
            assert expected is None
            continue
        assert expected == {
            "plateau": [selection.plateau_start, selection.plateau_end],
            "chosen": [selection.chosen_start, selection.chosen_start + 3],
        }


def plateau_recovery(spec, range_id="R2"):
    """Share of patients whose aligned TIC curve yields the designed plateau and window"""
    cohort = generate_cohort(spec)
    matched = 0
    for record in cohort.records:
        expected = cohort.truth["patients"][record.patient_id]["ranges"][range_id]
        aligned = [align_peaks(acq) for acq in record.acquisitions[range_id]]
        selection = find_plateau(compute_tic(aligned))
        matched += (
            [selection.plateau_start, selection.plateau_end] == expected["plateau"]
            and [selection.chosen_start, selection.chosen_start + 3] == expected["chosen"]
        )
    return matched / len(cohort.records)


def test_noiseless_plateaus_are_always_recovered():
    assert plateau_recovery(SynthSpec(seed=4, n_patients=100, noise=0.0)) == 1.0


@pytest.mark.parametrize("range_id", ["R1", "R2"])
def test_plateaus_survive_mild_noise(range_id):
    assert plateau_recovery(SynthSpec(seed=5, n_patients=100, noise=0.05), range_id) >= 0.95


def test_anomalies_are_assigned_by_rate():
    cohort = generate_cohort(SynthSpec(seed=2, n_patients=24, no_plateau_rate=0.25, missing_range_rate=0.125))
    anomalies = [p["anomaly"] for p in cohort.truth["patients"].values()]
    assert anomalies.count("no_plateau") == 6
    assert anomalies.count("missing_range") == 3
    for record in cohort.records:
        missing = cohort.truth["patients"][record.patient_id]["anomaly"] == "missing_range"
        assert ("R4" not in record.acquisitions) == missing


def test_outliers_need_a_large_cohort():
    with pytest.warns(UserWarning, match="outliers"):
        cohort = generate_cohort(SynthSpec(seed=2, n_patients=24, outlier_rate=0.1))
    assert all(p["anomaly"] is None for p in cohort.truth["patients"].values())


def test_outliers_get_distinct_spike_bins():
    cohort = generate_cohort(SynthSpec(seed=4, n_patients=80, outlier_rate=0.05, min_acquisitions=10,
                                       max_acquisitions=10))
    bins = [p["ranges"]["R2"]["outlier_bin"] for p in cohort.truth["patients"].values()
            if p["anomaly"] == "outlier"]
    assert len(bins) == 4
    assert len(set(bins)) == 4
    assert set(bins) <= set(baseline_only_bins("R2"))


@pytest.mark.parametrize("changes", [
    {"n_patients": 0},
    {"positive_fraction": 0.0},
    {"min_acquisitions": 5},
    {"min_acquisitions": 15, "max_acquisitions": 12},
    {"max_ramp": 4},
    {"mz_jitter": 0.5},
    {"noise": -1.0},
    {"outlier_rate": 0.6, "no_plateau_rate": 0.6},
])
def test_invalid_spec(changes):
    with pytest.raises(InvalidSpec):
        SynthSpec(**changes)


def test_cohort_directory_layout(tmp_path, small_cohort):
    manifest = write_cohort(small_cohort, tmp_path)
    assert manifest == tmp_path / "manifest.json"
    assert (tmp_path / "acquisitions" / "P001.csv").exists()
    assert load_truth(tmp_path) == small_cohort.truth


def test_preprocessing_recovers_the_ground_truth(fast_config):
    cohort = generate_cohort(SynthSpec(seed=11, n_patients=24, positive_fraction=0.5, noise=0.02))
    processed = preprocess_cohort(cohort.records, fast_config)
    report = ground_truth_check(processed, cohort.truth, cohort.records)
    assert report.discrepancies == []
    assert report.plateaus_checked == len(cohort.records)
    assert report.plateau_match_rate == 1.0
    assert report.peaks_matched == report.peaks_checked > 0


def test_ground_truth_check_reports_differences(small_cohort, fast_config):
    processed = preprocess_cohort(small_cohort.records, fast_config)
    truth = copy.deepcopy(small_cohort.truth)
    truth["patients"]["P001"]["ranges"]["R2"]["plateau"] = [0, 3]
    truth["patients"]["P002"]["anomaly"] = "no_plateau"
    report = ground_truth_check(processed, truth)
    assert not report.ok
    assert {d["kind"] for d in report.discrepancies} == {"plateau", "discard"}
    assert report.plateau_match_rate < 1.0
