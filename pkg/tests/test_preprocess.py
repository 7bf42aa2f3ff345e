import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from breath_utils.errors import (
    EmptyInput,
    EmptySamples,
    IndexOutOfRange,
    InvalidFilterParams,
    MissingRange,
    NoPlateau,
    WindowTooLarge,
)
from breath_utils.preprocess import (
    FilterParams,
    PlateauSelection,
    _longest_run,
    align_peaks,
    average_plateau,
    compute_tic,
    detect_peaks,
    filter_spectrum,
    find_plateau,
    highpass,
    merge_ranges,
    preprocess_range,
    remove_baseline,
    remove_outliers,
    savitzky_golay,
    sg_filter,
    sg_kernel,
    tic_normalize,
)
from breath_utils.records import AlignedSpectrum, RawAcquisition


# --- alignment ----------------------------------------------------------------

def test_alignment_keeps_an_already_aligned_acquisition(make_acquisition):
    raw = make_acquisition()
    aligned = align_peaks(raw)
    np.testing.assert_allclose(aligned.intensities, raw.intensity, rtol=1e-9, atol=1e-12)


@given(shift=st.floats(min_value=-0.45, max_value=0.45))
def test_alignment_undoes_a_uniform_shift(make_acquisition, shift):
    raw = make_acquisition(shift=shift)
    aligned = align_peaks(raw)
    np.testing.assert_allclose(aligned.intensities, raw.intensity, rtol=1e-9, atol=1e-12)
    assert aligned.intensities.argmax() == 91 - 49


def test_alignment_moves_each_peak_onto_its_integer(make_acquisition):
    # m/z axis stretched around 91: left peak sits 0.3 low, right peak 0.2 high
    raw = make_acquisition()
    mz = raw.mz.copy()
    mz[(mz > 55) & (mz < 65)] -= 0.3
    mz[(mz > 115) & (mz < 125)] += 0.2
    stretched = RawAcquisition(raw.patient_id, raw.range_id, raw.index, mz, raw.intensity)
    aligned = align_peaks(stretched)
    for peak in (60, 91, 120):
        i = peak - 49
        assert aligned.intensities[i] == aligned.intensities[i - 2:i + 3].max()


def test_alignment_without_peaks_resamples_only():
    grid = np.arange(49, 152, dtype=float)
    raw = RawAcquisition("P1", "R2", 0, grid + 0.2, np.full(grid.size, 3.0))
    assert detect_peaks(raw.intensity).size == 0
    np.testing.assert_allclose(align_peaks(raw).intensities, 3.0)


def test_alignment_of_an_empty_acquisition():
    raw = RawAcquisition("P1", "R2", 0, np.array([]), np.array([]))
    with pytest.raises(EmptySamples):
        align_peaks(raw)


def test_peak_floor_ignores_minor_maxima(make_acquisition):
    raw = make_acquisition(peaks=((60, 1.0), (91, 1e-6)))
    assert (detect_peaks(raw.intensity, floor=1e-4) == [11]).all()


# --- TIC and plateau ----------------------------------------------------------

def aligned_constant(value, range_id="R2"):
    return AlignedSpectrum.for_range(range_id, np.full(103, value))


def test_tic_is_the_sum_of_each_spectrum():
    tic = compute_tic([aligned_constant(1.0), aligned_constant(2.0)])
    np.testing.assert_allclose(tic, [103.0, 206.0])


def test_tic_of_nothing():
    with pytest.raises(EmptyInput):
        compute_tic([])


def test_plateau_after_a_ramp():
    tic = [1, 2, 3, 10, 10, 10, 10, 10, 10, 9]
    selection = find_plateau(tic)
    assert (selection.plateau_start, selection.plateau_end) == (4, 8)
    assert selection.chosen == (4, 5, 6, 7)
    assert selection.epsilon == pytest.approx(0.75)


def test_constant_curve_is_one_plateau():
    selection = find_plateau(np.full(10, 5.0))
    assert selection.plateau == tuple(range(10))
    assert selection.chosen_start == 0


def test_steady_ramp_has_no_plateau():
    with pytest.raises(NoPlateau):
        find_plateau(np.arange(10.0))


def test_short_curve_has_no_plateau():
    with pytest.raises(NoPlateau):
        find_plateau([1.0, 1.0, 1.0])


def test_chosen_window_has_the_lowest_spread():
    tic = [1.0, 5.0, 10.0, 10.3, 9.8, 10.1, 10.0, 10.0, 10.0, 10.01, 9.0, 4.0]
    selection = find_plateau(tic)
    assert selection.plateau_start <= selection.chosen_start
    assert selection.chosen_start + 3 <= selection.plateau_end
    window = np.asarray(tic)[list(selection.chosen)]
    others = [np.std(tic[s:s + 4]) for s in range(selection.plateau_start, selection.plateau_end - 2)]
    assert np.std(window) == pytest.approx(min(others))


def test_equal_runs_resolve_to_the_later_one():
    assert _longest_run(np.array([True, True, True, False, True, True, True])) == (4, 3)
    assert _longest_run(np.array([True, True, True, True, False, True, True, True])) == (0, 4)


@st.composite
def designed_curve(draw):
    ramp = draw(st.integers(min_value=1, max_value=3))
    plateau = draw(st.integers(min_value=5, max_value=9))
    tail = draw(st.integers(min_value=plateau - 1, max_value=plateau + 2))
    return ramp, plateau, tail


@given(designed_curve())
def test_designed_curve_recovers_its_plateau(case):
    ramp, plateau, tail = case
    tic = np.concatenate([
        0.2 + 0.5 * np.arange(ramp) / ramp,
        np.ones(plateau),
        1.0 - 0.05 * np.arange(1, tail + 1),
    ])
    selection = find_plateau(tic)
    # the first plateau point still sees the ramp in its central gradient
    assert selection.plateau_start == ramp + 1
    assert selection.plateau_end == ramp + plateau - 1
    assert selection.chosen_start == ramp + 1


def test_average_over_the_chosen_window():
    spectra = [aligned_constant(float(v)) for v in range(10)]
    averaged = average_plateau(spectra, PlateauSelection(2, 7, 3, 0.0))
    np.testing.assert_allclose(averaged.intensities, 4.5)


def test_average_outside_the_acquisitions():
    spectra = [aligned_constant(1.0) for _ in range(10)]
    with pytest.raises(IndexOutOfRange):
        average_plateau(spectra, PlateauSelection(6, 11, 8, 0.0))


# --- outliers -----------------------------------------------------------------

def test_single_spike_in_a_large_cohort_is_an_outlier():
    values = np.where(np.arange(400) % 2 == 0, 1.0, -1.0)
    frame = pd.DataFrame(
        {"f1": np.append(values, 10.0), "f2": np.full(401, 3.0)},
        index=[f"P{i:03d}" for i in range(400)] + ["spike"],
    )
    retained, outliers = remove_outliers(frame, z_thresh=8.0)
    assert outliers == ["spike"]
    assert len(retained) == 400


def test_small_cohorts_cannot_exceed_the_threshold():
    # with n rows no z-score can exceed sqrt(n - 1)
    frame = pd.DataFrame({"f": [0.0] * 9 + [1000.0]}, index=[f"P{i}" for i in range(10)])
    assert remove_outliers(frame, z_thresh=8.0) == (list(frame.index), [])


# --- normalization and filtering ----------------------------------------------

def test_tic_normalize_sums_to_one():
    spectrum = AlignedSpectrum.for_range("R1", np.arange(42.0))
    assert tic_normalize(spectrum).intensities.sum() == pytest.approx(1.0)
    zero = AlignedSpectrum.for_range("R1", np.zeros(42))
    assert tic_normalize(zero).intensities.sum() == 0.0


def test_highpass_zeroes_small_values():
    spectrum = AlignedSpectrum.for_range("R1", np.linspace(0.0, 1e-3, 42))
    assert (highpass(spectrum, 5e-4).intensities[:20] == 0).all()
    with pytest.raises(ValueError):
        highpass(spectrum, -1.0)


def test_sg_kernel_for_window_five_order_two():
    np.testing.assert_allclose(sg_kernel(5, 2), np.array([-3, 12, 17, 12, -3]) / 35, atol=1e-12)


@st.composite
def polynomial_case(draw):
    window = draw(st.sampled_from([5, 7, 9, 11]))
    polyorder = draw(st.integers(min_value=1, max_value=4))
    # truncated edge windows fit at most window // 2 + 1 points
    degree = draw(st.integers(min_value=0, max_value=min(polyorder, window // 2)))
    coefficients = draw(st.lists(st.floats(min_value=-10, max_value=10), min_size=degree + 1,
                                 max_size=degree + 1))
    n = draw(st.integers(min_value=window, max_value=80))
    return window, polyorder, coefficients, n


@given(polynomial_case())
def test_sg_filter_reproduces_low_order_polynomials(case):
    window, polyorder, coefficients, n = case
    x = np.linspace(0.0, 1.0, n)
    values = np.polyval(coefficients, x)
    np.testing.assert_allclose(sg_filter(values, window, polyorder), values, atol=1e-8)


def least_squares_smooth(values, window, polyorder):
    half = window // 2
    n = values.size
    out = np.empty(n)
    for i in range(n):
        lo, hi = i - half, i + half + 1
        if i < half:
            lo, hi = 0, i + half + 1
        elif i >= n - half:
            lo, hi = i - half, n
        x = np.arange(lo, hi) - i
        order = min(polyorder, hi - lo - 1)
        out[i] = np.polyval(np.polyfit(x, values[lo:hi], order), 0.0)
    return out


def test_sg_filter_matches_a_pointwise_least_squares_fit():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        window = int(rng.choice([5, 7, 9, 11]))
        polyorder = int(rng.integers(1, 5))
        values = rng.uniform(0.0, 1.0, size=int(rng.integers(window, 40)))
        np.testing.assert_allclose(sg_filter(values, window, polyorder),
                                   least_squares_smooth(values, window, polyorder), atol=1e-9)


def test_savitzky_golay_keeps_the_range_and_smooth_shapes():
    grid = np.arange(103, dtype=float)
    spectrum = AlignedSpectrum.for_range("R2", 1e-3 + 1e-6 * (grid - 50.0) ** 2)
    smoothed = savitzky_golay(spectrum, FilterParams(sg_window=9, sg_polyorder=2))
    assert smoothed.range_id == "R2"
    np.testing.assert_allclose(smoothed.intensities, spectrum.intensities, atol=1e-10)


def test_sg_window_longer_than_the_spectrum():
    with pytest.raises(WindowTooLarge):
        sg_filter(np.ones(5), 7, 3)


def test_baseline_of_a_linear_drift_is_removed():
    spectrum = AlignedSpectrum.for_range("R2", 0.01 + 0.001 * np.arange(103))
    np.testing.assert_allclose(remove_baseline(spectrum).intensities, 0.0, atol=1e-10)
    assert remove_baseline(spectrum, window=0) is spectrum


def test_invalid_filter_params():
    with pytest.raises(InvalidFilterParams):
        FilterParams(sg_window=8)
    with pytest.raises(InvalidFilterParams):
        FilterParams(hp1=0.01, hp2=0.001)
    with pytest.raises(InvalidFilterParams):
        FilterParams(baseline_window=4)


def test_disabled_filtering_is_the_identity():
    spectrum = aligned_constant(0.5)
    assert filter_spectrum(spectrum, FilterParams(enabled=False)) is spectrum


def test_filtered_spectrum_is_non_negative_and_keeps_the_main_peak(make_acquisition):
    acquisitions = [make_acquisition(index=i, shift=0.1 * (i % 3), floor=0.01) for i in range(8)]
    spectrum = preprocess_range(acquisitions)
    assert spectrum.range_id == "R2"
    assert (spectrum.intensities >= 0).all()
    assert spectrum.intensities.argmax() == 91 - 49


# --- merging ------------------------------------------------------------------

def test_merge_prefers_the_lower_range_on_shared_values():
    spectra = {
        "R1": AlignedSpectrum.for_range("R1", np.full(42, 1.0)),
        "R2": AlignedSpectrum.for_range("R2", np.full(103, 2.0)),
        "R3": AlignedSpectrum.for_range("R3", np.full(103, 3.0)),
        "R4": AlignedSpectrum.for_range("R4", np.full(103, 4.0)),
    }
    merged = merge_ranges(spectra)
    assert merged.intensities.size == 342
    assert merged.intensities.sum() == pytest.approx(1.0)
    values = merged.intensities / merged.intensities[0]
    assert values[50 - 10] == pytest.approx(1.0)
    assert values[52 - 10] == pytest.approx(2.0)
    assert values[151 - 10] == pytest.approx(2.0)
    assert values[251 - 10] == pytest.approx(3.0)
    assert values[351 - 10] == pytest.approx(4.0)


def test_merge_needs_every_range():
    with pytest.raises(MissingRange):
        merge_ranges({"R1": AlignedSpectrum.for_range("R1", np.ones(42))})
