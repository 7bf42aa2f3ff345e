"""
Spectrum pre-processing
=======================
Peak alignment onto the integer m/z grid, TIC plateau selection, plateau
averaging, TIC normalization, high-pass thresholds, Savitzky-Golay smoothing
with baseline removal, cohort outlier removal and whole-spectrum merging.
"""

import logging
from dataclasses import dataclass
from typing import List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import find_peaks, savgol_coeffs, savgol_filter

from .errors import (
    EmptyInput,
    EmptySamples,
    IndexOutOfRange,
    InvalidFilterParams,
    MissingRange,
    NoPlateau,
    WindowTooLarge,
)
from .records import (
    MASS_RANGES,
    MERGED_HI,
    MERGED_LO,
    MERGED_RANGE_ID,
    RANGE_IDS,
    AlignedSpectrum,
    RawAcquisition,
)

logger = logging.getLogger(__name__)

PLATEAU_WINDOW = 4
FLAT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class FilterParams:
    """Thresholds and filter settings used by preprocess_range"""
    sg_window: int = 7
    sg_polyorder: int = 3
    sg_deriv: int = 0
    hp1: float = 1e-4
    hp2: float = 1e-3
    plateau_q: float = 0.5
    z_thresh: float = 8.0
    baseline_window: int = 31
    baseline_polyorder: int = 2
    peak_floor: float = 1e-4
    enabled: bool = True

    def __post_init__(self):
        if self.sg_window < 3 or self.sg_window % 2 == 0:
            raise InvalidFilterParams(f"sg_window must be odd and >= 3, got {self.sg_window}")
        if not 0 <= self.sg_polyorder < self.sg_window:
            raise InvalidFilterParams(
                f"sg_polyorder must be in [0, sg_window), got {self.sg_polyorder}"
            )
        if self.sg_deriv < 0:
            raise InvalidFilterParams(f"sg_deriv must be non-negative, got {self.sg_deriv}")
        if not 0 <= self.hp1 < self.hp2:
            raise InvalidFilterParams(f"need 0 <= hp1 < hp2, got hp1={self.hp1} hp2={self.hp2}")
        if not 0.0 <= self.plateau_q <= 1.0:
            raise InvalidFilterParams(f"plateau_q must be a quantile in [0, 1], got {self.plateau_q}")
        if self.z_thresh <= 0:
            raise InvalidFilterParams(f"z_thresh must be positive, got {self.z_thresh}")
        if self.baseline_window:
            if self.baseline_window < 3 or self.baseline_window % 2 == 0:
                raise InvalidFilterParams(
                    f"baseline_window must be 0 or odd and >= 3, got {self.baseline_window}"
                )
            if not 0 <= self.baseline_polyorder < self.baseline_window:
                raise InvalidFilterParams("baseline_polyorder must be below baseline_window")
        if self.peak_floor < 0:
            raise InvalidFilterParams("peak_floor must be non-negative")


@dataclass(frozen=True)
class PlateauSelection:
    """Longest flat TIC run (inclusive bounds) and the 4-acquisition window chosen inside it"""
    plateau_start: int
    plateau_end: int
    chosen_start: int
    epsilon: float

    @property
    def plateau(self) -> Tuple[int, ...]:
        return tuple(range(self.plateau_start, self.plateau_end + 1))

    @property
    def chosen(self) -> Tuple[int, ...]:
        return tuple(range(self.chosen_start, self.chosen_start + PLATEAU_WINDOW))

    @property
    def length(self) -> int:
        return self.plateau_end - self.plateau_start + 1


# --- alignment ----------------------------------------------------------------

def detect_peaks(intensity, floor=1e-4):
    """Indices of strict local maxima whose share of the total signal exceeds ``floor``.

    Flat-topped maxima report their leftmost sample.
    """
    intensity = np.asarray(intensity, dtype=float)
    total = intensity.sum()
    if intensity.size < 3 or total <= 0:
        return np.array([], dtype=int)
    relative = intensity / total
    _, properties = find_peaks(relative, plateau_size=1)
    left_edges = properties["left_edges"]
    return left_edges[relative[left_edges] > floor]


def _peak_anchors(mz, intensity, peaks, lo, hi):
    anchors = np.clip(np.rint(mz[peaks]), lo, hi)
    # two peaks rounding onto the same integer: the more intense one anchors
    order = np.lexsort((-intensity[peaks], anchors))
    _, first = np.unique(anchors[order], return_index=True)
    keep = np.sort(peaks[order][first])
    return mz[keep], np.clip(np.rint(mz[keep]), lo, hi)


def align_peaks(raw: RawAcquisition, peak_floor: float = 1e-4) -> AlignedSpectrum:
    """Move detected peaks to their nearest integer m/z and resample onto the range grid.

    Segments between consecutive anchors are stretched or compressed linearly;
    samples outside the first/last anchor are shifted by that anchor's offset.
    """
    mz = np.asarray(raw.mz, dtype=float)
    intensity = np.asarray(raw.intensity, dtype=float)
    if mz.size == 0:
        raise EmptySamples(f"acquisition {raw.patient_id}/{raw.range_id}/{raw.index} has no samples")
    mass_range = MASS_RANGES[raw.range_id]
    grid = mass_range.grid()

    peaks = detect_peaks(intensity, peak_floor)
    if peaks.size == 0:
        warped = mz
    else:
        peak_mz, anchors = _peak_anchors(mz, intensity, peaks, mass_range.lo, mass_range.hi)
        warped = np.interp(mz, peak_mz, anchors)
        left = mz < peak_mz[0]
        right = mz > peak_mz[-1]
        warped[left] = mz[left] + (anchors[0] - peak_mz[0])
        warped[right] = mz[right] + (anchors[-1] - peak_mz[-1])

    if mz.size == 1:
        values = np.full(grid.shape, intensity[0])
    else:
        values = np.interp(grid, warped, intensity)
    return AlignedSpectrum(raw.range_id, mass_range.lo, mass_range.hi, np.clip(values, 0.0, None))


# --- TIC and plateau ----------------------------------------------------------

def compute_tic(spectra: Sequence[AlignedSpectrum]) -> np.ndarray:
    if len(spectra) == 0:
        raise EmptyInput("no spectra to compute a TIC curve from")
    range_ids = {spectrum.range_id for spectrum in spectra}
    if len(range_ids) > 1:
        raise EmptyInput(f"TIC curve needs spectra of one range, got {sorted(range_ids)}")
    return np.array([spectrum.intensities.sum() for spectrum in spectra])


def _longest_run(flat: np.ndarray) -> Tuple[int, int]:
    best_start, best_length = 0, 0
    start = None
    for i, is_flat in enumerate(np.append(flat, False)):
        if is_flat and start is None:
            start = i
        elif not is_flat and start is not None:
            # equal lengths: the later run wins
            if i - start >= best_length:
                best_start, best_length = start, i - start
            start = None
    return best_start, best_length


def find_plateau(tic, q: float = 0.5) -> PlateauSelection:
    """Locate the longest flat stretch of a TIC curve and its steadiest 4-acquisition window.

    A point is flat when its absolute gradient is (numerically) zero or lies
    strictly below the q-th quantile of all absolute gradients.

    Raises:
        NoPlateau: when no flat run of at least four acquisitions exists
    """
    tic = np.asarray(tic, dtype=float)
    if tic.size < PLATEAU_WINDOW:
        raise NoPlateau(f"TIC curve has {tic.size} acquisitions, need at least {PLATEAU_WINDOW}")

    gradient = np.abs(np.gradient(tic))
    epsilon = float(np.quantile(gradient, q))
    tol = FLAT_TOLERANCE * float(np.abs(tic).max())
    flat = (gradient <= tol) | (gradient < epsilon - tol)

    start, length = _longest_run(flat)
    if length < PLATEAU_WINDOW:
        raise NoPlateau(f"longest flat TIC run has {length} acquisitions (epsilon={epsilon:.4g})")

    stds = sliding_window_view(tic[start:start + length], PLATEAU_WINDOW).std(axis=1)
    offset = int(np.flatnonzero(stds <= stds.min() + tol)[0])
    return PlateauSelection(start, start + length - 1, start + offset, epsilon)


def average_plateau(spectra: Sequence[AlignedSpectrum], selection: PlateauSelection) -> AlignedSpectrum:
    indices = selection.chosen
    if max(indices) >= len(spectra) or min(indices) < 0:
        raise IndexOutOfRange(
            f"plateau window {indices} outside the {len(spectra)} available acquisitions"
        )
    stacked = np.stack([spectra[i].intensities for i in indices])
    return spectra[indices[0]].replace(stacked.mean(axis=0))


# --- cohort outliers ----------------------------------------------------------

def remove_outliers(features: pd.DataFrame, z_thresh: float = 8.0) -> Tuple[List[str], List[str]]:
    """Split the rows of ``features`` (indexed by patient id) into retained and outlier ids.

    A row is an outlier when any feature lies more than ``z_thresh`` population
    standard deviations from the column mean. Columns with zero spread never trigger.
    """
    ids = [str(i) for i in features.index]
    if len(features) < 2:
        return ids, []
    values = features.to_numpy(dtype=float)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    varying = std > 0
    z = np.abs(values[:, varying] - mean[varying]) / std[varying]
    flagged = (z > z_thresh).any(axis=1)
    retained = [pid for pid, bad in zip(ids, flagged) if not bad]
    outliers = [pid for pid, bad in zip(ids, flagged) if bad]
    if outliers:
        logger.info(f"Outlier pass removed {len(outliers)} of {len(ids)} patients: {outliers}")
    return retained, outliers


# --- normalization and filtering ---------------------------------------------

def tic_normalize(spectrum: AlignedSpectrum) -> AlignedSpectrum:
    total = spectrum.intensities.sum()
    if total == 0:
        return spectrum
    return spectrum.replace(spectrum.intensities / total)


def highpass(spectrum: AlignedSpectrum, threshold: float) -> AlignedSpectrum:
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    values = spectrum.intensities.copy()
    values[values < threshold] = 0.0
    return spectrum.replace(values)


def sg_kernel(window: int, polyorder: int, deriv: int = 0) -> np.ndarray:
    """Least-squares Savitzky-Golay weights, ordered to be dotted with a centred window"""
    return savgol_coeffs(window, polyorder, deriv=deriv, use="dot")


def sg_filter(values, window: int, polyorder: int, deriv: int = 0) -> np.ndarray:
    """Savitzky-Golay filter with edge points fitted on truncated windows (no padding)"""
    values = np.asarray(values, dtype=float)
    n = values.size
    if window > n:
        raise WindowTooLarge(f"window {window} exceeds spectrum length {n}")
    out = savgol_filter(values, window, polyorder, deriv=deriv, mode="interp")
    half = window // 2
    for i in range(min(half, n)):
        segment = values[: i + half + 1]
        order = min(polyorder, segment.size - 1)
        out[i] = savgol_coeffs(segment.size, order, deriv=deriv, pos=i, use="dot") @ segment
    for i in range(max(n - half, half), n):
        segment = values[i - half:]
        order = min(polyorder, segment.size - 1)
        out[i] = savgol_coeffs(segment.size, order, deriv=deriv, pos=half, use="dot") @ segment
    return out


def savitzky_golay(spectrum: AlignedSpectrum, params: FilterParams) -> AlignedSpectrum:
    return spectrum.replace(
        sg_filter(spectrum.intensities, params.sg_window, params.sg_polyorder, params.sg_deriv)
    )


def remove_baseline(spectrum: AlignedSpectrum, window: int = 31, polyorder: int = 2) -> AlignedSpectrum:
    """Subtract a wide, low-order Savitzky-Golay fit; ``window`` 0 disables the step."""
    n = spectrum.intensities.size
    if not window:
        return spectrum
    window = min(window, n if n % 2 else n - 1)
    if window <= polyorder:
        return spectrum
    baseline = sg_filter(spectrum.intensities, window, polyorder)
    return spectrum.replace(spectrum.intensities - baseline)


def filter_spectrum(spectrum: AlignedSpectrum, params: FilterParams) -> AlignedSpectrum:
    if not params.enabled:
        return spectrum
    filtered = highpass(spectrum, params.hp1)
    filtered = savitzky_golay(filtered, params)
    filtered = remove_baseline(filtered, params.baseline_window, params.baseline_polyorder)
    return highpass(filtered, params.hp2)


def preprocess_range(acquisitions: Sequence[RawAcquisition], params: FilterParams = FilterParams()) -> AlignedSpectrum:
    """align -> plateau select -> average -> TIC normalize -> filter, for one patient and one range"""
    aligned = [align_peaks(acq, params.peak_floor) for acq in acquisitions]
    selection = find_plateau(compute_tic(aligned), params.plateau_q)
    averaged = tic_normalize(average_plateau(aligned, selection))
    return filter_spectrum(averaged, params)


def merge_ranges(spectra: Mapping[str, AlignedSpectrum]) -> AlignedSpectrum:
    """Join the four range spectra into one 10..351 spectrum and renormalize it.

    At the shared m/z values of adjacent ranges the lower range's value is kept.
    """
    missing = [range_id for range_id in RANGE_IDS if range_id not in spectra]
    if missing:
        raise MissingRange(f"cannot merge without ranges {missing}")
    merged = np.zeros(MERGED_HI - MERGED_LO + 1)
    for range_id in reversed(RANGE_IDS):
        spectrum = spectra[range_id]
        merged[spectrum.lo - MERGED_LO: spectrum.hi - MERGED_LO + 1] = spectrum.intensities
    return tic_normalize(AlignedSpectrum(MERGED_RANGE_ID, MERGED_LO, MERGED_HI, merged))
