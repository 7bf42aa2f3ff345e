"""
Training-set construction
=========================
One plateau-averaged row per patient, or one row per "artificial patient":
every combination of the retained acquisitions of each range, merged into a
whole spectrum. Test patients are always represented by their averaged spectra.
"""

import itertools
import logging
import string
import warnings
import zlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import CombinationCapReached, EmptyCohort, EmptyRange
from .preprocess import merge_ranges
from .records import (
    MASS_RANGES,
    MERGED_HI,
    MERGED_LO,
    MERGED_RANGE_ID,
    RANGE_IDS,
    AlignedSpectrum,
    FeatureMatrix,
    Label,
    ProcessedCohort,
    ProcessedPatient,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_COMBOS = 10000
_LETTERS = string.ascii_uppercase + string.ascii_lowercase


@dataclass(frozen=True, eq=False)
class PseudoPatient:
    origin: str
    combo: Tuple[int, ...]
    combo_id: str
    spectrum: AlignedSpectrum
    label: Label

    @property
    def row_id(self) -> str:
        return f"{self.origin}-{self.combo_id}"


def combo_letters(positions: Sequence[int]) -> str:
    """``(0, 1, 2, 3)`` -> ``"ABCD"``; letters number a range's retained acquisitions"""
    return "".join(_LETTERS[p] if p < len(_LETTERS) else f"[{p}]" for p in positions)


def feature_index_for(range_ids: Sequence[str]) -> List[int]:
    if len(range_ids) == 1:
        mass_range = MASS_RANGES[range_ids[0]]
        return list(range(mass_range.lo, mass_range.hi + 1))
    return list(range(MERGED_LO, MERGED_HI + 1))


def _check_ranges(range_ids: Sequence[str]) -> Tuple[str, ...]:
    range_ids = tuple(range_ids)
    if len(range_ids) != 1 and range_ids != RANGE_IDS:
        raise ValueError(f"expected one range or all of {RANGE_IDS}, got {range_ids}")
    return range_ids


def _combo_positions(patient: ProcessedPatient, range_ids, max_combos, sample_combos, seed) -> np.ndarray:
    counts = []
    for range_id in range_ids:
        processed = patient.ranges.get(range_id)
        if processed is None or not processed.retained:
            raise EmptyRange(f"patient {patient.patient_id} has no retained acquisitions in {range_id}")
        counts.append(len(processed.retained))
    total = int(np.prod(counts))

    if sample_combos and total > sample_combos:
        rng = np.random.default_rng([seed, zlib.crc32(patient.patient_id.encode("utf-8"))])
        flat = np.sort(rng.choice(total, size=sample_combos, replace=False))
        positions = np.stack(np.unravel_index(flat, counts), axis=1)
    else:
        positions = np.array(list(itertools.product(*(range(n) for n in counts))), dtype=int)

    if len(positions) > max_combos:
        message = (
            f"patient {patient.patient_id} yields {len(positions)} combinations, "
            f"keeping the first {max_combos}"
        )
        warnings.warn(message, CombinationCapReached, stacklevel=3)
        logger.warning(message)
        positions = positions[:max_combos]
    return positions


def _combo_rows(patient: ProcessedPatient, range_ids, positions: np.ndarray) -> np.ndarray:
    if len(range_ids) == 1:
        stacked = np.stack([s.intensities for s in patient.ranges[range_ids[0]].retained])
        return stacked[positions[:, 0]]

    merged = np.zeros((len(positions), MERGED_HI - MERGED_LO + 1))
    # lower ranges are written last so they win on the shared m/z values
    for column in reversed(range(len(range_ids))):
        processed = patient.ranges[range_ids[column]]
        stacked = np.stack([s.intensities for s in processed.retained])
        lo = processed.retained[0].lo - MERGED_LO
        merged[:, lo:lo + stacked.shape[1]] = stacked[positions[:, column]]
    totals = merged.sum(axis=1, keepdims=True)
    nonzero = totals[:, 0] > 0
    merged[nonzero] = merged[nonzero] / totals[nonzero]
    return merged


def _combos_of(patient: ProcessedPatient, range_ids, positions) -> List[Tuple[int, ...]]:
    indices = [patient.ranges[range_id].retained_indices for range_id in range_ids]
    return [tuple(int(indices[c][p]) for c, p in enumerate(row)) for row in positions]


def augment_patient(
    patient: ProcessedPatient,
    range_ids: Sequence[str] = RANGE_IDS,
    max_combos: int = DEFAULT_MAX_COMBOS,
    sample_combos: int = 0,
    seed: int = 0,
) -> List[PseudoPatient]:
    """All pseudo-patients of one patient, in lexicographic combination order.

    ``combo`` holds the acquisition index used from each range; ``combo_id``
    spells the same choice with one letter per range (A = first retained acquisition).

    Raises:
        EmptyRange: a requested range has no retained acquisitions
    """
    range_ids = _check_ranges(range_ids)
    positions = _combo_positions(patient, range_ids, max_combos, sample_combos, seed)
    rows = _combo_rows(patient, range_ids, positions)
    range_id = range_ids[0] if len(range_ids) == 1 else MERGED_RANGE_ID
    return [
        PseudoPatient(
            patient.patient_id, combo, combo_letters(position),
            AlignedSpectrum.for_range(range_id, row), patient.label,
        )
        for combo, position, row in zip(_combos_of(patient, range_ids, positions), positions, rows)
    ]


def test_time_aggregate(patient: ProcessedPatient, range_ids: Sequence[str] = RANGE_IDS) -> np.ndarray:
    """The single feature vector a patient is tested on: its plateau-averaged spectrum"""
    range_ids = _check_ranges(range_ids)
    if len(range_ids) == 1:
        return patient.ranges[range_ids[0]].averaged.intensities.copy()
    return merge_ranges({r: patient.ranges[r].averaged for r in range_ids}).intensities


test_time_aggregate.__test__ = False


def build_test_matrix(cohort: ProcessedCohort, range_ids: Sequence[str] = RANGE_IDS) -> FeatureMatrix:
    range_ids = _check_ranges(range_ids)
    feature_index = feature_index_for(range_ids)
    if len(cohort) == 0:
        raise EmptyCohort("no retained patients to build a matrix from")
    values = np.stack([test_time_aggregate(patient, range_ids) for patient in cohort.patients])
    return FeatureMatrix(
        values, cohort.labels, cohort.patient_ids, [""] * len(cohort), feature_index,
    )


def build_training_matrix(
    cohort: ProcessedCohort,
    range_ids: Sequence[str] = RANGE_IDS,
    mode: str = "single",
    max_combos: int = DEFAULT_MAX_COMBOS,
    sample_combos: int = 0,
    seed: int = 0,
) -> FeatureMatrix:
    """Training rows for ``cohort``: ``single`` averages, ``multiple`` augments.

    Rows keep their origin patient so folds can be grouped by patient.
    """
    if len(cohort) == 0:
        raise EmptyCohort("no retained patients to build a matrix from")
    if mode == "single":
        return build_test_matrix(cohort, range_ids)
    if mode != "multiple":
        raise ValueError(f"mode must be 'single' or 'multiple', got {mode!r}")

    range_ids = _check_ranges(range_ids)
    blocks, labels, origins, combos = [], [], [], []
    for patient in cohort.patients:
        positions = _combo_positions(patient, range_ids, max_combos, sample_combos, seed)
        blocks.append(_combo_rows(patient, range_ids, positions))
        labels.extend([int(patient.label)] * len(positions))
        origins.extend([patient.patient_id] * len(positions))
        combos.extend(combo_letters(position) for position in positions)

    matrix = FeatureMatrix(np.vstack(blocks), labels, origins, combos, feature_index_for(range_ids))
    logger.info(f"Augmented {len(cohort)} patients into {len(matrix)} pseudo-patients")
    return matrix


def build_matrices(cohort: ProcessedCohort, config) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """(training matrix, per-patient test matrix) for a RunConfig"""
    training = build_training_matrix(
        cohort, config.ranges, config.mode, config.max_combos, config.sample_combos, config.seed,
    )
    return training, build_test_matrix(cohort, config.ranges)
