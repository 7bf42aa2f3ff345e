"""
Domain records shared by every stage of the pipeline
====================================================
Mass ranges, raw acquisitions, patient records, aligned spectra and the
feature matrix that flows from augmentation into evaluation.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class MassRange:
    """One instrument sweep setting: nominal m/z bounds, acquisition time and EM voltage"""
    range_id: str
    lo: int
    hi: int
    acquisition_time: float
    em_voltage: float

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def grid(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=float)


MASS_RANGES: Dict[str, MassRange] = {
    "R1": MassRange("R1", 10, 51, 10.0, 1000.0),
    "R2": MassRange("R2", 49, 151, 14.0, 1800.0),
    "R3": MassRange("R3", 149, 251, 14.0, 1800.0),
    "R4": MassRange("R4", 249, 351, 14.0, 1800.0),
}
RANGE_IDS = tuple(MASS_RANGES)

MERGED_RANGE_ID = "merged"
MERGED_LO = 10
MERGED_HI = 351

# accepted distance of a sample m/z from its range's nominal bounds
MZ_CATCHMENT = 0.5


def range_bounds(range_id: str):
    if range_id == MERGED_RANGE_ID:
        return MERGED_LO, MERGED_HI
    mass_range = MASS_RANGES[range_id]
    return mass_range.lo, mass_range.hi


class Label(IntEnum):
    NEGATIVE = 0
    POSITIVE = 1

    @classmethod
    def parse(cls, text: str) -> "Label":
        return cls[str(text).strip().upper()]

    def serialize(self) -> str:
        return self.name.lower()


class Status(str, Enum):
    OK = "ok"
    NO_PLATEAU = "no_plateau"
    OUTLIER = "outlier"


@dataclass(frozen=True, eq=False)
class RawAcquisition:
    """One sweep of one mass range for one patient: (m/z, intensity) samples"""
    patient_id: str
    range_id: str
    index: int
    mz: np.ndarray
    intensity: np.ndarray

    @property
    def mass_range(self) -> MassRange:
        return MASS_RANGES[self.range_id]

    def same_as(self, other: "RawAcquisition") -> bool:
        return (
            self.patient_id == other.patient_id
            and self.range_id == other.range_id
            and self.index == other.index
            and np.array_equal(self.mz, other.mz)
            and np.array_equal(self.intensity, other.intensity)
        )


@dataclass
class PatientRecord:
    patient_id: str
    label: Label
    acquisitions: Dict[str, List[RawAcquisition]] = field(default_factory=dict)
    status: Status = Status.OK

    def mark(self, status: Status) -> None:
        # Ok -> NoPlateau / Outlier only; a discarded record stays discarded
        if self.status is not Status.OK:
            raise ValueError(f"patient {self.patient_id} already discarded as {self.status.value}")
        if status is Status.OK:
            raise ValueError("a record cannot be marked back to ok")
        self.status = status

    def has_ranges(self, range_ids: Sequence[str]) -> bool:
        return all(self.acquisitions.get(range_id) for range_id in range_ids)


@dataclass(frozen=True, eq=False)
class AlignedSpectrum:
    """Intensities on the integer m/z grid lo..hi of one range (or the merged 10..351 grid)"""
    range_id: str
    lo: int
    hi: int
    intensities: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.intensities, dtype=float)
        if values.shape != (self.hi - self.lo + 1,):
            raise ValueError(
                f"{self.range_id} spectrum needs {self.hi - self.lo + 1} values, got {values.shape}"
            )
        object.__setattr__(self, "intensities", values)

    @classmethod
    def for_range(cls, range_id: str, intensities) -> "AlignedSpectrum":
        lo, hi = range_bounds(range_id)
        return cls(range_id, lo, hi, intensities)

    def replace(self, intensities) -> "AlignedSpectrum":
        return AlignedSpectrum(self.range_id, self.lo, self.hi, intensities)

    @property
    def mz(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


@dataclass(eq=False)
class FeatureMatrix:
    """Rows of (pseudo-)patient feature vectors with their provenance"""
    values: np.ndarray
    labels: np.ndarray
    origins: np.ndarray
    combos: np.ndarray
    feature_index: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            self.values = self.values.reshape(len(self.values), len(list(self.feature_index)))
        self.labels = np.asarray(self.labels, dtype=int)
        self.origins = np.asarray(self.origins, dtype=object)
        combos = ["" if combo is None else combo for combo in self.combos]
        self.combos = np.asarray(combos, dtype=object)
        self.feature_index = list(self.feature_index)
        n_rows = self.values.shape[0]
        if not (len(self.labels) == len(self.origins) == len(self.combos) == n_rows):
            raise ValueError("feature matrix columns have different lengths")
        if self.values.shape[1] != len(self.feature_index):
            raise ValueError("feature_index does not match the number of feature columns")
        if n_rows and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be binary (0 negative, 1 positive)")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(
            self.values[rows], self.labels[rows], self.origins[rows], self.combos[rows],
            self.feature_index,
        )

    def rows_of(self, patient_ids, exclude: bool = False) -> "FeatureMatrix":
        mask = np.isin(self.origins, list(patient_ids))
        return self.subset(~mask if exclude else mask)

    def row_ids(self) -> List[str]:
        return [
            f"{origin}-{combo}" if combo else str(origin)
            for origin, combo in zip(self.origins, self.combos)
        ]

    def equals(self, other: "FeatureMatrix") -> bool:
        return (
            np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
            and list(self.origins) == list(other.origins)
            and list(self.combos) == list(other.combos)
            and self.feature_index == other.feature_index
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[str(f) for f in self.feature_index])
        frame.insert(0, "combo", self.combos)
        frame.insert(0, "origin", self.origins)
        frame.insert(0, "label", [Label(int(v)).serialize() for v in self.labels])
        frame.insert(0, "row_id", self.row_ids())
        return frame


def empty_matrix(feature_index: Optional[list] = None) -> FeatureMatrix:
    feature_index = feature_index or []
    return FeatureMatrix(np.zeros((0, len(feature_index))), [], [], [], feature_index)


@dataclass(eq=False)
class ProcessedRange:
    """Outcome of plateau selection and filtering for one patient and one range"""
    range_id: str
    selection: Any
    tic: np.ndarray
    unfiltered: AlignedSpectrum
    averaged: AlignedSpectrum
    retained: List[AlignedSpectrum]
    retained_indices: Tuple[int, ...]


@dataclass(eq=False)
class ProcessedPatient:
    patient_id: str
    label: Label
    ranges: Dict[str, ProcessedRange]


@dataclass(eq=False)
class ProcessedCohort:
    """Retained patients in cohort order plus the log of discarded ones"""
    patients: List[ProcessedPatient]
    discards: List[dict] = field(default_factory=list)
    range_ids: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.patients)

    @property
    def patient_ids(self) -> List[str]:
        return [patient.patient_id for patient in self.patients]

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(patient.label) for patient in self.patients], dtype=int)

    def get(self, patient_id: str) -> ProcessedPatient:
        for patient in self.patients:
            if patient.patient_id == patient_id:
                return patient
        raise KeyError(patient_id)

    def subset(self, patient_ids) -> "ProcessedCohort":
        wanted = set(patient_ids)
        return ProcessedCohort(
            [p for p in self.patients if p.patient_id in wanted], list(self.discards), self.range_ids
        )

    def discard_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.discards, columns=["patient_id", "label", "reason", "detail"])
