"""
Acquisition file and cohort manifest IO
=======================================
Parses the long-format acquisition files (one m/z sample per row), loads
cohorts from ``manifest.json`` and persists feature matrices and other run
objects in versioned joblib containers.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import joblib
import numpy as np
import pandas as pd

from .errors import (
    AcquisitionIndexGap,
    DuplicatePatient,
    IoFailure,
    MalformedRow,
    ManifestError,
    MissingFile,
    MzOutOfRange,
    NegativeIntensity,
    NonMonotonicMz,
    UnknownRange,
    VersionMismatch,
)
from .records import (
    MASS_RANGES,
    MZ_CATCHMENT,
    RANGE_IDS,
    AlignedSpectrum,
    FeatureMatrix,
    Label,
    PatientRecord,
    RawAcquisition,
)

logger = logging.getLogger(__name__)

ACQUISITION_COLUMNS = ["patient_id", "range", "acq_index", "mz", "intensity"]
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
FORMAT_VERSION = 1

PathLike = Union[str, Path]


# --- acquisition files ----------------------------------------------------------

def _to_float(text):
    try:
        return float(text)
    except ValueError:
        return np.nan


def _to_index(text):
    text = text.strip()
    # str.isdigit also accepts superscripts and other digits int() rejects
    if text.isascii() and text.isdigit():
        return int(text)
    return -1


def _first_line(mask, lines):
    return int(lines[np.flatnonzero(np.asarray(mask))[0]])


def _read_rows(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise MissingFile("acquisition file does not exist", path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise MalformedRow("file is empty, expected a header row", path, 1)
    except pd.errors.ParserError as e:
        raise MalformedRow(f"unparseable row: {e}", path)
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read file: {e}", path)

    if list(frame.columns) != ACQUISITION_COLUMNS:
        raise MalformedRow(
            f"expected header {','.join(ACQUISITION_COLUMNS)}, got {','.join(map(str, frame.columns))}",
            path, 1,
        )
    return frame


def parse_acquisition_file(path: PathLike) -> List[RawAcquisition]:
    """Parse one acquisition file into RawAcquisition values.

    Rows of one acquisition must be contiguous with m/z strictly increasing,
    and every (patient, range) must number its acquisitions 0..n-1.

    Returns:
        list of RawAcquisition ordered by (patient_id, range, index)
    """
    path = Path(path)
    frame = _read_rows(path)
    if frame.empty:
        return []
    lines = frame.index.to_numpy() + 2

    stripped = frame.apply(lambda column: column.str.strip())
    missing = stripped.isna().any(axis=1) | (stripped == "").any(axis=1)
    if missing.any():
        raise MalformedRow("row has missing fields", path, _first_line(missing, lines))

    patients = stripped["patient_id"].to_numpy()
    ranges = stripped["range"].to_numpy()
    unknown = ~stripped["range"].isin(list(MASS_RANGES))
    if unknown.any():
        line = _first_line(unknown, lines)
        raise UnknownRange(f"unknown mass range {ranges[np.flatnonzero(unknown)[0]]!r}", path, line)

    indices = stripped["acq_index"].map(_to_index).to_numpy()
    mz = stripped["mz"].map(_to_float).to_numpy(dtype=float)
    intensity = stripped["intensity"].map(_to_float).to_numpy(dtype=float)
    bad_index = indices < 0
    if bad_index.any():
        raise MalformedRow("acq_index must be a non-negative integer", path, _first_line(bad_index, lines))
    not_numeric = ~np.isfinite(mz) | ~np.isfinite(intensity)
    if not_numeric.any():
        raise MalformedRow("mz and intensity must be finite numbers", path, _first_line(not_numeric, lines))
    negative = intensity < 0
    if negative.any():
        raise NegativeIntensity("intensity must be >= 0", path, _first_line(negative, lines))

    lo = np.array([MASS_RANGES[r].lo for r in ranges], dtype=float) - MZ_CATCHMENT
    hi = np.array([MASS_RANGES[r].hi for r in ranges], dtype=float) + MZ_CATCHMENT
    outside = (mz < lo) | (mz > hi)
    if outside.any():
        row = np.flatnonzero(outside)[0]
        raise MzOutOfRange(f"m/z {mz[row]} outside range {ranges[row]}", path, int(lines[row]))

    keys = np.array([f"{p}\x1f{r}\x1f{i}" for p, r, i in zip(patients, ranges, indices)], dtype=object)
    block_start = np.ones(len(keys), dtype=bool)
    block_start[1:] = keys[1:] != keys[:-1]
    block_id = np.cumsum(block_start)
    blocks_per_key = pd.Series(block_id).groupby(keys).nunique()
    split = blocks_per_key[blocks_per_key > 1]
    if not split.empty:
        key = split.index[0]
        patient_id, range_id, index = key.split("\x1f")
        starts = np.flatnonzero(block_start & (keys == key))
        raise MalformedRow(
            f"rows of acquisition {patient_id}/{range_id}/{index} are not contiguous",
            path, int(lines[starts[1]]),
        )

    decreasing = np.zeros(len(mz), dtype=bool)
    decreasing[1:] = (np.diff(mz) <= 0) & ~block_start[1:]
    if decreasing.any():
        raise NonMonotonicMz("m/z must increase strictly within an acquisition", path,
                             _first_line(decreasing, lines))

    bounds = np.append(np.flatnonzero(block_start), len(mz))
    acquisitions = [
        RawAcquisition(
            str(patients[start]), str(ranges[start]), int(indices[start]),
            mz[start:stop].copy(), intensity[start:stop].copy(),
        )
        for start, stop in zip(bounds[:-1], bounds[1:])
    ]
    _check_index_gaps(acquisitions, path)
    return sort_acquisitions(acquisitions)


def sort_acquisitions(acquisitions: Iterable[RawAcquisition]) -> List[RawAcquisition]:
    return sorted(acquisitions, key=lambda a: (a.patient_id, RANGE_IDS.index(a.range_id), a.index))


def _check_index_gaps(acquisitions: Sequence[RawAcquisition], path=None):
    seen: Dict[tuple, List[int]] = {}
    for acq in acquisitions:
        seen.setdefault((acq.patient_id, acq.range_id), []).append(acq.index)
    for (patient_id, range_id), indices in seen.items():
        if sorted(indices) != list(range(len(indices))):
            raise AcquisitionIndexGap(
                f"{patient_id}/{range_id} acquisitions numbered {sorted(indices)}, expected 0..{len(indices) - 1}",
                path,
            )


def write_acquisition_file(acquisitions: Iterable[RawAcquisition], path: PathLike) -> Path:
    """Write acquisitions in the long format; floats are written with round-trip precision"""
    path = Path(path)
    frames = [
        pd.DataFrame({
            "patient_id": acq.patient_id,
            "range": acq.range_id,
            "acq_index": acq.index,
            "mz": acq.mz,
            "intensity": acq.intensity,
        })
        for acq in acquisitions
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=ACQUISITION_COLUMNS)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, columns=ACQUISITION_COLUMNS, lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"cannot write acquisition file: {e}", path)
    return path


def write_spectra_file(spectra: Sequence[tuple], path: PathLike) -> Path:
    """Export (patient_id, AlignedSpectrum) pairs in the acquisition layout, one row per m/z"""
    path = Path(path)
    frames = []
    for patient_id, spectrum in spectra:
        frames.append(pd.DataFrame({
            "patient_id": patient_id,
            "range": spectrum.range_id,
            "acq_index": 0,
            "mz": spectrum.mz,
            "intensity": spectrum.intensities,
        }))
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=ACQUISITION_COLUMNS)
    try:
        frame.to_csv(path, index=False, columns=ACQUISITION_COLUMNS, lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"cannot write spectra file: {e}", path)
    return path


# --- manifests ------------------------------------------------------------------

@dataclass
class ManifestEntry:
    patient_id: str
    label: Label
    files: List[str]


@dataclass
class CohortManifest:
    entries: List[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")
    format_version: int = MANIFEST_VERSION

    def resolve(self, file_name: str) -> Path:
        return (self.root / file_name).resolve() if not Path(file_name).is_absolute() else Path(file_name)


def read_manifest(path: PathLike) -> CohortManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise MissingFile("manifest does not exist", path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"invalid JSON: {e}", path)
    except OSError as e:
        raise IoFailure(f"cannot read manifest: {e}", path)

    if not isinstance(data, dict) or "patients" not in data:
        raise ManifestError("manifest must be an object with a 'patients' list", path)
    version = data.get("format_version")
    if version != MANIFEST_VERSION:
        raise VersionMismatch(f"manifest format_version {version!r}, expected {MANIFEST_VERSION}", path)

    entries = []
    for position, item in enumerate(data["patients"]):
        try:
            files = item["files"]
            if isinstance(files, str) or not all(isinstance(f, str) for f in files):
                raise TypeError("files must be a list of strings")
            entries.append(ManifestEntry(str(item["id"]), Label.parse(item["label"]), list(files)))
        except (KeyError, TypeError, AttributeError) as e:
            raise ManifestError(f"patient entry {position} is invalid: {e}", path)
    return CohortManifest(entries, path.parent, version)


def write_manifest(entries: Sequence[ManifestEntry], path: PathLike) -> Path:
    path = Path(path)
    data = {
        "format_version": MANIFEST_VERSION,
        "patients": [
            {"id": entry.patient_id, "label": entry.label.serialize(), "files": list(entry.files)}
            for entry in entries
        ],
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write manifest: {e}", path)
    return path


def label_counts(records: Sequence[PatientRecord]) -> Dict[str, int]:
    positives = sum(1 for record in records if record.label is Label.POSITIVE)
    return {"positive": positives, "negative": len(records) - positives}


def describe_cohort(records: Sequence[PatientRecord]) -> str:
    counts = label_counts(records)
    return f"{counts['positive']} positive, {counts['negative']} negative"


def load_cohort(manifest: Union[CohortManifest, PathLike]) -> List[PatientRecord]:
    """Build one PatientRecord (status ok) per manifest entry.

    Raises:
        DuplicatePatient: a patient id is listed twice
        MissingFile: a referenced acquisition file does not exist
    """
    if not isinstance(manifest, CohortManifest):
        manifest = read_manifest(manifest)

    seen = set()
    for entry in manifest.entries:
        if entry.patient_id in seen:
            raise DuplicatePatient(f"patient {entry.patient_id} listed more than once")
        seen.add(entry.patient_id)

    parsed: Dict[Path, List[RawAcquisition]] = {}
    records = []
    for entry in manifest.entries:
        acquisitions = []
        for file_name in entry.files:
            file_path = manifest.resolve(file_name)
            if file_path not in parsed:
                if not file_path.exists():
                    raise MissingFile(f"file referenced by patient {entry.patient_id} not found", file_path)
                parsed[file_path] = parse_acquisition_file(file_path)
            acquisitions.extend(a for a in parsed[file_path] if a.patient_id == entry.patient_id)
        if entry.files and not acquisitions:
            raise ManifestError(f"no acquisitions for patient {entry.patient_id} in {entry.files}")
        _check_index_gaps(acquisitions)

        by_range: Dict[str, List[RawAcquisition]] = {}
        for acq in sort_acquisitions(acquisitions):
            by_range.setdefault(acq.range_id, []).append(acq)
        records.append(PatientRecord(entry.patient_id, entry.label, by_range))
        logger.debug(f"{entry.patient_id}: {', '.join(f'{r}={len(a)}' for r, a in by_range.items())}")

    logger.info(f"Loaded cohort of {len(records)} patients: {describe_cohort(records)}")
    return records


# --- versioned containers ---------------------------------------------------------

def save_container(payload: dict, path: PathLike, kind: str) -> Path:
    """joblib-dump ``payload`` tagged with its kind and the container format version"""
    path = Path(path)
    container = {"format_version": FORMAT_VERSION, "kind": kind, "payload": payload}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        joblib.dump(container, path)
    except OSError as e:
        raise IoFailure(f"cannot write {kind}: {e}", path)
    return path


def load_container(path: PathLike, kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"{kind} file does not exist", path)
    try:
        container = joblib.load(path)
    except Exception as e:
        raise IoFailure(f"cannot read {kind}: {e}", path)
    if not isinstance(container, dict) or "format_version" not in container:
        raise VersionMismatch("not a versioned container", path)
    if container["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(
            f"container format_version {container['format_version']!r}, expected {FORMAT_VERSION}", path
        )
    if container.get("kind") != kind:
        raise IoFailure(f"container holds {container.get('kind')!r}, expected {kind!r}", path)
    return container["payload"]


def save_dataset(matrix: FeatureMatrix, path: PathLike) -> Path:
    payload = {
        "values": matrix.values,
        "labels": matrix.labels,
        "origins": list(matrix.origins),
        "combos": list(matrix.combos),
        "feature_index": list(matrix.feature_index),
    }
    return save_container(payload, path, "feature_matrix")


def load_dataset(path: PathLike) -> FeatureMatrix:
    payload = load_container(path, "feature_matrix")
    return FeatureMatrix(
        payload["values"], payload["labels"], payload["origins"], payload["combos"],
        payload["feature_index"],
    )


def export_dataset_csv(matrix: FeatureMatrix, path: PathLike) -> Path:
    path = Path(path)
    try:
        matrix.to_frame().to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"cannot write CSV export: {e}", path)
    return path
