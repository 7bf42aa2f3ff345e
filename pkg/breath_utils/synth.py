"""
Synthetic breath-sample cohorts
===============================
Deterministic generator of patients whose acquisitions follow a designed TIC
course (ramp, plateau, decline) and whose range-2 spectra carry the class
signal. It writes the same manifest and acquisition files the ingest module
reads, plus a ``truth.json`` sidecar used to check every preprocessing stage.
"""

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InvalidSpec
from .ingest import ManifestEntry, write_acquisition_file, write_manifest
from .preprocess import align_peaks
from .records import MASS_RANGES, RANGE_IDS, Label, PatientRecord, ProcessedCohort, RawAcquisition

logger = logging.getLogger(__name__)

TRUTH_VERSION = 1
PEAK_WIDTH = 0.35
TIC_LEVEL = 1e5
NOISE_UNIT = 0.1
OUTLIER_MIN_PATIENTS = 80
OUTLIER_SPIKE = 20.0
MIN_PLATEAU = 5

# (m/z, relative amplitude); range 1 is recorded at a lower EM gain
RANGE1_PEAKS = [(14, 0.5), (16, 0.4), (18, 0.6), (28, 8.0), (32, 3.0), (40, 0.3), (44, 2.0)]
RANGE1_GAIN = 0.25
COMMON_PEAKS = [(53, 1.0), (57, 0.8), (67, 0.7), (71, 0.9), (81, 0.6), (91, 1.0), (105, 0.7),
                (119, 0.5), (133, 0.6), (147, 0.4)]
CLASS_PEAKS = [(61, 0.6), (75, 0.5), (87, 0.6), (99, 0.5), (111, 0.6), (127, 0.5)]
RANGE3_PEAKS = [(155, 0.3), (171, 0.25), (185, 0.3), (199, 0.2), (213, 0.25), (229, 0.2), (243, 0.2)]
RANGE4_PEAKS = [(257, 0.2), (281, 0.15), (301, 0.2), (327, 0.15), (341, 0.1)]


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_patients: int = 100
    positive_fraction: float = 0.3
    min_acquisitions: int = 10
    max_acquisitions: int = 20
    noise: float = 0.1
    baseline_drift: float = 0.05
    min_ramp: int = 1
    max_ramp: int = 3
    outlier_rate: float = 0.0
    no_plateau_rate: float = 0.0
    missing_range_rate: float = 0.0
    mz_jitter: float = 0.4
    class_separation: float = 1.0

    def __post_init__(self):
        if self.n_patients < 1:
            raise InvalidSpec(f"n_patients must be positive, got {self.n_patients}")
        if not 0.0 < self.positive_fraction < 1.0:
            raise InvalidSpec(f"positive_fraction must be in (0, 1), got {self.positive_fraction}")
        if not 10 <= self.min_acquisitions <= self.max_acquisitions:
            raise InvalidSpec("need 10 <= min_acquisitions <= max_acquisitions")
        if not 1 <= self.min_ramp <= self.max_ramp <= 3:
            raise InvalidSpec("ramp length must lie in 1..3")
        if self.noise < 0 or self.baseline_drift < 0 or self.class_separation < 0:
            raise InvalidSpec("noise, baseline_drift and class_separation must be non-negative")
        if not 0.0 <= self.mz_jitter < 0.5:
            raise InvalidSpec(f"mz_jitter must be in [0, 0.5), got {self.mz_jitter}")
        rates = (self.outlier_rate, self.no_plateau_rate, self.missing_range_rate)
        if any(not 0.0 <= rate <= 1.0 for rate in rates) or sum(rates) > 1.0:
            raise InvalidSpec("anomaly rates must lie in [0, 1] and sum to at most 1")


@dataclass
class SyntheticCohort:
    spec: SynthSpec
    records: List[PatientRecord]
    truth: dict = field(default_factory=dict)


def patient_id(position: int, n_patients: int) -> str:
    return f"P{position + 1:0{max(3, len(str(n_patients)))}d}"


def range_peaks(range_id: str, label: Label, separation: float) -> List[tuple]:
    if range_id == "R1":
        return [(mz, amp * RANGE1_GAIN) for mz, amp in RANGE1_PEAKS]
    if range_id == "R2":
        boost = 1.0 + 0.5 * separation if label is Label.POSITIVE else 1.0
        return COMMON_PEAKS + [(mz, amp * boost) for mz, amp in CLASS_PEAKS]
    if range_id == "R3":
        return list(RANGE3_PEAKS)
    return list(RANGE4_PEAKS)


def baseline_only_bins(range_id: str = "R2", clearance: int = 4) -> List[int]:
    """Grid positions at least ``clearance`` away from every peak of the range"""
    mass_range = MASS_RANGES[range_id]
    peaks = [mz for mz, _ in range_peaks(range_id, Label.POSITIVE, 1.0)]
    return [
        mz for mz in range(mass_range.lo + clearance, mass_range.hi - clearance + 1)
        if all(abs(mz - p) >= clearance for p in peaks)
    ]


def design_tic(rng: np.random.Generator, n: int, ramp: int, level: float, jitter: float):
    """Ramp -> plateau -> linear decline; returns (tic values, plateau length)"""
    longest = min((n + 2) // 2, n - ramp - 1)
    plateau = int(rng.integers(MIN_PLATEAU, longest + 1))
    tail = n - ramp - plateau
    ramp_values = level * (0.2 + 0.5 * np.arange(ramp) / ramp)
    plateau_values = level * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=plateau))
    tail_values = level * (1.0 - 0.05 * np.arange(1, tail + 1))
    return np.concatenate([ramp_values, plateau_values, tail_values]), plateau


def rising_tic(n: int, level: float) -> np.ndarray:
    return level * (0.3 + 0.7 * np.arange(n) / (n - 1))


def reference_plateau(tic, q: float = 0.5) -> Optional[dict]:
    """Brute-force plateau oracle: longest all-flat interval (later wins ties), then the
    earliest 4-window of minimal standard deviation inside it."""
    tic = np.asarray(tic, dtype=float)
    n = tic.size
    if n < 4:
        return None
    gradient = np.abs(np.gradient(tic))
    epsilon = np.quantile(gradient, q)
    tol = 1e-9 * np.abs(tic).max()
    flat = [g <= tol or g < epsilon - tol for g in gradient]

    best = None
    for start in range(n):
        for end in range(start, n):
            if all(flat[start:end + 1]):
                if best is None or end - start >= best[1] - best[0]:
                    best = (start, end)
    if best is None or best[1] - best[0] + 1 < 4:
        return None

    stds = [np.std(tic[s:s + 4]) for s in range(best[0], best[1] - 2)]
    lowest = min(stds)
    chosen = best[0] + next(i for i, s in enumerate(stds) if s <= lowest + tol)
    return {"plateau": [best[0], best[1]], "chosen": [chosen, chosen + 3]}


def _template(rng, range_id, label, spec, spike_bin=None):
    mass_range = MASS_RANGES[range_id]
    grid = mass_range.grid()
    phase = rng.uniform(0.0, 2 * np.pi)
    span = mass_range.hi - mass_range.lo
    template = spec.baseline_drift * (1.0 + 0.5 * np.sin(2 * np.pi * (grid - mass_range.lo) / span + phase))
    peaks = range_peaks(range_id, label, spec.class_separation)
    variation = rng.lognormal(0.0, 0.15, size=len(peaks))
    for (mz, amplitude), factor in zip(peaks, variation):
        template += amplitude * factor * np.exp(-((grid - mz) ** 2) / (2 * PEAK_WIDTH ** 2))
    if spike_bin is not None:
        template[spike_bin - mass_range.lo] += OUTLIER_SPIKE * template.max()
    return template, peaks


def _generate_range(rng, pid, range_id, label, spec, anomaly, spike_bin):
    mass_range = MASS_RANGES[range_id]
    n = int(rng.integers(spec.min_acquisitions, spec.max_acquisitions + 1))
    ramp = int(rng.integers(spec.min_ramp, spec.max_ramp + 1))
    level = TIC_LEVEL * rng.uniform(0.8, 1.2)
    tic, plateau_length = design_tic(rng, n, ramp, level, 0.02 * spec.noise)
    if anomaly == "no_plateau":
        tic = rising_tic(n, level)

    template, peaks = _template(rng, range_id, label, spec, spike_bin if range_id == "R2" else None)
    shifts = spec.mz_jitter * rng.uniform(-1.0, 1.0, size=n)
    noise = rng.standard_normal(size=(n, mass_range.size)) * (NOISE_UNIT * spec.noise)
    grid = mass_range.grid()

    acquisitions = []
    for i in range(n):
        shape = np.clip(template + noise[i], 0.0, None)
        intensity = shape * (tic[i] / shape.sum())
        acquisitions.append(RawAcquisition(pid, range_id, i, grid + shifts[i], intensity))

    truth = {
        "n_acquisitions": n,
        "ramp": ramp,
        "designed_plateau": None if anomaly == "no_plateau" else [ramp, ramp + plateau_length - 1],
        "tic": [float(v) for v in tic],
        "shifts": [float(s) for s in shifts],
        "peaks": [int(mz) for mz, _ in peaks],
        "outlier_bin": spike_bin if range_id == "R2" else None,
    }
    oracle = reference_plateau(tic)
    truth["plateau"] = oracle["plateau"] if oracle else None
    truth["chosen"] = oracle["chosen"] if oracle else None
    return acquisitions, truth


def generate_cohort(spec: SynthSpec = SynthSpec()) -> SyntheticCohort:
    """Generate records plus their ground truth for ``spec`` (deterministic in ``spec.seed``).

    Exactly round(n_patients * positive_fraction) patients are positive.
    """
    n = spec.n_patients
    master = np.random.default_rng(spec.seed)
    n_positive = int(round(n * spec.positive_fraction))
    positives = set(master.permutation(n)[:n_positive].tolist())

    order = master.permutation(n).tolist()
    counts = [int(round(n * rate)) for rate in (spec.outlier_rate, spec.no_plateau_rate, spec.missing_range_rate)]
    anomalies: Dict[int, str] = {}
    cursor = 0
    for name, count in zip(("outlier", "no_plateau", "missing_range"), counts):
        for position in order[cursor:cursor + count]:
            anomalies[position] = name
        cursor += count

    spike_bins = {}
    outliers = sorted(p for p, a in anomalies.items() if a == "outlier")
    if outliers and n < OUTLIER_MIN_PATIENTS:
        message = (
            f"{len(outliers)} outliers requested but a cohort of {n} patients cannot expose a "
            f"z-score above 8; injecting none (needs >= {OUTLIER_MIN_PATIENTS} patients)"
        )
        warnings.warn(message, UserWarning, stacklevel=2)
        logger.warning(message)
        for position in outliers:
            del anomalies[position]
        outliers = []
    free_bins = baseline_only_bins("R2")
    if len(outliers) > len(free_bins):
        raise InvalidSpec(f"at most {len(free_bins)} outliers can be injected, got {len(outliers)}")
    for position, spike_bin in zip(outliers, free_bins):
        spike_bins[position] = spike_bin

    streams = np.random.SeedSequence(spec.seed).spawn(n)
    records, patients_truth = [], {}
    for position in range(n):
        pid = patient_id(position, n)
        label = Label.POSITIVE if position in positives else Label.NEGATIVE
        anomaly = anomalies.get(position)
        rng = np.random.default_rng(streams[position])
        by_range, ranges_truth = {}, {}
        for range_id in RANGE_IDS:
            acquisitions, truth = _generate_range(
                rng, pid, range_id, label, spec, anomaly, spike_bins.get(position)
            )
            if anomaly == "missing_range" and range_id == "R4":
                continue
            by_range[range_id] = acquisitions
            ranges_truth[range_id] = truth
        records.append(PatientRecord(pid, label, by_range))
        patients_truth[pid] = {"label": label.serialize(), "anomaly": anomaly, "ranges": ranges_truth}

    truth = {
        "format_version": TRUTH_VERSION,
        "spec": asdict(spec),
        "patients": patients_truth,
    }
    logger.info(
        f"Generated {n} synthetic patients ({n_positive} positive, {n - n_positive} negative), "
        f"anomalies: { {name: sum(1 for a in anomalies.values() if a == name) for name in ('outlier', 'no_plateau', 'missing_range')} }"
    )
    return SyntheticCohort(spec, records, truth)


def write_cohort(cohort: SyntheticCohort, out_dir) -> Path:
    """Write ``manifest.json``, ``acquisitions/<patient>.csv`` and ``truth.json``; returns the manifest path"""
    out_dir = Path(out_dir)
    entries = []
    for record in cohort.records:
        relative = f"acquisitions/{record.patient_id}.csv"
        acquisitions = [acq for range_id in RANGE_IDS for acq in record.acquisitions.get(range_id, [])]
        write_acquisition_file(acquisitions, out_dir / relative)
        entries.append(ManifestEntry(record.patient_id, record.label, [relative]))
    manifest_path = write_manifest(entries, out_dir / "manifest.json")
    with open(out_dir / "truth.json", "w", encoding="utf-8") as f:
        json.dump(cohort.truth, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


def load_truth(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "truth.json"
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@dataclass
class GroundTruthReport:
    discrepancies: List[dict] = field(default_factory=list)
    plateaus_checked: int = 0
    plateaus_matched: int = 0
    peaks_checked: int = 0
    peaks_matched: int = 0

    @property
    def ok(self) -> bool:
        return not self.discrepancies

    @property
    def plateau_match_rate(self) -> float:
        return self.plateaus_matched / self.plateaus_checked if self.plateaus_checked else 1.0


def check_alignment(records: Sequence[PatientRecord], truth: dict, report: GroundTruthReport,
                    peak_floor: float = 1e-4) -> None:
    """Every true peak must be the local maximum of its aligned acquisition at its own integer bin"""
    for record in records:
        ranges_truth = truth["patients"][record.patient_id]["ranges"]
        for range_id, acquisitions in record.acquisitions.items():
            peaks = ranges_truth[range_id]["peaks"]
            for acq in acquisitions:
                aligned = align_peaks(acq, peak_floor)
                values = aligned.intensities
                for mz in peaks:
                    i = mz - aligned.lo
                    window = values[max(i - 1, 0): i + 2]
                    report.peaks_checked += 1
                    if values[i] == window.max():
                        report.peaks_matched += 1
                    else:
                        report.discrepancies.append({
                            "kind": "peak", "patient_id": record.patient_id, "range": range_id,
                            "acquisition": acq.index, "expected": mz,
                        })


def ground_truth_check(processed: ProcessedCohort, truth: dict,
                       records: Optional[Sequence[PatientRecord]] = None) -> GroundTruthReport:
    """Compare recovered plateaus, discards and (optionally) aligned peaks with the generator truth"""
    report = GroundTruthReport()
    range_ids = processed.range_ids or RANGE_IDS
    for patient in processed.patients:
        ranges_truth = truth["patients"][patient.patient_id]["ranges"]
        for range_id, result in patient.ranges.items():
            expected = ranges_truth[range_id]
            selection = result.selection
            found = {
                "plateau": [selection.plateau_start, selection.plateau_end],
                "chosen": [selection.chosen_start, selection.chosen_start + 3],
            }
            report.plateaus_checked += 1
            if found["plateau"] == expected["plateau"] and found["chosen"] == expected["chosen"]:
                report.plateaus_matched += 1
            else:
                report.discrepancies.append({
                    "kind": "plateau", "patient_id": patient.patient_id, "range": range_id,
                    "expected": {"plateau": expected["plateau"], "chosen": expected["chosen"]},
                    "found": found,
                })

    discarded = {d["patient_id"]: d["reason"] for d in processed.discards}
    for pid, patient_truth in truth["patients"].items():
        anomaly = patient_truth["anomaly"]
        if anomaly == "outlier" and "R2" not in range_ids:
            anomaly = None
        if anomaly == "missing_range" and "R4" not in range_ids:
            anomaly = None
        if discarded.get(pid) != anomaly:
            report.discrepancies.append({
                "kind": "discard", "patient_id": pid, "expected": anomaly, "found": discarded.get(pid),
            })

    if records is not None:
        check_alignment(records, truth, report)
    return report
