"""
Patient-grouped cross-validation and reporting
==============================================
Folds are planned over patients (stratified by label) before augmentation, so
every row of a patient lands in that patient's fold. Each fold fits the
feature pipeline, oversampling and classifiers on its training patients only
and scores the held-out patients on their averaged spectra.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix, roc_auc_score
from sklearn.model_selection import StratifiedKFold

from .augment import build_matrices
from .errors import BreathAnalysisError, LeakageDetected, TooFewPatients
from .features import build_feature_pipeline
from .models import (
    DISPLAY_NAMES,
    ENSEMBLE,
    fit_members,
    member_seed,
    oversample_indices,
    predict_proba,
    soft_vote,
)
from .records import FeatureMatrix, ProcessedCohort

logger = logging.getLogger(__name__)

METRICS = ("balanced_accuracy", "precision", "recall", "f1", "specificity", "roc_auc")
METRIC_LABELS = {
    "balanced_accuracy": "Balanced Acc.",
    "precision": "Precision",
    "recall": "Recall",
    "f1": "F1",
    "specificity": "Specificity",
    "roc_auc": "ROC-AUC",
}
PIPELINE_SEED_SLOT = 1000
OVERSAMPLE_SEED_SLOT = 1001


# --- fold planning --------------------------------------------------------------

@dataclass
class FoldPlan:
    fold_count: int
    assignments: Dict[str, int]
    seed: int

    def test_patients(self, fold: int) -> List[str]:
        return [pid for pid, f in self.assignments.items() if f == fold]

    def train_patients(self, fold: int) -> List[str]:
        return [pid for pid, f in self.assignments.items() if f != fold]

    def row_folds(self, matrix: FeatureMatrix) -> np.ndarray:
        """Fold of every matrix row, -1 for rows whose origin is not planned"""
        return np.array([self.assignments.get(origin, -1) for origin in matrix.origins], dtype=int)


def _round_robin(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=int)
    position = 0
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        folds[members] = (position + np.arange(len(members))) % k
        position += len(members)
    return folds


def plan_folds(patient_ids: Sequence[str], labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified patient partition into ``k`` folds, deterministic for a seed.

    Raises:
        TooFewPatients: fewer patients than folds
    """
    patient_ids = list(patient_ids)
    labels = np.asarray(labels, dtype=int)
    if len(patient_ids) < k:
        raise TooFewPatients(f"{len(patient_ids)} patients cannot fill {k} folds")

    folds = np.empty(len(patient_ids), dtype=int)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
            for fold, (_, test_index) in enumerate(splitter.split(np.zeros(len(labels)), labels)):
                folds[test_index] = fold
    except ValueError:
        # every class is smaller than k
        folds = _round_robin(labels, k, seed)
    return FoldPlan(k, {pid: int(f) for pid, f in zip(patient_ids, folds)}, seed)


def leakage_audit(plan: FoldPlan, matrix: FeatureMatrix, row_folds=None) -> List[dict]:
    """One violation per origin patient whose rows fall in more than one fold or in none"""
    if row_folds is None:
        row_folds = plan.row_folds(matrix)
    frame = pd.DataFrame({"origin": list(matrix.origins), "fold": np.asarray(row_folds, dtype=int)})
    spread = frame.groupby("origin", sort=True)["fold"].agg(["nunique", "min"])
    bad = spread[(spread["nunique"] > 1) | (spread["min"] < 0)]
    return [
        {"patient_id": str(origin), "folds": sorted(int(f) for f in frame.loc[frame["origin"] == origin, "fold"].unique())}
        for origin in bad.index
    ]


# --- metrics ----------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSet:
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    roc_auc: float
    undefined: tuple = ()

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRICS}


def _ratio(numerator, denominator, name, undefined):
    if denominator == 0:
        undefined.append(name)
        return 0.0
    return float(numerator / denominator)


def compute_metrics(y_true, y_pred, scores) -> MetricSet:
    """Confusion-matrix metrics plus ROC-AUC; zero denominators give 0.0 and an ``undefined`` flag"""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    scores = np.asarray(scores, dtype=float)
    if y_true.size == 0 or not (y_true.size == y_pred.size == scores.size):
        raise ValueError("metrics need non-empty, aligned label and score vectors")

    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
    undefined = []
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    specificity = _ratio(tn, tn + fp, "specificity", undefined)
    if "recall" in undefined or "specificity" in undefined:
        undefined.append("balanced_accuracy")
    balanced_accuracy = (recall + specificity) / 2
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", undefined)
    if np.unique(y_true).size < 2:
        undefined.append("roc_auc")
        roc_auc = 0.0
    else:
        roc_auc = float(roc_auc_score(y_true, scores))
    return MetricSet(balanced_accuracy, precision, recall, f1, specificity, roc_auc, tuple(undefined))


# --- cross-validation ---------------------------------------------------------------

@dataclass
class FoldResult:
    repeat: int
    fold: int
    n_train_patients: int
    n_test_patients: int
    n_train_rows: int = 0
    metrics: Dict[str, MetricSet] = field(default_factory=dict)
    predictions: Optional[pd.DataFrame] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _score(probas: Dict[str, np.ndarray], labels) -> Dict[str, MetricSet]:
    scored = {}
    for name, proba in probas.items():
        predicted, p_positive = soft_vote([proba])
        scored[name] = compute_metrics(labels, predicted, p_positive)
    predicted, p_positive = soft_vote(list(probas.values()))
    scored[ENSEMBLE] = compute_metrics(labels, predicted, p_positive)
    return scored


def evaluate_fold(training: FeatureMatrix, test: FeatureMatrix, plan: FoldPlan, fold: int,
                  config, repeat: int = 0) -> FoldResult:
    train_ids = plan.train_patients(fold)
    test_ids = plan.test_patients(fold)
    result = FoldResult(repeat, fold, len(train_ids), len(test_ids))
    stage = "split"
    try:
        train_rows = training.rows_of(train_ids)
        test_rows = test.rows_of(test_ids)
        result.n_train_rows = len(train_rows)

        stage = "features"
        pipeline = build_feature_pipeline(config, member_seed(config.seed, repeat, fold, PIPELINE_SEED_SLOT))
        X_train = pipeline.fit_transform(train_rows.values, train_rows.labels)

        stage = "oversampling"
        balanced = oversample_indices(
            train_rows.labels, member_seed(config.seed, repeat, fold, OVERSAMPLE_SEED_SLOT)
        )

        stage = "models"
        members = fit_members(X_train[balanced], train_rows.labels[balanced], config, (repeat, fold))

        stage = "prediction"
        X_test = pipeline.transform(test_rows.values)
        probas = {name: predict_proba(model, X_test) for name, model in members.items()}
        result.metrics = _score(probas, test_rows.labels)
        _, p_positive = soft_vote(list(probas.values()))
        result.predictions = pd.DataFrame({
            "repeat": repeat,
            "fold": fold,
            "patient_id": list(test_rows.origins),
            "label": test_rows.labels,
            **{name: proba[:, 1] for name, proba in probas.items()},
            ENSEMBLE: p_positive,
        })

        if config.per_row_test and config.mode == "multiple":
            per_row = training.rows_of(test_ids)
            X_rows = pipeline.transform(per_row.values)
            row_probas = {name: predict_proba(model, X_rows) for name, model in members.items()}
            for name, metric_set in _score(row_probas, per_row.labels).items():
                result.metrics[f"{name}@rows"] = metric_set
    except (BreathAnalysisError, ValueError) as e:
        result.error = f"{stage}: {type(e).__name__}: {e}"
        logger.warning(f"Repeat {repeat} fold {fold} failed at {result.error}")
        return result

    flagged = sorted({m for ms in result.metrics.values() for m in ms.undefined})
    if flagged:
        logger.warning(f"Repeat {repeat} fold {fold}: undefined metrics reported as 0.0: {flagged}")
    logger.info(
        f"Repeat {repeat} fold {fold}: {len(train_ids)} train / {len(test_ids)} test patients, "
        f"ensemble balanced accuracy {result.metrics[ENSEMBLE].balanced_accuracy:.3f}"
    )
    return result


def cross_validate(cohort: ProcessedCohort, config) -> "EvaluationReport":
    """Repeated patient-grouped stratified k-fold evaluation of the configured pipeline.

    Repeat ``r`` plans its folds with seed ``config.seed + r``. Fold failures
    are recorded on the report; if every fold fails the first error is raised.
    """
    training, test = build_matrices(cohort, config)
    folds: List[FoldResult] = []
    for repeat in range(config.repeats):
        plan = plan_folds(cohort.patient_ids, cohort.labels, config.folds, config.seed + repeat)
        violations = leakage_audit(plan, training)
        if violations:
            raise LeakageDetected(f"{len(violations)} patients straddle folds: {violations[:5]}")
        folds.extend(Parallel(n_jobs=config.n_jobs)(
            delayed(evaluate_fold)(training, test, plan, fold, config, repeat)
            for fold in range(config.folds)
        ))

    if not any(result.ok for result in folds):
        raise BreathAnalysisError(f"every fold failed; first failure: {folds[0].error}")

    report = EvaluationReport(
        config=dict(config.to_dict()),
        seed=config.seed,
        models=list(config.models) + [ENSEMBLE],
        folds=folds,
        n_patients=len(cohort),
        n_positive=int(cohort.labels.sum()),
        n_training_rows=len(training),
    )
    logger.info(f"Cross-validation finished: {sum(r.ok for r in folds)}/{len(folds)} folds succeeded")
    return report


# --- report -----------------------------------------------------------------------

@dataclass
class EvaluationReport:
    config: dict
    seed: int
    models: List[str]
    folds: List[FoldResult]
    n_patients: int = 0
    n_positive: int = 0
    n_training_rows: int = 0

    def fold_frame(self) -> pd.DataFrame:
        """One row per (repeat, fold, model) of successful folds"""
        rows = []
        for result in self.folds:
            for name, metric_set in result.metrics.items():
                rows.append({
                    "repeat": result.repeat, "fold": result.fold, "model": name,
                    **metric_set.as_dict(), "undefined": ";".join(metric_set.undefined),
                })
        return pd.DataFrame(rows, columns=["repeat", "fold", "model", *METRICS, "undefined"])

    def summary(self) -> pd.DataFrame:
        """Mean and population std over folds, indexed by model"""
        frame = self.fold_frame()
        grouped = frame.groupby("model", sort=False)[list(METRICS)]
        means = grouped.mean()
        stds = grouped.std(ddof=0).fillna(0.0)
        summary = pd.concat({"mean": means, "std": stds}, axis=1)
        ordered = [m for m in self.model_order() if m in summary.index]
        return summary.loc[ordered]

    def model_order(self) -> List[str]:
        names = list(self.models)
        extra = sorted({name for r in self.folds for name in r.metrics} - set(names))
        return names + extra

    def mean(self, model: str, metric: str) -> float:
        return float(self.summary().loc[model, ("mean", metric)])

    def std(self, model: str, metric: str) -> float:
        return float(self.summary().loc[model, ("std", metric)])

    def to_frame(self) -> pd.DataFrame:
        """Per-fold rows followed by ``mean`` and ``std`` rows per model"""
        frame = self.fold_frame().drop(columns="undefined")
        frame["repeat"] = frame["repeat"].astype(str)
        frame["fold"] = frame["fold"].astype(str)
        summary = self.summary()
        aggregate = []
        for statistic in ("mean", "std"):
            for model in summary.index:
                aggregate.append({
                    "repeat": "all", "fold": statistic, "model": model,
                    **{metric: summary.loc[model, (statistic, metric)] for metric in METRICS},
                })
        return pd.concat([frame, pd.DataFrame(aggregate)], ignore_index=True)

    def to_dict(self) -> dict:
        summary = self.summary()
        return {
            "config": self.config,
            "seed": self.seed,
            "cohort": {
                "patients": self.n_patients,
                "positive": self.n_positive,
                "negative": self.n_patients - self.n_positive,
                "training_rows": self.n_training_rows,
            },
            "folds": [
                {
                    "repeat": r.repeat,
                    "fold": r.fold,
                    "train_patients": r.n_train_patients,
                    "test_patients": r.n_test_patients,
                    "train_rows": r.n_train_rows,
                    "error": r.error,
                    "metrics": {
                        name: {**ms.as_dict(), "undefined": list(ms.undefined)}
                        for name, ms in r.metrics.items()
                    },
                }
                for r in self.folds
            ],
            "aggregate": {
                model: {
                    metric: {
                        "mean": float(summary.loc[model, ("mean", metric)]),
                        "std": float(summary.loc[model, ("std", metric)]),
                    }
                    for metric in METRICS
                }
                for model in summary.index
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def predictions(self) -> pd.DataFrame:
        frames = [r.predictions for r in self.folds if r.predictions is not None]
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    def format_table(self, models: Optional[Sequence[str]] = None) -> str:
        """Mean ± std per model and metric in a plain-text table"""
        summary = self.summary()
        models = [m for m in (models or summary.index) if m in summary.index]
        rows = {}
        for model in models:
            base, _, suffix = model.partition("@")
            label = DISPLAY_NAMES.get(base, base) + (f" ({suffix})" if suffix else "")
            rows[label] = {
                METRIC_LABELS[metric]: (
                    f"{summary.loc[model, ('mean', metric)]:.2f} ± {summary.loc[model, ('std', metric)]:.2f}"
                )
                for metric in METRICS
            }
        table = pd.DataFrame.from_dict(rows, orient="index")
        table.index.name = "Model"
        return table.to_string() + "\n"
