"""
Classifiers, minority oversampling and soft voting
==================================================
KNN, random forest, logistic regression, gradient boosting and an RBF SVM
with a logistic calibration map, combined by summing class probabilities.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import KNeighborsClassifier
from sklearn.svm import SVC

from .errors import HeterogeneousMembers, NonFiniteFeature, SingleClass, WidthMismatch
from .records import FeatureMatrix, Label

logger = logging.getLogger(__name__)

ENSEMBLE = "ensemble"
DISPLAY_NAMES = {
    "knn": "KNN",
    "rf": "Random Forest",
    "lr": "Logistic Regression",
    "gb": "Gradient Boosting",
    "svc": "SVC",
    ENSEMBLE: "Ensemble",
}


def member_seed(seed: int, *key: int) -> int:
    """Independent 32-bit seed for one (repeat, fold, member) position of a run"""
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


# --- oversampling ---------------------------------------------------------------

def oversample_indices(labels, seed: int = 0) -> np.ndarray:
    """Row indices with minority rows repeated until both classes are equally frequent.

    All original rows come first in their original order; the extra minority
    rows cycle through a seeded permutation of the minority.
    """
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels, minlength=2)
    if counts.min() == 0:
        raise SingleClass("oversampling needs both classes in the training rows")
    minority = int(np.argmin(counts))
    deficit = int(counts.max() - counts.min())
    base = np.arange(len(labels))
    if deficit == 0:
        return base
    rng = np.random.default_rng(seed)
    cycle = rng.permutation(np.flatnonzero(labels == minority))
    return np.concatenate([base, np.resize(cycle, deficit)])


def oversample_minority(matrix: FeatureMatrix, seed: int = 0) -> FeatureMatrix:
    return matrix.subset(oversample_indices(matrix.labels, seed))


# --- classifiers ------------------------------------------------------------------

class CalibratedRbfSvc(BaseEstimator, ClassifierMixin):
    """RBF-kernel SVC whose decision values are mapped to probabilities by a logistic fit"""

    def __init__(self, C=1.0, gamma="scale", tol=1e-3, random_state=None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        self.svc_ = SVC(kernel="rbf", C=self.C, gamma=self.gamma, tol=self.tol,
                        random_state=self.random_state).fit(X, y)
        decision = self.svc_.decision_function(X).reshape(-1, 1)
        self.calibrator_ = LogisticRegression().fit(decision, y)
        self.classes_ = self.svc_.classes_
        self.n_features_in_ = self.svc_.n_features_in_
        return self

    def decision_function(self, X):
        return self.svc_.decision_function(X)

    def predict_proba(self, X):
        return self.calibrator_.predict_proba(self.decision_function(X).reshape(-1, 1))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


def make_classifier(name: str, config, seed: int = 0):
    if name == "knn":
        return KNeighborsClassifier(n_neighbors=config.knn_k)
    if name == "rf":
        return RandomForestClassifier(
            n_estimators=config.rf_trees, max_features="sqrt", random_state=seed,
        )
    if name == "lr":
        return LogisticRegression(C=1.0 / config.lr_l2, tol=1e-10, max_iter=10000)
    if name == "gb":
        return GradientBoostingClassifier(
            n_estimators=config.gb_rounds, max_depth=config.gb_depth,
            learning_rate=config.gb_shrinkage, random_state=seed,
        )
    if name == "svc":
        return CalibratedRbfSvc(C=config.svm_c, gamma=config.svm_gamma, random_state=seed)
    raise ValueError(f"unknown classifier {name!r}")


def _check_training_rows(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if not np.isfinite(X).all():
        raise NonFiniteFeature("training features contain NaN or infinite values")
    if np.unique(y).size < 2:
        raise SingleClass("training rows contain a single class")
    return X, y


def fit_classifier(name: str, X, y, config, seed: int = 0):
    X, y = _check_training_rows(X, y)
    model = make_classifier(name, config, seed)
    if name == "knn" and model.n_neighbors > len(X):
        model = clone(model).set_params(n_neighbors=len(X))
    return model.fit(X, y)


def predict_proba(model, rows) -> np.ndarray:
    """(p_negative, p_positive) per row"""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != model.n_features_in_:
        raise WidthMismatch(
            f"model was fitted on {model.n_features_in_} features, got rows of shape {rows.shape}"
        )
    proba = model.predict_proba(rows)
    columns = [list(model.classes_).index(label) for label in (Label.NEGATIVE, Label.POSITIVE)]
    return proba[:, columns]


def soft_vote(probas: Sequence[np.ndarray]):
    """Sum member probabilities; positive only when its summed score is strictly larger.

    Returns:
        (labels, p_positive): p_positive is the summed positive score over member count
    """
    probas = [np.asarray(p, dtype=float) for p in probas]
    if not probas:
        raise HeterogeneousMembers("soft voting needs at least one member")
    shapes = {p.shape for p in probas}
    if len(shapes) != 1 or probas[0].ndim != 2 or probas[0].shape[1] != 2:
        raise HeterogeneousMembers(f"member outputs have different shapes: {sorted(shapes)}")
    totals = np.sum(probas, axis=0)
    labels = (totals[:, 1] > totals[:, 0]).astype(int)
    return labels, totals[:, 1] / len(probas)


class SoftVotingEnsemble(BaseEstimator, ClassifierMixin):
    """Unweighted soft-voting ensemble over already named members.

    Args:
        models: list of (name, estimator) tuples exposing predict_proba
    """

    def __init__(self, models=None):
        self.models = models

    def fit(self, X, y):
        X, y = _check_training_rows(X, y)
        for _, model in self.models:
            model.fit(X, y)
        return self._freeze()

    def _freeze(self):
        widths = {model.n_features_in_ for _, model in self.models}
        if len(widths) != 1:
            raise HeterogeneousMembers(f"members were fitted on different widths {sorted(widths)}")
        self.n_features_in_ = widths.pop()
        self.classes_ = np.array([Label.NEGATIVE, Label.POSITIVE])
        return self

    @classmethod
    def from_fitted(cls, members: Dict[str, object]) -> "SoftVotingEnsemble":
        return cls(list(members.items()))._freeze()

    def member_probas(self, X) -> Dict[str, np.ndarray]:
        return {name: predict_proba(model, X) for name, model in self.models}

    def predict_proba(self, X):
        _, p_positive = soft_vote(list(self.member_probas(X).values()))
        return np.column_stack([1.0 - p_positive, p_positive])

    def predict(self, X):
        labels, _ = soft_vote(list(self.member_probas(X).values()))
        return labels


def fit_members(X, y, config, seed_key: Sequence[int] = ()) -> Dict[str, object]:
    """Fit every configured classifier on the same (already oversampled) rows"""
    X, y = _check_training_rows(X, y)
    members = {}
    for position, name in enumerate(config.models):
        members[name] = fit_classifier(name, X, y, config, member_seed(config.seed, *seed_key, position))
    return members


@dataclass
class ModelBundle:
    """A frozen feature pipeline plus fitted members, ready to score new patients"""
    config: object
    feature_pipeline: object
    members: Dict[str, object]
    feature_index: List[int]
    training_patients: List[str] = field(default_factory=list)

    @property
    def ensemble(self) -> SoftVotingEnsemble:
        return SoftVotingEnsemble.from_fitted(self.members)

    def predict(self, matrix: FeatureMatrix) -> pd.DataFrame:
        if list(matrix.feature_index) != list(self.feature_index):
            raise WidthMismatch(
                f"bundle expects {len(self.feature_index)} features on its own m/z grid, "
                f"got {len(matrix.feature_index)}"
            )
        transformed = self.feature_pipeline.transform(matrix.values)
        labels, p_positive = soft_vote(
            [predict_proba(model, transformed) for model in self.members.values()]
        )
        return pd.DataFrame({
            "patient_id": list(matrix.origins),
            "label": [Label(int(v)).serialize() for v in labels],
            "p_positive": p_positive,
        })
