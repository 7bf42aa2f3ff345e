"""
Feature hygiene and reduction
=============================
Zero-variance pruning, Standard/Robust scaling, SURF* relevance selection and
PCA, as sklearn transformers chained in a per-fold Pipeline.
"""

import logging
import warnings
from typing import Tuple

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.decomposition import PCA
from sklearn.feature_selection import VarianceThreshold
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import RobustScaler, StandardScaler

from .errors import AllFeaturesConstant, DegenerateScale, RankDeficient, SingleClass
from .records import FeatureMatrix

logger = logging.getLogger(__name__)

FULL_SVD_MAX_FEATURES = 2000
VARIANCE_FLOOR = 1e-12


class ZeroVariancePruner(VarianceThreshold):
    """Drops features whose training values are all identical"""

    def __init__(self):
        super().__init__(threshold=0.0)

    def fit(self, X, y=None):
        try:
            super().fit(X, y)
        except ValueError as e:
            raise AllFeaturesConstant(f"every feature is constant over the training rows: {e}") from e
        return self

    @property
    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.get_support())


def prune_zero_variance(matrix: FeatureMatrix) -> Tuple[FeatureMatrix, np.ndarray]:
    pruner = ZeroVariancePruner().fit(matrix.values)
    kept = pruner.kept_indices
    pruned = FeatureMatrix(
        matrix.values[:, kept], matrix.labels, matrix.origins, matrix.combos,
        [matrix.feature_index[i] for i in kept],
    )
    return pruned, kept


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Standard (mean/std), Robust (median/IQR) or no scaling.

    Features with zero spread keep a unit scale and raise a DegenerateScale warning.
    """

    def __init__(self, kind="standard"):
        self.kind = kind

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if self.kind == "standard":
            self.scaler_ = StandardScaler().fit(X)
            spread = X.std(axis=0)
        elif self.kind == "robust":
            self.scaler_ = RobustScaler().fit(X)
            q1, q3 = np.percentile(X, [25, 75], axis=0)
            spread = q3 - q1
        elif self.kind == "none":
            self.scaler_ = None
            spread = np.ones(X.shape[1])
        else:
            raise ValueError(f"unknown scaler kind {self.kind!r}")

        self.degenerate_ = np.flatnonzero(spread == 0)
        if self.degenerate_.size:
            message = f"{self.degenerate_.size} features have zero spread and are left unscaled"
            warnings.warn(message, DegenerateScale, stacklevel=2)
            logger.warning(message)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if self.scaler_ is None:
            return X.copy()
        return self.scaler_.transform(X)


def fit_scaler(kind: str, rows) -> FeatureScaler:
    return FeatureScaler(kind).fit(rows)


def apply_scaler(model: FeatureScaler, rows) -> np.ndarray:
    return model.transform(rows)


class SurfStar(BaseEstimator, TransformerMixin):
    """SURF* relevance weighting and top-k selection.

    Every ordered pair of training instances contributes the range-normalized
    per-feature difference: pairs closer (Manhattan) than the mean pairwise
    distance count as near, the rest as far. Near hits subtract, near misses
    add, and the far pairs do the opposite. Weights are averaged over all pair
    updates; the ``n_features_to_select`` heaviest features are kept in their
    original column order.
    """

    def __init__(self, n_features_to_select=200, max_instances=2000, random_state=None):
        self.n_features_to_select = n_features_to_select
        self.max_instances = max_instances
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if np.unique(y).size < 2:
            raise SingleClass("SURF* needs both classes in the training rows")

        if X.shape[0] > self.max_instances:
            rng = np.random.default_rng(self.random_state)
            rows = np.sort(rng.choice(X.shape[0], size=self.max_instances, replace=False))
            X, y = X[rows], y[rows]

        span = X.max(axis=0) - X.min(axis=0)
        span[span == 0] = 1.0
        normalized = X / span

        distances = pdist(X, metric="cityblock")
        threshold = distances.mean()
        near = squareform(distances) < threshold
        same = y[:, None] == y[None, :]
        # near hit -1, near miss +1, far hit +1, far miss -1
        signs = np.where(near == same, -1.0, 1.0)
        np.fill_diagonal(signs, 0.0)

        weights = np.zeros(X.shape[1])
        for i in range(X.shape[0]):
            weights += signs[i] @ np.abs(normalized - normalized[i])
        n = X.shape[0]
        self.weights_ = weights / (n * (n - 1))
        self.threshold_ = threshold

        k = min(self.n_features_to_select, X.shape[1])
        top = np.argsort(-self.weights_, kind="stable")[:k]
        self.selected_ = np.sort(top)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        return np.asarray(X, dtype=float)[:, self.selected_]


def fit_surf_star(rows, labels, k=200, max_instances=2000, seed=None) -> SurfStar:
    return SurfStar(k, max_instances, seed).fit(rows, labels)


class RankAwarePCA(BaseEstimator, TransformerMixin):
    """PCA that shrinks to the data's effective rank instead of failing.

    The component count is capped at min(n_components, rows - 1, features) and
    components explaining no variance are dropped, with a RankDeficient warning.
    """

    def __init__(self, n_components=20, random_state=None):
        self.n_components = n_components
        self.random_state = random_state

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        n_rows, n_features = X.shape
        n_effective = min(self.n_components, n_rows - 1, n_features)
        if n_effective < 1:
            raise ValueError(f"PCA needs at least 2 rows, got {n_rows}")

        solver = "full" if n_features <= FULL_SVD_MAX_FEATURES else "randomized"
        pca = PCA(n_components=n_effective, svd_solver=solver, random_state=self.random_state).fit(X)

        total = X.var(axis=0, ddof=1).sum()
        informative = int(np.sum(pca.explained_variance_ > VARIANCE_FLOOR * total))
        keep = max(informative, 1)
        if keep < self.n_components:
            message = f"requested {self.n_components} principal components, data supports {keep}"
            warnings.warn(message, RankDeficient, stacklevel=2)
            logger.warning(message)

        self.mean_ = pca.mean_
        self.components_ = pca.components_[:keep]
        self.explained_variance_ = pca.explained_variance_[:keep]
        self.explained_variance_ratio_ = pca.explained_variance_ratio_[:keep]
        self.n_components_ = keep
        self.n_features_in_ = n_features
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) @ self.components_ + self.mean_


def fit_pca(rows, n_components: int = 20, seed=None) -> RankAwarePCA:
    return RankAwarePCA(n_components, seed).fit(rows)


def project(model: RankAwarePCA, rows) -> np.ndarray:
    return model.transform(rows)


def build_feature_pipeline(config, seed=None) -> Pipeline:
    """prune -> scale -> [SURF*] -> [PCA], each step fitted on training rows only"""
    steps = [
        ("prune", ZeroVariancePruner()),
        ("scale", FeatureScaler(config.scaler)),
    ]
    if config.surf:
        steps.append(("surf", SurfStar(config.surf_k, config.surf_max_instances, seed)))
    if config.pca_components:
        steps.append(("pca", RankAwarePCA(config.pca_components, seed)))
    return Pipeline(steps)
