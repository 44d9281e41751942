"""Classifier backends behind a uniform train/predict contract.

The four methods used for mode-choice modelling wrap scikit-learn
estimators. Hyperparameters arrive as plain dicts (JSON-friendly, None
meaning "unbounded"), labels as strings. Sentinel values pass through
untouched for tree and Bayes methods; the distance-based kNN gets a
per-feature standardization whose statistics ignore sentinel entries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.tree import DecisionTreeClassifier

from .errors import ConfigError, DegenerateLabelError

log = logging.getLogger(__name__)

METHODS = ("naive_bayes", "decision_tree", "random_forest", "knn")

# "feature unavailable" markers used across the feature table
SENTINEL_VALUES = (-1.0, -9999.0)

# cap on pruning candidates evaluated against the validation set
_MAX_PRUNE_ALPHAS = 12


class _SentinelScaler:
    """Per-feature standardization with sentinel rows excluded from the stats.

    Sentinel entries are still mapped through the same affine transform,
    which keeps "missing" rows mutually close and far from observed ones.
    """

    def __init__(self, X: np.ndarray):
        n_feat = X.shape[1]
        self.mean = np.zeros(n_feat)
        self.scale = np.ones(n_feat)
        for j in range(n_feat):
            col = X[:, j]
            mask = ~np.isin(col, SENTINEL_VALUES)
            if mask.sum() >= 1:
                self.mean[j] = col[mask].mean()
                sd = col[mask].std()
                if sd > 0:
                    self.scale[j] = sd

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class Model:
    method: str
    hyperparams: dict
    backend: object
    scaler: object = None
    classes: tuple = field(default_factory=tuple)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return self.backend.predict(X)


def _fit_tree(h: dict, X_l, y_l, X_v, y_v, seed: int):
    kw = dict(max_depth=h.get("max_depth"),
              min_samples_leaf=h.get("min_samples_leaf", 1),
              random_state=seed)
    tree = DecisionTreeClassifier(**kw).fit(X_l, y_l)
    if X_v is None or len(X_v) == 0:
        return tree
    # cost-complexity pruning, candidate picked on the validation split
    alphas = np.unique(np.clip(tree.cost_complexity_pruning_path(X_l, y_l).ccp_alphas, 0, None))
    if len(alphas) > _MAX_PRUNE_ALPHAS:
        idx = np.linspace(0, len(alphas) - 1, _MAX_PRUNE_ALPHAS).round().astype(int)
        alphas = alphas[np.unique(idx)]
    best, best_key = tree, None
    for a in alphas:
        cand = DecisionTreeClassifier(ccp_alpha=float(a), **kw).fit(X_l, y_l)
        acc = float((cand.predict(X_v) == np.asarray(y_v)).mean())
        key = (acc, a)  # ties prefer the simpler (more pruned) tree
        if best_key is None or key > best_key:
            best, best_key = cand, key
    return best


def _fit_forest(h: dict, X_l, y_l, seed: int):
    mf = h.get("max_features", "sqrt")
    if mf == "all":
        mf = None
    return RandomForestClassifier(
        n_estimators=h.get("n_estimators", 100),
        max_features=mf,
        max_depth=h.get("max_depth"),
        bootstrap=h.get("bootstrap", True),
        random_state=seed,
        n_jobs=1,
    ).fit(X_l, y_l)


def train(method: str, hyperparams: dict, X_learn, y_learn,
          X_val=None, y_val=None, seed: int = 0) -> Model:
    """Fit one classifier. The validation split is consumed only by methods
    that tune an internal knob on it (tree pruning); others ignore it."""
    X_learn = np.asarray(X_learn, dtype=float)
    y_learn = np.asarray(y_learn, dtype=object)
    classes = sorted(set(str(v) for v in y_learn))
    if len(classes) < 2:
        raise DegenerateLabelError(
            f"learn set has {len(classes)} distinct label(s), need at least 2")

    scaler = None
    if method == "naive_bayes":
        backend = GaussianNB(var_smoothing=hyperparams.get("var_smoothing", 1e-9))
        backend.fit(X_learn, y_learn)
    elif method == "decision_tree":
        backend = _fit_tree(hyperparams, X_learn, y_learn, X_val, y_val, seed)
    elif method == "random_forest":
        backend = _fit_forest(hyperparams, X_learn, y_learn, seed)
    elif method == "knn":
        scaler = _SentinelScaler(X_learn)
        k = min(int(hyperparams.get("k", 5)), len(y_learn))
        backend = KNeighborsClassifier(n_neighbors=k)
        backend.fit(scaler.transform(X_learn), y_learn)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return Model(method, dict(hyperparams), backend, scaler, tuple(classes))


def default_grids() -> dict:
    """Hyperparameter grids used when the run configuration does not
    override them."""
    return {
        "naive_bayes": [{"var_smoothing": float(v)}
                        for v in np.logspace(-9, 0, 10)],
        "decision_tree": [{"max_depth": d, "min_samples_leaf": l}
                          for d in (3, 5, 8, 12, None) for l in (1, 5)],
        "random_forest": [{"n_estimators": n, "max_features": f, "max_depth": d}
                          for n in (50, 200) for f in ("sqrt", "all")
                          for d in (8, None)],
        "knn": [{"k": k} for k in range(1, 20, 2)],
    }
