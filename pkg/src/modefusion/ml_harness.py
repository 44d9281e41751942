"""Scenario-driven model selection and evaluation.

Pipeline: load the fused instance table, keep the feature sets a scenario
asks for, one-hot encode what is categorical, cut a chronological holdout
of whole calendar days, run grouped K-fold cross-validation over the
hyperparameter grids, pick the best (method, hyperparams) by mean Cohen's
kappa on the CV test folds, retrain on the full training portion, and
report holdout metrics plus a permutation importance ranking.

Fold roles per CV round k: test = fold k, validation = fold (k+1) mod K,
learn = the remaining folds.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .classifiers import Model, default_grids, train
from .errors import ConfigError, EmptyEvalError, IoError
from .fusion import DIFF_OPERAND_TAGS, FEATURE_SET_TAGS
from .timeutil import epoch_date

log = logging.getLogger(__name__)

_META = ("respondent_id", "ordinal", "t_depart", "label")

LOS_TAGS = ("WALKING_LOS", "CYCLING_LOS", "CAR_LOS", "PLAN_PT_LOS", "REAL_PT_LOS")

DEFAULT_ALPHA = 0.2
DEFAULT_FOLDS = 10


@dataclass(frozen=True)
class Scenario:
    """A named subset of feature-set tags; DIFF membership is derived."""
    name: str
    tags: frozenset

    def __post_init__(self):
        known = set(FEATURE_SET_TAGS) - {"DIFF"}
        bad = set(self.tags) - known
        if bad:
            raise ConfigError(f"scenario {self.name}: unknown or non-selectable "
                              f"tags {sorted(bad)}")
        if "SURVEY" not in self.tags:
            raise ConfigError(f"scenario {self.name}: SURVEY is always included")


def _scenario(name, *extra) -> Scenario:
    return Scenario(name, frozenset(("SURVEY",) + extra))


_UNIMODAL = ("WALKING_LOS", "CYCLING_LOS", "CAR_LOS")

SCENARIOS = {s.name: s for s in (
    _scenario("S_ONLY"),
    _scenario("S_P_LOS", *_UNIMODAL, "PLAN_PT_LOS"),
    _scenario("S_P_LOS_TR", *_UNIMODAL, "PLAN_PT_LOS", "E_CAR_LOS"),
    _scenario("S_R_LOS", *_UNIMODAL, "REAL_PT_LOS"),
    _scenario("S_R_LOS_TR", *_UNIMODAL, "REAL_PT_LOS", "E_CAR_LOS"),
    _scenario("S_BE", "BUILT_ENV"),
    _scenario("S_ENV", "WEATHER", "POLLUTION"),
    _scenario("S_ALL", *(t for t in FEATURE_SET_TAGS if t not in ("SURVEY", "DIFF"))),
)}


# --- instance table -----------------------------------------------------------------

@dataclass(frozen=True)
class InstanceTable:
    """Column-major view of an emitted instance file: raw string values
    keyed by feature name, plus the four meta columns."""
    columns: tuple            # ((name, tag), ...) in file order
    respondent_ids: tuple
    ordinals: tuple
    t_departs: tuple          # ints, epoch seconds
    labels: tuple
    values: dict              # name -> tuple of raw strings

    @property
    def n(self) -> int:
        return len(self.labels)

    @classmethod
    def from_csv(cls, path) -> "InstanceTable":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise IoError(f"{path}: empty instance file")
        header = rows[0]
        if tuple(header[:4]) != _META:
            raise IoError(f"{path}: expected meta columns {_META}, "
                          f"got {tuple(header[:4])}")
        columns = []
        for col in header[4:]:
            if "@" not in col:
                raise IoError(f"{path}: feature column {col!r} lacks a tag")
            name, tag = col.rsplit("@", 1)
            columns.append((name, tag))
        data = rows[1:]
        cols = list(zip(*data)) if data else [()] * len(header)
        return cls(
            columns=tuple(columns),
            respondent_ids=tuple(cols[0]),
            ordinals=tuple(int(v) for v in cols[1]),
            t_departs=tuple(int(v) for v in cols[2]),
            labels=tuple(cols[3]),
            values={name: tuple(cols[4 + i]) for i, (name, _) in enumerate(columns)},
        )


def select_features(table: InstanceTable, scenario: Scenario) -> InstanceTable:
    """Keep only the columns whose feature set belongs to the scenario.
    A DIFF column survives iff both of its operand feature sets do."""
    keep = []
    for name, tag in table.columns:
        if tag == "DIFF":
            ops = DIFF_OPERAND_TAGS.get(name)
            if ops is None:
                raise ConfigError(f"unrecognized differential column {name!r}")
            if set(ops) <= scenario.tags:
                keep.append((name, tag))
        elif tag in scenario.tags:
            keep.append((name, tag))
        elif tag not in FEATURE_SET_TAGS:
            raise ConfigError(f"column {name!r} carries unknown tag {tag!r}")
    return InstanceTable(
        columns=tuple(keep),
        respondent_ids=table.respondent_ids,
        ordinals=table.ordinals,
        t_departs=table.t_departs,
        labels=table.labels,
        values={name: table.values[name] for name, _ in keep},
    )


# --- encoding -----------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    names: tuple
    X: np.ndarray
    y: tuple
    respondent_ids: tuple
    t_departs: tuple

    @property
    def n(self) -> int:
        return len(self.y)

    def take(self, idx) -> "FeatureMatrix":
        idx = list(idx)
        return FeatureMatrix(
            self.names,
            self.X[idx],
            tuple(self.y[i] for i in idx),
            tuple(self.respondent_ids[i] for i in idx),
            tuple(self.t_departs[i] for i in idx),
        )


def _as_floats(raw):
    try:
        return [float(v) for v in raw]
    except ValueError:
        return None


def encode(table: InstanceTable) -> FeatureMatrix:
    """Numeric columns pass through; anything else is one-hot encoded with
    the category vocabulary frozen on the whole table, so later splits all
    share one schema. Encoded names concatenate column and value."""
    names, cols = [], []
    for name, _tag in table.columns:
        raw = table.values[name]
        floats = _as_floats(raw)
        if floats is not None:
            names.append(name)
            cols.append(floats)
        else:
            for cat in sorted(set(raw)):
                names.append(f"{name}{cat}")
                cols.append([1.0 if v == cat else 0.0 for v in raw])
    X = np.array(cols, dtype=float).T if cols else np.zeros((table.n, 0))
    return FeatureMatrix(tuple(names), X, tuple(table.labels),
                         tuple(table.respondent_ids), tuple(table.t_departs))


# --- splitting ----------------------------------------------------------------------

def split_holdout(fm: FeatureMatrix, alpha: float = DEFAULT_ALPHA):
    """Chronological holdout: the smallest suffix of whole calendar days
    holding at least ceil(alpha * n) instances."""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if list(fm.t_departs) != sorted(fm.t_departs):
        raise ConfigError("instances must be sorted by departure time")
    n = fm.n
    if n == 0:
        raise ConfigError("cannot split an empty instance set")
    need = math.ceil(alpha * n)
    days = [epoch_date(t) for t in fm.t_departs]
    cut = n
    while cut > 0 and n - cut < need:
        day = days[cut - 1]
        while cut > 0 and days[cut - 1] == day:
            cut -= 1
    if cut == 0:
        raise ConfigError("holdout would consume every calendar day; "
                          "need at least one earlier day for training")
    return fm.take(range(cut)), fm.take(range(cut, n))


def grouped_kfold(fm: FeatureMatrix, k: int, seed: int = 0) -> list:
    """Assign whole respondents to folds, greedily balancing instance
    counts. Returns a list of K sorted index lists."""
    if k < 3:
        raise ConfigError(f"need at least 3 folds for the train/validation/"
                          f"learn roles, got {k}")
    groups = {}
    for i, rid in enumerate(fm.respondent_ids):
        groups.setdefault(rid, []).append(i)
    if len(groups) < k:
        raise ConfigError(f"{len(groups)} respondent groups cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    rids = sorted(groups)
    rng.shuffle(rids)
    rids.sort(key=lambda r: -len(groups[r]))  # stable: ties keep shuffled order
    folds = [[] for _ in range(k)]
    sizes = [0] * k
    for rid in rids:
        j = min(range(k), key=lambda f: (sizes[f], f))
        folds[j].extend(groups[rid])
        sizes[j] += len(groups[rid])
    return [sorted(f) for f in folds]


# --- metrics ------------------------------------------------------------------------

def cohen_kappa(y_true, y_pred) -> float:
    """Chance-corrected agreement; expected agreement from the product of
    the marginals. Degenerate case p_e == 1 is defined as 0."""
    n = len(y_true)
    if n == 0 or n != len(y_pred):
        raise EmptyEvalError("need equally sized, non-empty label sequences")
    labels = sorted({str(v) for v in y_true} | {str(v) for v in y_pred})
    idx = {c: i for i, c in enumerate(labels)}
    m = [[0] * len(labels) for _ in labels]
    for t, p in zip(y_true, y_pred):
        m[idx[str(t)]][idx[str(p)]] += 1
    p_o = sum(m[i][i] for i in range(len(labels))) / n
    row = [sum(r) for r in m]
    col = [sum(m[i][j] for i in range(len(labels))) for j in range(len(labels))]
    p_e = sum(r * c for r, c in zip(row, col)) / (n * n)
    if p_e >= 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def evaluate(model: Model, fm: FeatureMatrix) -> dict:
    if fm.n == 0:
        raise EmptyEvalError("empty test set")
    preds = model.predict(fm.X)
    acc = sum(str(p) == str(t) for p, t in zip(preds, fm.y)) / fm.n
    return {"accuracy": acc, "kappa": cohen_kappa(fm.y, preds)}


def permutation_importance(model: Model, fm: FeatureMatrix,
                           repeats: int = 5, seed: int = 0) -> list:
    """Mean kappa drop when one feature column is shuffled; descending,
    ties broken by feature name."""
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    base = evaluate(model, fm)["kappa"]
    rng = np.random.default_rng(seed)
    out = []
    for j, name in enumerate(fm.names):
        drops = []
        for _ in range(repeats):
            perm = rng.permutation(fm.n)
            Xp = fm.X.copy()
            Xp[:, j] = fm.X[perm, j]
            preds = model.predict(Xp)
            drops.append(base - cohen_kappa(fm.y, preds))
        out.append((name, sum(drops) / repeats))
    out.sort(key=lambda p: (-p[1], p[0]))
    return out


# --- scenario run -------------------------------------------------------------------

@dataclass(frozen=True)
class GridResult:
    method: str
    hyperparams: dict
    fold_kappas: tuple
    fold_accuracies: tuple

    @property
    def mean_kappa(self) -> float:
        return sum(self.fold_kappas) / len(self.fold_kappas)

    @property
    def mean_accuracy(self) -> float:
        return sum(self.fold_accuracies) / len(self.fold_accuracies)


@dataclass(frozen=True)
class ModelReport:
    scenario: str
    n_instances: int
    n_train: int
    n_holdout: int
    k_folds: int
    feature_names: tuple
    grid: tuple               # GridResult entries, method-major order
    best_method: str
    best_hyperparams: dict
    final_accuracy: float
    final_kappa: float
    importance: tuple         # ((feature, mean kappa drop), ...)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_instances": self.n_instances,
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "k_folds": self.k_folds,
            "n_features": len(self.feature_names),
            "grid": [{
                "method": g.method,
                "hyperparams": g.hyperparams,
                "fold_kappas": list(g.fold_kappas),
                "fold_accuracies": list(g.fold_accuracies),
                "mean_kappa": g.mean_kappa,
                "mean_accuracy": g.mean_accuracy,
            } for g in self.grid],
            "best": {"method": self.best_method,
                     "hyperparams": self.best_hyperparams},
            "final": {"accuracy": self.final_accuracy, "kappa": self.final_kappa},
            "importance": [[name, drop] for name, drop in self.importance],
        }

    def rows(self):
        """Flat (scenario, method, hyperparams, fold, kappa, accuracy) rows
        for the results CSV."""
        for g in self.grid:
            h = json.dumps(g.hyperparams, sort_keys=True)
            for k, (kp, ac) in enumerate(zip(g.fold_kappas, g.fold_accuracies)):
                yield (self.scenario, g.method, h, k, kp, ac)


def run_scenario(table: InstanceTable, scenario: Scenario, methods,
                 grids=None, k: int = DEFAULT_FOLDS, alpha: float = DEFAULT_ALPHA,
                 seed: int = 0, importance_repeats: int = 3) -> ModelReport:
    grids = grids if grids is not None else default_grids()
    fm = encode(select_features(table, scenario))
    train_fm, final_fm = split_holdout(fm, alpha)
    folds = grouped_kfold(train_fm, k, seed)
    all_idx = set(range(train_fm.n))

    results = []
    for method in methods:
        if method not in grids:
            raise ConfigError(f"no hyperparameter grid for method {method!r}")
        for h in grids[method]:
            kappas, accs = [], []
            for fold_k in range(k):
                test_idx = folds[fold_k]
                val_idx = folds[(fold_k + 1) % k]
                learn_idx = sorted(all_idx - set(test_idx) - set(val_idx))
                learn = train_fm.take(learn_idx)
                val = train_fm.take(val_idx)
                model = train(method, h, learn.X, learn.y, val.X, val.y, seed=seed)
                metrics = evaluate(model, train_fm.take(test_idx))
                kappas.append(metrics["kappa"])
                accs.append(metrics["accuracy"])
            results.append(GridResult(method, dict(h), tuple(kappas), tuple(accs)))
            log.debug("scenario %s %s %s: mean kappa %.4f",
                      scenario.name, method, h, results[-1].mean_kappa)

    best = max(enumerate(results), key=lambda p: (p[1].mean_kappa, -p[0]))[1]
    final_model = train(best.method, best.hyperparams,
                        train_fm.X, train_fm.y, seed=seed)
    final = evaluate(final_model, final_fm)
    ranking = permutation_importance(final_model, final_fm,
                                     repeats=importance_repeats, seed=seed)
    return ModelReport(
        scenario=scenario.name,
        n_instances=fm.n,
        n_train=train_fm.n,
        n_holdout=final_fm.n,
        k_folds=k,
        feature_names=fm.names,
        grid=tuple(results),
        best_method=best.method,
        best_hyperparams=dict(best.hyperparams),
        final_accuracy=final["accuracy"],
        final_kappa=final["kappa"],
        importance=tuple(ranking),
    )
