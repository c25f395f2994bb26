"""Classical reference models: ridge regression, RBF support vector
regression, and a random forest, plus grid-search cross-validation.

These models are graph-blind: they see the same preprocessed feature matrix
as the network but no adjacency information. Ridge is solved directly via
its normal equations. SVR and the forest wrap scikit-learn (libsvm's SMO
dual solver at KKT tolerance 1e-3, and bootstrap CART trees with
squared-error splits considering all features) behind small model types
that expose the fitted structure.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestRegressor
from sklearn.exceptions import ConvergenceWarning
from sklearn.svm import SVR

from bikevolume.metrics import compute_metrics


@dataclass(frozen=True)
class RidgeModel:
    coef: np.ndarray
    intercept: float
    alpha: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def fit_ridge(X, y, alpha: float) -> RidgeModel:
    """Minimize ||y - Xw - b||^2 + alpha ||w||^2 with an unpenalized intercept.

    Centering removes the intercept from the system, leaving the symmetric
    positive (semi-)definite normal equations (Xc'Xc + alpha I) w = Xc' yc.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-d with one row per target")
    if X.shape[0] < 1:
        raise ValueError("ridge requires at least one row")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")

    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    try:
        coef = np.linalg.solve(gram, Xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "normal equations are singular; use alpha > 0 to regularize"
        ) from exc
    intercept = float(y_mean - x_mean @ coef)
    return RidgeModel(coef=coef, intercept=intercept, alpha=alpha)


@dataclass(frozen=True)
class SvrModel:
    support_coef: np.ndarray  # signed dual coefficients of the support points
    support_points: np.ndarray
    bias: float
    C: float
    gamma: float
    epsilon: float
    _estimator: SVR = field(repr=False, compare=False, default=None)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        # k(a, b) = exp(-gamma ||a - b||^2)
        sq = (
            np.sum(X**2, axis=1)[:, None]
            + np.sum(self.support_points**2, axis=1)[None, :]
            - 2.0 * X @ self.support_points.T
        )
        kernel = np.exp(-self.gamma * np.maximum(sq, 0.0))
        return kernel @ self.support_coef + self.bias


def fit_svr(
    X, y, C: float, gamma: float, epsilon: float = 0.1, tol: float = 1e-3, max_iter: int = -1
) -> SvrModel:
    """Epsilon-insensitive SVR with an RBF kernel, solved in the dual by SMO."""
    if C <= 0 or gamma <= 0 or epsilon < 0:
        raise ValueError("require C > 0, gamma > 0, epsilon >= 0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    est = SVR(kernel="rbf", C=C, gamma=gamma, epsilon=epsilon, tol=tol, max_iter=max_iter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        est.fit(X, y)
    if any(issubclass(w.category, ConvergenceWarning) for w in caught):
        gap = _svr_duality_gap(est, X, y, C, gamma, epsilon)
        raise RuntimeError(
            f"SVR did not converge within {max_iter} iterations (duality gap {gap:.6g})"
        )
    return SvrModel(
        support_coef=est.dual_coef_[0].copy(),
        support_points=est.support_vectors_.copy(),
        bias=float(est.intercept_[0]),
        C=C,
        gamma=gamma,
        epsilon=epsilon,
        _estimator=est,
    )


def _svr_duality_gap(est: SVR, X, y, C, gamma, epsilon) -> float:
    """Primal minus dual objective for the partially solved problem."""
    beta = est.dual_coef_[0]
    sv = est.support_vectors_
    sq = (
        np.sum(sv**2, axis=1)[:, None]
        + np.sum(sv**2, axis=1)[None, :]
        - 2.0 * sv @ sv.T
    )
    K = np.exp(-gamma * np.maximum(sq, 0.0))
    quad = 0.5 * beta @ K @ beta
    y_sv = y[est.support_]
    dual = -quad - epsilon * np.sum(np.abs(beta)) + y_sv @ beta
    pred = est.predict(X)
    slack = np.maximum(np.abs(y - pred) - epsilon, 0.0)
    primal = quad + C * np.sum(slack)
    return float(primal - dual)


@dataclass(frozen=True)
class TreeNode:
    """One node of a fitted regression tree (leaf when feature is None)."""

    feature: int | None
    threshold: float | None
    left: "TreeNode | None"
    right: "TreeNode | None"
    value: float
    n_samples: int

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class ForestHyperparams:
    n_estimators: int = 400
    max_depth: int | None = 20
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True

    def to_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "bootstrap": self.bootstrap,
        }


@dataclass(frozen=True)
class ForestModel:
    hyperparams: ForestHyperparams
    seed: int
    _estimator: RandomForestRegressor = field(repr=False, compare=False, default=None)

    def predict(self, X) -> np.ndarray:
        return self._estimator.predict(np.asarray(X, dtype=np.float64))

    @property
    def n_estimators(self) -> int:
        return self.hyperparams.n_estimators

    def trees(self) -> list[TreeNode]:
        """Fitted trees as explicit (feature, threshold, children, leaf mean) nodes."""
        out = []
        for est in self._estimator.estimators_:
            t = est.tree_
            def build(i: int) -> TreeNode:
                if t.children_left[i] == -1:
                    return TreeNode(None, None, None, None, float(t.value[i][0][0]), int(t.n_node_samples[i]))
                return TreeNode(
                    feature=int(t.feature[i]),
                    threshold=float(t.threshold[i]),
                    left=build(t.children_left[i]),
                    right=build(t.children_right[i]),
                    value=float(t.value[i][0][0]),
                    n_samples=int(t.n_node_samples[i]),
                )
            out.append(build(0))
        return out


def fit_forest(X, y, hp: ForestHyperparams, seed: int) -> ForestModel:
    """Bootstrap-aggregated CART regression trees with squared-error splits.

    Every feature is considered at every split; predictions average the
    trees. Deterministic for a fixed seed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    est = RandomForestRegressor(
        n_estimators=hp.n_estimators,
        criterion="squared_error",
        max_depth=hp.max_depth,
        min_samples_split=hp.min_samples_split,
        min_samples_leaf=hp.min_samples_leaf,
        max_features=1.0,
        bootstrap=hp.bootstrap,
        random_state=seed,
        n_jobs=1,
    )
    est.fit(X, y)
    return ForestModel(hyperparams=hp, seed=seed, _estimator=est)


@dataclass(frozen=True)
class GridSearchSpec:
    model_family: str  # "lr" | "svm" | "rf"
    grid: tuple[dict, ...]
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ValueError("hyperparameter grid is empty")
        if self.folds < 2:
            raise ValueError("cross-validation needs at least 2 folds")


# Grids anchored to the reported tuning ranges and optima
# (alpha 0.1 / C 10, gamma 0.01 / 400 trees, depth 20, split 2, leaf 1).
DEFAULT_GRIDS = {
    "lr": tuple({"alpha": a} for a in (0.0001, 0.001, 0.01, 0.1, 1.0)),
    "svm": tuple(
        {"C": c, "gamma": g}
        for c in (0.1, 1.0, 10.0, 100.0)
        for g in (0.001, 0.01, 0.1, 1.0)
    ),
    "rf": tuple(
        {"n_estimators": n, "max_depth": d, "min_samples_split": s, "min_samples_leaf": l}
        for n in (100, 400, 1000)
        for d in (3, 5, 10, 20, None)
        for s in (2, 10)
        for l in (1, 5)
    ),
}


def fit_baseline(family: str, X, y, params: dict, seed: int = 0):
    if family == "lr":
        return fit_ridge(X, y, alpha=params["alpha"])
    if family == "svm":
        return fit_svr(X, y, C=params["C"], gamma=params["gamma"], epsilon=params.get("epsilon", 0.1))
    if family == "rf":
        hp = ForestHyperparams(
            n_estimators=params.get("n_estimators", 400),
            max_depth=params.get("max_depth", 20),
            min_samples_split=params.get("min_samples_split", 2),
            min_samples_leaf=params.get("min_samples_leaf", 1),
            bootstrap=params.get("bootstrap", True),
        )
        return fit_forest(X, y, hp, seed=seed)
    raise ValueError(f"unknown model family {family!r}")


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Fold id per row; a seeded permutation split into k nearly equal parts."""
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    folds = np.empty(n, dtype=np.int64)
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    start = 0
    for f, size in enumerate(sizes):
        folds[perm[start : start + size]] = f
        start += size
    return folds


def grid_search_cv(spec: GridSearchSpec, X, y) -> tuple[dict, list[dict]]:
    """K-fold cross-validated RMSE per grid point.

    Returns (best_params, score_rows) where score_rows has one entry per
    (grid point, fold). The argmin over mean RMSE wins; ties break toward
    the earliest grid point.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < spec.folds:
        raise ValueError(f"need at least {spec.folds} rows for {spec.folds}-fold CV")
    folds = fold_assignment(n, spec.folds, spec.seed)

    rows: list[dict] = []
    best_params = None
    best_score = np.inf
    for gi, params in enumerate(spec.grid):
        fold_rmse = []
        for f in range(spec.folds):
            held = folds == f
            model = fit_baseline(spec.model_family, X[~held], y[~held], params, seed=spec.seed + f)
            m = compute_metrics(y[held], model.predict(X[held]))
            fold_rmse.append(m.rmse)
            rows.append(
                {
                    "model": spec.model_family,
                    "params_json": json.dumps(params, sort_keys=True),
                    "fold": f,
                    "rmse": m.rmse,
                }
            )
        mean_rmse = float(np.mean(fold_rmse))
        if mean_rmse < best_score:
            best_score = mean_rmse
            best_params = dict(params)
    return best_params, rows
