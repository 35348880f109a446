"""Influential-example explanations.

A logistic discriminator is trained to tell the intrinsic-importance rows of
one dataset from those of the other; every row is then scored with the
first-order influence of its removal on the discriminator's loss, and the
highest-scoring rows of the second dataset are returned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import as_label_vector, as_matrix, check_positive_int
from .dataset import InfoGainBinarizer, TabularDataset, concat
from .errors import (
    DimensionMismatch,
    EmptyRemainder,
    IdenticalGifims,
    NonConvergence,
    SchemaMismatch,
    SingleClass,
    SingularHessian,
    ValidationError,
)
from .rashomon import RashomonImportance

DEFAULT_L2 = 1e-2


# ------------------------------------------------------------ logistic regression


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    intercept: float
    l2: float
    grad_norm: float
    n_iter: int
    converged: bool
    objective_history: tuple = ()
    class_weight: Optional[tuple] = None

    @property
    def theta(self) -> np.ndarray:
        return np.append(self.coef, self.intercept)

    def decision_function(self, X) -> np.ndarray:
        X = _rows(X, self.coef.shape[0])
        return X @ self.coef + self.intercept

    def predict_proba1(self, X) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba1(X) > 0.5).astype(float)

    def diagnostics(self) -> dict:
        return {
            "l2": self.l2,
            "grad_norm": self.grad_norm,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "class_weight": None if self.class_weight is None else list(self.class_weight),
            "solver": "newton (cholesky, backtracking)",
        }


def _rows(X, m: int) -> np.ndarray:
    """``X`` as an ``(n, m)`` matrix; a 1-D input is one row."""
    X = np.asarray(X, dtype=float)
    return X if X.ndim == 2 else X.reshape(1 if m == 0 else -1, m)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _design(X):
    return np.column_stack([X, np.ones(X.shape[0])])


def _losses(theta, Z, y):
    """Per-row log-loss, computed stably."""
    z = Z @ theta
    return np.logaddexp(0.0, z) - y * z


def _objective(theta, Z, y, w, n_norm, l2):
    return float(np.dot(w, _losses(theta, Z, y)) / n_norm + 0.5 * l2 * theta @ theta)


def _gradient(theta, Z, y, w, n_norm, l2):
    p = _sigmoid(Z @ theta)
    return Z.T @ (w * (p - y)) / n_norm + l2 * theta


def _hessian(theta, Z, w, n_norm, l2):
    p = _sigmoid(Z @ theta)
    return (Z * (w * p * (1 - p))[:, None]).T @ Z / n_norm + l2 * np.eye(Z.shape[1])


def _class_weights(y, class_weight):
    if class_weight is None:
        return np.ones_like(y), None
    if class_weight == "balanced":
        n, n1 = len(y), y.sum()
        c = (n / (2.0 * (n - n1)), n / (2.0 * n1))
    else:
        c = (float(class_weight[0]), float(class_weight[1]))
    return np.where(y == 1, c[1], c[0]), c


def _objective_change(theta, cand, Z, y, w, n_norm, l2):
    """``objective(cand) - objective(theta)`` without cancellation.

    Near the optimum the two objectives agree to every printed digit, so the
    difference is formed per row: ``softplus(z + d) - softplus(z)`` equals
    ``log1p(sigmoid(z) * expm1(d))``, which stays accurate for small ``d``.
    """
    z = Z @ theta
    d = Z @ (cand - theta)
    small = np.abs(d) <= 1.0
    with np.errstate(over="ignore"):
        near = np.log1p(_sigmoid(z) * np.expm1(np.where(small, d, 0.0)))
    far = np.logaddexp(0.0, z + d) - np.logaddexp(0.0, z)
    rows = np.where(small, near, far) - y * d
    return float(np.dot(w, rows) / n_norm + 0.5 * l2 * (cand - theta) @ (cand + theta))


def _newton(Z, y, w, n_norm, l2, tol, max_iter, theta0=None):
    theta = np.zeros(Z.shape[1]) if theta0 is None else np.array(theta0, dtype=float)
    f = _objective(theta, Z, y, w, n_norm, l2)
    history = [f]
    g = _gradient(theta, Z, y, w, n_norm, l2)
    it = 0
    while np.linalg.norm(g) > tol and it < max_iter:
        it += 1
        H = _hessian(theta, Z, w, n_norm, l2)
        step = linalg.cho_solve(linalg.cho_factor(H), g)
        t = 1.0
        while True:
            cand = theta - t * step
            change = _objective_change(theta, cand, Z, y, w, n_norm, l2)
            if change <= -1e-4 * t * (g @ step) or t < 1e-12:
                break
            t *= 0.5
        if change > 0 or not np.any(cand != theta):
            # no descent possible at machine precision
            break
        theta, f = cand, f + change
        history.append(f)
        g = _gradient(theta, Z, y, w, n_norm, l2)
    return theta, float(np.linalg.norm(g)), it, tuple(history)


def fit_logistic(
    features,
    labels,
    l2: float = DEFAULT_L2,
    tol: float = 1e-10,
    max_iter: int = 100,
    class_weight=None,
    sample_weight=None,
    raise_on_failure: bool = True,
) -> LogisticModel:
    """Minimise mean log-loss + ``l2 / 2 * ||theta||^2`` by Newton's method from zero.

    ``theta`` includes the intercept, so the Hessian is positive definite for
    any ``l2 > 0``. ``class_weight`` is None, ``"balanced"`` or a ``(w0, w1)``
    pair. ``sample_weight`` multiplies per-row losses while the normaliser
    stays the row count (a zero weight removes a row from the sum only).
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = as_label_vector(labels, n_rows=X.shape[0])
    if l2 <= 0:
        raise ValidationError("l2 must be > 0 so the Hessian stays invertible")
    w, cw = _class_weights(y, class_weight)
    if sample_weight is not None:
        w = w * np.asarray(sample_weight, dtype=float)
    active = w > 0
    if len(np.unique(y[active])) < 2:
        raise SingleClass("the discriminator needs at least one row of each class")
    theta, gnorm, it, hist = _newton(_design(X), y, w, X.shape[0], l2, tol, max_iter)
    model = LogisticModel(theta[:-1], float(theta[-1]), l2, gnorm, it, gnorm <= tol, hist, cw)
    if raise_on_failure and not model.converged:
        raise NonConvergence(f"gradient norm {gnorm:.3g} > tol {tol:.3g} after {it} iterations", model)
    return model


class NewtonLogisticRegression(ClassifierMixin, BaseEstimator):
    """L2-regularised logistic regression solved exactly by Newton's method."""

    def __init__(self, l2: float = DEFAULT_L2, tol: float = 1e-10, max_iter: int = 100, class_weight=None):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.class_weight = class_weight

    def fit(self, X, y):
        X = as_matrix(X)
        self.model_ = fit_logistic(X, y, self.l2, self.tol, self.max_iter, self.class_weight)
        self.coef_ = self.model_.coef[None, :]
        self.intercept_ = np.array([self.model_.intercept])
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(as_matrix(X))

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(float)


# ---------------------------------------------------------------------- influence


def _row_gradients(model: LogisticModel, X, y):
    Z = _design(_rows(X, model.coef.shape[0]))
    p = _sigmoid(Z @ model.theta)
    return Z * (p - y)[:, None]


def influence_scores(model: LogisticModel, train_X, train_y, test_X, test_y, sample_weight=None) -> np.ndarray:
    """Mean test-loss gradient times inverse Hessian times each training-row gradient.

    The Hessian is that of the regularised training objective at the fitted
    parameters and is factorised once. A positive score means that removing
    the row is predicted to increase the test loss; ``score / N_train``
    approximates the size of that change.
    """
    train_X = _rows(train_X, model.coef.shape[0])
    test_X = _rows(test_X, model.coef.shape[0])
    train_y = as_label_vector(train_y, n_rows=train_X.shape[0])
    test_y = as_label_vector(test_y, n_rows=test_X.shape[0])
    if test_X.shape[0] == 0:
        raise ValidationError("influence needs a nonempty test set")
    w, _ = _class_weights(train_y, None if model.class_weight is None else model.class_weight)
    if sample_weight is not None:
        w = w * np.asarray(sample_weight, dtype=float)
    H = _hessian(model.theta, _design(train_X), w, train_X.shape[0], model.l2)
    try:
        factor = linalg.cho_factor(H)
    except linalg.LinAlgError as exc:
        raise SingularHessian(str(exc)) from exc
    g_test = _row_gradients(model, test_X, test_y).mean(axis=0)
    v = linalg.cho_solve(factor, g_test)
    return (_row_gradients(model, train_X, train_y) * w[:, None]) @ v


def loo_retrain_oracle(train_X, train_y, test_X, test_y, l2: float = DEFAULT_L2, tol: float = 1e-12,
                       class_weight=None) -> np.ndarray:
    """Refit without each training row and return ``L_test(without) - L_test(full)``.

    The removed row's loss is dropped from the sum while the 1/N normaliser is
    kept, so the refit solves exactly the leave-one-out problem whose
    first-order expansion gives :func:`influence_scores` divided by N.
    """
    train_X = np.asarray(train_X, dtype=float)
    if train_X.ndim == 1:
        train_X = train_X.reshape(-1, 1)
    train_y = as_label_vector(train_y, n_rows=train_X.shape[0])
    test_X = np.asarray(test_X, dtype=float).reshape(-1, train_X.shape[1])
    test_y = as_label_vector(test_y, n_rows=test_X.shape[0])
    full = fit_logistic(train_X, train_y, l2, tol, class_weight=class_weight)
    Zt = _design(test_X)
    base = _losses(full.theta, Zt, test_y).mean()
    Z = _design(train_X)
    w0, _ = _class_weights(train_y, class_weight)
    n = train_X.shape[0]
    out = np.empty(n)
    for i in range(n):
        w = w0.copy()
        w[i] = 0.0
        if len(np.unique(train_y[w > 0])) < 2:
            raise SingleClass(f"removing row {i} leaves a single class")
        theta, gnorm, _, _ = _newton(Z, train_y, w, n, l2, tol, 100, theta0=full.theta)
        if gnorm > max(tol, 1e-9):
            raise NonConvergence(f"leave-one-out refit {i} stopped at gradient norm {gnorm:.3g}")
        out[i] = _losses(theta, Zt, test_y).mean() - base
    return out


def alignment(g_d, g_dp, g_dp_minus_s) -> float:
    """Fractional reduction of the l2 gap to ``g_d`` when ``g_dp`` becomes ``g_dp_minus_s``."""
    g_d, g_dp, g_r = (np.asarray(v, dtype=float).ravel() for v in (g_d, g_dp, g_dp_minus_s))
    if not (g_d.shape == g_dp.shape == g_r.shape):
        raise DimensionMismatch("importance vectors differ in length")
    before = np.linalg.norm(g_d - g_dp)
    if before == 0:
        raise IdenticalGifims("alignment is undefined when both global importances coincide")
    return float((before - np.linalg.norm(g_d - g_r)) / before)


def top_k_indices(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores; ties go to the lower index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(scores.size), -scores))[:k]


# ---------------------------------------------------------------- explanations


@dataclass
class InfluenceReport:
    scores: np.ndarray  # rows of d_prime
    scores_d: np.ndarray  # rows of d; computed and exported, never selected
    selected_ids: np.ndarray
    alignment: Optional[float]
    discriminator_accuracy: float
    gifim_d: np.ndarray
    gifim_dp: np.ndarray
    gifim_dp_minus_s: Optional[np.ndarray]
    feature_names: tuple = ()
    diagnostics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else [float(x) for x in v]

        return {
            "scores": vec(self.scores),
            "scores_d": vec(self.scores_d),
            "selected_ids": [int(i) for i in self.selected_ids],
            "alignment": self.alignment,
            "discriminator_accuracy": float(self.discriminator_accuracy),
            "gifim_triplet": {
                "feature_names": list(self.feature_names),
                "d": vec(self.gifim_d),
                "d_prime": vec(self.gifim_dp),
                "d_prime_minus_s": vec(self.gifim_dp_minus_s),
            },
            "diagnostics": self.diagnostics,
            "notes": list(self.notes),
        }

    def write_csv(self, path) -> None:
        """Overlay data: ``row_id,score,selected`` for every row of d_prime."""
        chosen = set(int(i) for i in self.selected_ids)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "score", "selected"])
            for i, s in enumerate(self.scores):
                w.writerow([i, repr(float(s)), int(i in chosen)])


class InfluentialExampleExplainer(BaseEstimator):
    """Find rows of ``d_prime`` whose removal best aligns intrinsic importances with ``d``.

    ``fit(d, d_prime)`` binarizes (when needed), fits one importance model per
    dataset, trains the discriminator on the stacked importance rows (``d``
    labelled 1, ``d_prime`` 0) and scores every row by influence against the
    stacked set. ``explain(K)`` selects the top rows and recomputes the global
    importance of the remainder with a freshly fit importance model.
    """

    def __init__(self, importance=None, l2: float = DEFAULT_L2, class_weight=None,
                 max_thresholds_per_column: int = 3, seed: int = 0):
        self.importance = importance
        self.l2 = l2
        self.class_weight = class_weight
        self.max_thresholds_per_column = max_thresholds_per_column
        self.seed = seed

    def _importance_model(self):
        # magnitudes by default: signed attributions average out to ~0 per dataset
        base = self.importance if self.importance is not None else RashomonImportance(attribution="absolute")
        return clone(base).set_params(seed=self.seed)

    def fit(self, d: TabularDataset, d_prime: TabularDataset):
        d.require_labels()
        d_prime.require_labels()
        if d.feature_names != d_prime.feature_names:
            raise SchemaMismatch("both datasets need the same columns")
        if d.binary_mask.all() and d_prime.binary_mask.all():
            self.scheme_ = None
            Xd, Xdp, names = d.X, d_prime.X, d.feature_names
        else:
            pooled = concat([d, d_prime])
            b = InfoGainBinarizer(self.max_thresholds_per_column, d.feature_names, pooled.binary_mask)
            self.scheme_ = b.fit(pooled.X, pooled.y).scheme_
            Xd, Xdp, names = self.scheme_.transform(d.X), self.scheme_.transform(d_prime.X), self.scheme_.output_names
        self.feature_names_ = tuple(names)
        self.Xd_, self.yd_ = np.asarray(Xd), d.y
        self.Xdp_, self.ydp_ = np.asarray(Xdp), d_prime.y
        self.model_d_ = self._importance_model().fit(self.Xd_, self.yd_)
        self.model_dp_ = self._importance_model().fit(self.Xdp_, self.ydp_)
        self.lifim_d_ = self.model_d_.transform(self.Xd_)
        self.lifim_dp_ = self.model_dp_.transform(self.Xdp_)
        Z = np.vstack([self.lifim_d_, self.lifim_dp_])
        member = np.concatenate([np.ones(len(self.lifim_d_)), np.zeros(len(self.lifim_dp_))])
        self.discriminator_ = fit_logistic(Z, member, self.l2, class_weight=self.class_weight)
        self.accuracy_ = float(np.mean(self.discriminator_.predict(Z) == member))
        scores = influence_scores(self.discriminator_, Z, member, Z, member)
        self.scores_d_ = scores[: len(self.lifim_d_)]
        self.scores_dp_ = scores[len(self.lifim_d_):]
        self.gifim_d_ = self.lifim_d_.mean(axis=0)
        self.gifim_dp_ = self.lifim_dp_.mean(axis=0)
        return self

    def remainder_gifim(self, removed) -> np.ndarray:
        check_is_fitted(self, "scores_dp_")
        keep = np.setdiff1d(np.arange(self.Xdp_.shape[0]), np.asarray(removed, dtype=int))
        if keep.size == 0:
            raise EmptyRemainder("every row of d_prime was removed")
        Xr, yr = self.Xdp_[keep], self.ydp_[keep]
        if len(np.unique(yr)) < 2:
            # a single-class remainder has a constant-tree ensemble: zero importance
            return np.zeros(self.Xdp_.shape[1])
        return self._importance_model().fit(Xr, yr).global_importance()

    def explain(self, K: int) -> InfluenceReport:
        check_is_fitted(self, "scores_dp_")
        K = check_positive_int(K, "K")
        n_dp = self.Xdp_.shape[0]
        if K > n_dp:
            raise ValidationError(f"K={K} exceeds the {n_dp} rows of d_prime")
        selected = top_k_indices(self.scores_dp_, K)
        notes = []
        g_rem = self.remainder_gifim(selected)
        try:
            align = alignment(self.gifim_d_, self.gifim_dp_, g_rem)
        except IdenticalGifims:
            align = None
            notes.append("alignment undefined: the two global importances are identical")
        diag = self.discriminator_.diagnostics()
        diag.update(
            shap_convention="interventional",
            importance_params=self._importance_model().get_params(),
            binarization=None if self.scheme_ is None else self.scheme_.to_dict(),
            tool_defaults="discriminator l2 and solver are tool choices",
        )
        return InfluenceReport(
            scores=self.scores_dp_,
            scores_d=self.scores_d_,
            selected_ids=selected,
            alignment=align,
            discriminator_accuracy=self.accuracy_,
            gifim_d=self.gifim_d_,
            gifim_dp=self.gifim_dp_,
            gifim_dp_minus_s=g_rem,
            feature_names=self.feature_names_,
            diagnostics=diag,
            notes=notes,
        )

    def alignment_curve(self, fractions) -> list:
        """Alignment after removing the top ``ceil(f * N')`` rows, for each fraction ``f``."""
        check_is_fitted(self, "scores_dp_")
        n_dp = self.Xdp_.shape[0]
        order = top_k_indices(self.scores_dp_, n_dp)
        out = []
        for f in fractions:
            k = int(np.ceil(f * n_dp))
            out.append(alignment(self.gifim_d_, self.gifim_dp_, self.remainder_gifim(order[:k])))
        return out


def top_k_influential(d: TabularDataset, d_prime: TabularDataset, K: int, importance=None,
                      l2: float = DEFAULT_L2, seed: int = 0, class_weight=None) -> InfluenceReport:
    if K > d_prime.n_rows:
        raise ValidationError(f"K={K} exceeds the {d_prime.n_rows} rows of d_prime")
    explainer = InfluentialExampleExplainer(importance, l2, class_weight, seed=seed)
    return explainer.fit(d, d_prime).explain(K)
