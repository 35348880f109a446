"""Intrinsic feature importance from bootstrapped near-optimal decision trees.

Exact Rashomon-set enumeration is replaced by an approximation: on every
bootstrap sample a handful of diversified greedy trees is fit (feature
subsampling at each node), and the trees whose regularized loss lies within
``epsilon`` of the best of them form that bootstrap's member set. Per-example
attributions are interventional Shapley values of each tree's class-1
probability, averaged first within a bootstrap and then across bootstraps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    as_label_vector,
    as_matrix,
    check_fraction,
    check_nonnegative,
    check_positive_int,
    check_same_width,
    make_rng,
)
from .errors import DimensionMismatch, EmptyBackground, EmptyDataset, UnlabeledDataset, ValidationError

SHAP_CONVENTION = "interventional"
_FACT = np.array([math.factorial(i) for i in range(171)], dtype=float)


# ------------------------------------------------------------------ decision tree


class DecisionTree:
    """Binary tree over 0/1 features stored as flat arrays.

    Node ``i`` is internal when ``feature[i] >= 0``: rows with ``x > 0.5`` go to
    ``right[i]``, the rest to ``left[i]``. ``value[i]`` is the class-1 fraction
    of the training rows reaching the node, ``n0``/``n1`` their class counts.
    """

    def __init__(self, feature, left, right, n0, n1, n_features, max_depth=None, leaf_penalty=0.0):
        self.feature = np.asarray(feature, dtype=int)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.n0 = np.asarray(n0, dtype=float)
        self.n1 = np.asarray(n1, dtype=float)
        self.n_features = int(n_features)
        self.max_depth = max_depth
        self.leaf_penalty = float(leaf_penalty)
        total = self.n0 + self.n1
        self.value = np.divide(self.n1, total, out=np.full_like(total, 0.5), where=total > 0)
        self._paths = None

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def depth(self) -> int:
        return max((len(p) for _, p in self.leaf_paths()), default=0)

    @property
    def leaf_fractions(self) -> np.ndarray:
        leaves = np.flatnonzero(self.is_leaf)
        counts = self.n0[leaves] + self.n1[leaves]
        return counts / counts.sum()

    def used_features(self) -> set:
        return {int(f) for f in self.feature if f >= 0}

    def leaf_paths(self):
        """``[(leaf, [(feature, goes_right), ...]), ...]`` in depth-first order."""
        if self._paths is None:
            paths = []
            stack = [(0, [])]
            while stack:
                node, conds = stack.pop()
                f = self.feature[node]
                if f < 0:
                    paths.append((node, conds))
                else:
                    stack.append((self.right[node], conds + [(int(f), True)]))
                    stack.append((self.left[node], conds + [(int(f), False)]))
            self._paths = paths
        return self._paths

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            rows = np.flatnonzero(internal)
            go_right = X[rows, f[rows]] > 0.5
            node[rows] = np.where(go_right, self.right[node[rows]], self.left[node[rows]])

    def predict_proba1(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba1(X) > 0.5).astype(float)

    def regularized_loss(self, X, y) -> float:
        """Misclassification rate plus ``leaf_penalty`` times the number of leaves."""
        return float(np.mean(self.predict(X) != y) + self.leaf_penalty * self.n_leaves)

    def signature(self) -> str:
        return hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def to_dict(self) -> dict:
        def node(i):
            rec = {"n0": float(self.n0[i]), "n1": float(self.n1[i])}
            if self.feature[i] >= 0:
                rec.update(feature=int(self.feature[i]), left=node(self.left[i]), right=node(self.right[i]))
            return rec

        return {
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "leaf_penalty": self.leaf_penalty,
            "root": node(0),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        feature, left, right, n0, n1 = [], [], [], [], []

        def add(rec):
            i = len(feature)
            feature.append(rec.get("feature", -1))
            left.append(-1)
            right.append(-1)
            n0.append(rec["n0"])
            n1.append(rec["n1"])
            if "feature" in rec:
                left[i] = add(rec["left"])
                right[i] = add(rec["right"])
            return i

        add(d["root"])
        return cls(feature, left, right, n0, n1, d["n_features"], d.get("max_depth"), d.get("leaf_penalty", 0.0))


def _entropy(pos, n):
    p = pos / n
    if p <= 0 or p >= 1:
        return 0.0
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def fit_greedy_tree(X, y, depth: int = 3, leaf_penalty: float = 0.0, seed=0, feature_subsample: float = 1.0):
    """Grow a depth-limited tree by information gain, then prune bottom-up.

    Each node considers a seeded random subset (``feature_subsample``) of the
    features not yet used on its path. After growth a subtree is kept only if
    it strictly lowers misclassification rate + ``leaf_penalty`` * leaves
    relative to collapsing it into a single leaf; growing first lets splits
    with no immediate gain (XOR) survive when their children pay off.
    """
    if y is None:
        raise UnlabeledDataset("tree fitting needs labels")
    X = as_matrix(X)
    y = as_label_vector(y, n_rows=X.shape[0])
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    check_nonnegative(leaf_penalty, "leaf_penalty")
    check_fraction(feature_subsample, "feature_subsample")
    Xb = X > 0.5
    n_total, m = X.shape
    rng = make_rng(seed)
    feature, left, right, n0, n1 = [], [], [], [], []

    def new_node(rows):
        i = len(feature)
        pos = float(y[rows].sum())
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        n1.append(pos)
        n0.append(len(rows) - pos)
        return i

    def errors(i):
        return min(n0[i], n1[i]) if n1[i] != n0[i] else n1[i]

    def build(rows, depth_left, used):
        """Return (node index, subtree cost)."""
        i = new_node(rows)
        leaf_cost = errors(i) / n_total + leaf_penalty
        if depth_left == 0 or n0[i] == 0 or n1[i] == 0:
            return i, leaf_cost
        available = [j for j in range(m) if j not in used]
        if feature_subsample < 1.0 and available:
            k = max(1, int(math.ceil(feature_subsample * len(available))))
            available = sorted(rng.choice(available, size=k, replace=False).tolist())
        n = len(rows)
        parent_h = _entropy(n1[i], n)
        best, best_gain = None, -1.0
        for j in available:
            mask = Xb[rows, j]
            nr = int(mask.sum())
            if nr == 0 or nr == n:
                continue
            pr = float(y[rows][mask].sum())
            pl = n1[i] - pr
            gain = parent_h - (nr * _entropy(pr, nr) + (n - nr) * _entropy(pl, n - nr)) / n
            if gain > best_gain + 1e-12:
                best, best_gain = j, gain
        if best is None:
            return i, leaf_cost
        mask = Xb[rows, best]
        li, lc = build(rows[~mask], depth_left - 1, used | {best})
        ri, rc = build(rows[mask], depth_left - 1, used | {best})
        if lc + rc < leaf_cost - 1e-12:
            feature[i], left[i], right[i] = best, li, ri
            return i, lc + rc
        # collapse: drop the children that were appended after node i
        del feature[i + 1 :], left[i + 1 :], right[i + 1 :], n0[i + 1 :], n1[i + 1 :]
        return i, leaf_cost

    build(np.arange(n_total), depth, frozenset())
    return DecisionTree(feature, left, right, n0, n1, m, depth, leaf_penalty)


class GreedyTreeClassifier(ClassifierMixin, BaseEstimator):
    """sklearn wrapper around :func:`fit_greedy_tree` for 0/1 feature matrices."""

    def __init__(self, max_depth: int = 3, leaf_penalty: float = 0.0, feature_subsample: float = 1.0, seed=0):
        self.max_depth = max_depth
        self.leaf_penalty = leaf_penalty
        self.feature_subsample = feature_subsample
        self.seed = seed

    def fit(self, X, y):
        self.tree_ = fit_greedy_tree(X, y, self.max_depth, self.leaf_penalty, self.seed, self.feature_subsample)
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = self.tree_.n_features
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "tree_")
        p = self.tree_.predict_proba1(as_matrix(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(float)


# ------------------------------------------------------------------- tree Shapley


def tree_shap_paths(tree: DecisionTree, X, background) -> np.ndarray:
    """Interventional Shapley values of ``tree.predict_proba1`` for every row of ``X``.

    Runs in O(leaves * depth) per (row, background row) pair. For one
    background row ``r`` the game is ``v(S) = f(x_S, r_rest)``; a leaf is
    reached iff every feature on its path where only ``x`` takes the leaf's
    branch is in S and every feature where only ``r`` takes it is not. That
    indicator is a game with closed-form Shapley values: ``(a-1)! b! / (a+b)!``
    for each of the ``a`` required features and ``-a! (b-1)! / (a+b)!`` for
    each of the ``b`` excluded ones.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = np.atleast_2d(np.asarray(background, dtype=float))
    if R.shape[0] == 0:
        raise EmptyBackground("Shapley values need a nonempty background sample")
    if X.shape[1] != tree.n_features or R.shape[1] != tree.n_features:
        raise DimensionMismatch("rows and background must match the tree's feature count")
    phi = np.zeros(X.shape)
    Xb, Rb = X > 0.5, R > 0.5
    for leaf, conds in tree.leaf_paths():
        if not conds:
            continue
        js = np.array([c[0] for c in conds])
        dirs = np.array([c[1] for c in conds])
        xs = Xb[:, js] == dirs  # (n, L)
        rs = Rb[:, js] == dirs  # (b, L)
        in_a = xs[:, None, :] & ~rs[None, :, :]
        in_b = ~xs[:, None, :] & rs[None, :, :]
        live = ~(~xs[:, None, :] & ~rs[None, :, :]).any(axis=2)
        a = in_a.sum(axis=2)
        b = in_b.sum(axis=2)
        w_a = np.where(a > 0, _FACT[np.maximum(a - 1, 0)] * _FACT[b] / _FACT[a + b], 0.0)
        w_b = np.where(b > 0, -_FACT[a] * _FACT[np.maximum(b - 1, 0)] / _FACT[a + b], 0.0)
        w_a = w_a * live
        w_b = w_b * live
        contrib = in_a * w_a[:, :, None] + in_b * w_b[:, :, None]  # (n, b, L)
        phi[:, js] += tree.value[leaf] * contrib.mean(axis=1)
    return phi


def tree_shap_enumeration(tree: DecisionTree, X, background) -> np.ndarray:
    """Interventional Shapley values by evaluating every coalition (2**M games).

    Slow reference implementation; meant for M <= 15.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = np.atleast_2d(np.asarray(background, dtype=float))
    if R.shape[0] == 0:
        raise EmptyBackground("Shapley values need a nonempty background sample")
    m = tree.n_features
    if X.shape[1] != m or R.shape[1] != m:
        raise DimensionMismatch("rows and background must match the tree's feature count")
    if m > 20:
        raise ValidationError("subset enumeration is limited to 20 features")
    n_sets = 1 << m
    masks = ((np.arange(n_sets)[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
    sizes = masks.sum(axis=1)
    phi = np.zeros(X.shape)
    for r, x in enumerate(X):
        v = np.empty(n_sets)
        for s in range(n_sets):
            Z = R.copy()
            Z[:, masks[s]] = x[masks[s]]
            v[s] = tree.predict_proba1(Z).mean()
        for i in range(m):
            without = np.flatnonzero(~masks[:, i])
            k = sizes[without]
            w = _FACT[k] * _FACT[m - k - 1] / _FACT[m]
            phi[r, i] = np.sum(w * (v[without | (1 << i)] - v[without]))
    return phi


def lfim_tree_shapley(tree: DecisionTree, x, background, method: str = "path") -> np.ndarray:
    """Per-feature attribution of one tree's class-1 probability at ``x``.

    ``method`` is ``"path"`` (polynomial), ``"enumeration"`` (all coalitions)
    or ``"auto"`` (enumeration when the tree has at most 15 features).
    """
    if method == "auto":
        method = "enumeration" if tree.n_features <= 15 else "path"
    fn = {"path": tree_shap_paths, "enumeration": tree_shap_enumeration}.get(method)
    if fn is None:
        raise ValidationError(f"unknown Shapley method {method!r}")
    out = fn(tree, x, background)
    return out[0] if np.ndim(x) == 1 else out


# --------------------------------------------------------------------- ensembles


@dataclass
class BootstrapSet:
    index: int
    rows: np.ndarray
    best_loss: float
    members: list
    member_losses: list
    n_candidates: int


@dataclass
class RashomonEnsemble:
    """Near-optimal trees per bootstrap sample; see the module docstring."""

    bootstraps: list
    epsilon: float
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def n_bootstraps(self) -> int:
        return len(self.bootstraps)

    @property
    def n_features(self) -> int:
        return self.bootstraps[0].members[0].n_features

    def weighted_trees(self):
        """``(tree, weight)`` pairs with weight ``1 / (B * |members of its bootstrap|)``."""
        B = len(self.bootstraps)
        for bs in self.bootstraps:
            w = 1.0 / (B * len(bs.members))
            for t in bs.members:
                yield t, w

    def to_dict(self) -> dict:
        return {
            "approximation": "bootstrap + diversified greedy trees filtered to within epsilon of the best candidate",
            "epsilon": self.epsilon,
            "seed": self.seed,
            "params": self.params,
            "bootstraps": [
                {
                    "index": bs.index,
                    "best_loss": bs.best_loss,
                    "n_candidates": bs.n_candidates,
                    "member_losses": bs.member_losses,
                    "members": [t.to_dict() for t in bs.members],
                }
                for bs in self.bootstraps
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RashomonEnsemble":
        bss = [
            BootstrapSet(
                index=b["index"],
                rows=np.empty(0, dtype=int),
                best_loss=b["best_loss"],
                members=[DecisionTree.from_dict(t) for t in b["members"]],
                member_losses=list(b["member_losses"]),
                n_candidates=b["n_candidates"],
            )
            for b in d["bootstraps"]
        ]
        return cls(bss, d["epsilon"], d["seed"], d.get("params", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")


def build_ensemble(
    X,
    y,
    n_bootstraps: int = 10,
    epsilon: float = 0.01,
    depth: int = 3,
    leaf_penalty: float = 0.01,
    candidates_per_bootstrap: int = 5,
    seed: int = 0,
    feature_subsample: float = 0.7,
) -> RashomonEnsemble:
    """Fit candidate trees on ``n_bootstraps`` resamples and keep the near-optimal ones.

    Bootstrap ``b`` draws N rows with replacement from ``default_rng([seed, b])``;
    its first candidate uses every feature, the others use
    ``feature_subsample`` with per-candidate seeds ``[seed, b, c]``. Members
    are candidates whose regularized loss on the bootstrap is within
    ``epsilon`` of the bootstrap's best.
    """
    X = as_matrix(X)
    if y is None:
        raise UnlabeledDataset("ensembles need labels")
    y = as_label_vector(y, n_rows=X.shape[0])
    B = check_positive_int(n_bootstraps, "n_bootstraps")
    C = check_positive_int(candidates_per_bootstrap, "candidates_per_bootstrap")
    epsilon = check_nonnegative(epsilon, "epsilon")
    n = X.shape[0]
    bootstraps = []
    for b in range(B):
        rows = np.random.default_rng([seed, b]).integers(0, n, size=n)
        Xb, yb = X[rows], y[rows]
        cands, losses = [], []
        for c in range(C):
            frac = 1.0 if c == 0 else feature_subsample
            t = fit_greedy_tree(Xb, yb, depth, leaf_penalty, [seed, b, c], frac)
            cands.append(t)
            losses.append(t.regularized_loss(Xb, yb))
        best = min(losses)
        keep = [i for i, l in enumerate(losses) if l <= best + epsilon + 1e-12]
        bootstraps.append(
            BootstrapSet(b, rows, best, [cands[i] for i in keep], [losses[i] for i in keep], C)
        )
    params = dict(
        n_bootstraps=B,
        depth=depth,
        leaf_penalty=leaf_penalty,
        candidates_per_bootstrap=C,
        feature_subsample=feature_subsample,
    )
    return RashomonEnsemble(bootstraps, epsilon, seed, params)


def lifim(ensemble: RashomonEnsemble, X, background, method: str = "path", absolute: bool = False) -> np.ndarray:
    """Bootstrap- and member-averaged tree attributions for each row of ``X``.

    With ``absolute=True`` each tree's attribution is replaced by its
    magnitude before averaging. Identical trees are attributed once and
    reused, but still count once per appearance in the average.
    """
    single = np.ndim(X) == 1
    X = np.atleast_2d(np.asarray(X, dtype=float))
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.shape[0] == 0:
        raise EmptyBackground("Shapley values need a nonempty background sample")
    cache = {}
    out = np.zeros(X.shape)
    for tree, w in ensemble.weighted_trees():
        key = tree.signature()
        if key not in cache:
            phi = lfim_tree_shapley(tree, X, background, method)
            cache[key] = np.abs(phi) if absolute else phi
        out += w * cache[key]
    return out[0] if single else out


def gifim(ensemble: RashomonEnsemble, X, background, method: str = "path", absolute: bool = False) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise EmptyDataset("global importance of an empty dataset")
    return lifim(ensemble, X, background, method, absolute).mean(axis=0)


# -------------------------------------------------------------------- estimator


class RashomonImportance(TransformerMixin, BaseEstimator):
    """Local intrinsic feature importance as a transformer.

    ``fit(X, y)`` builds the ensemble on 0/1 features and draws a seeded
    background of ``min(N, background_size)`` training rows; ``transform``
    returns one attribution row per input row and ``global_importance`` their
    mean. ``attribution="absolute"`` uses per-tree Shapley magnitudes, which
    keeps global averages from cancelling to zero.
    """

    def __init__(
        self,
        n_bootstraps: int = 10,
        epsilon: float = 0.01,
        max_depth: int = 3,
        leaf_penalty: float = 0.01,
        candidates_per_bootstrap: int = 5,
        feature_subsample: float = 0.7,
        background_size: int = 128,
        shap_method: str = "path",
        attribution: str = "signed",
        seed: int = 0,
    ):
        self.n_bootstraps = n_bootstraps
        self.epsilon = epsilon
        self.max_depth = max_depth
        self.leaf_penalty = leaf_penalty
        self.candidates_per_bootstrap = candidates_per_bootstrap
        self.feature_subsample = feature_subsample
        self.background_size = background_size
        self.shap_method = shap_method
        self.attribution = attribution
        self.seed = seed

    def fit(self, X, y):
        X = as_matrix(X)
        self.ensemble_ = build_ensemble(
            X,
            y,
            self.n_bootstraps,
            self.epsilon,
            self.max_depth,
            self.leaf_penalty,
            self.candidates_per_bootstrap,
            self.seed,
            self.feature_subsample,
        )
        k = min(X.shape[0], check_positive_int(self.background_size, "background_size"))
        rows = np.sort(np.random.default_rng([self.seed, 7919]).choice(X.shape[0], size=k, replace=False))
        self.background_ = X[rows]
        self.n_features_in_ = X.shape[1]
        self._X_fit = X
        return self

    def transform(self, X):
        check_is_fitted(self, "ensemble_")
        X = as_matrix(X)
        check_same_width(X.shape[1], self.n_features_in_, "X")
        if self.attribution not in ("signed", "absolute"):
            raise ValidationError("attribution must be 'signed' or 'absolute'")
        return lifim(self.ensemble_, X, self.background_, self.shap_method, self.attribution == "absolute")

    def global_importance(self, X=None) -> np.ndarray:
        check_is_fitted(self, "ensemble_")
        return self.transform(self._X_fit if X is None else X).mean(axis=0)


@dataclass(frozen=True)
class ImportanceVector:
    values: np.ndarray
    provenance: str  # "lfim" | "lifim" | "gifim"
    subject: str
    feature_names: tuple = ()
    convention: str = SHAP_CONVENTION

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "subject": self.subject,
            "convention": self.convention,
            "values": {n: float(v) for n, v in zip(self.feature_names, self.values)},
        }


def write_importance_csv(vectors: Sequence[ImportanceVector], path) -> None:
    """Grouped-bar data: one ``feature,value,provenance,subject`` row per entry."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "value", "provenance", "subject"])
        for vec in vectors:
            for name, v in zip(vec.feature_names, vec.values):
                w.writerow([name, repr(float(v)), vec.provenance, vec.subject])


class LifimProvider:
    """Importance callback for partial prototypes: ``provider(rows, side)``.

    Holds one fitted :class:`RashomonImportance` per dataset side. When a
    binarization scheme is given, raw rows are binarized first and the
    attributions of all thresholds of a source column are summed back onto it.
    """

    def __init__(self, model_d: RashomonImportance, model_dp: RashomonImportance, scheme=None, n_source=None):
        self.models = {"d": model_d, "d_prime": model_dp}
        self.scheme = scheme
        self.n_source = n_source

    def __call__(self, rows, side: str) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if self.scheme is None:
            return self.models[side].transform(rows)
        phi = self.models[side].transform(self.scheme.transform(rows))
        out = np.zeros((rows.shape[0], self.n_source or rows.shape[1]))
        for k, j in enumerate(self.scheme.output_sources):
            out[:, j] += phi[:, k]
        return out
