"""Prototype construction, neighbourhood statistics (NSPD/NSDD) and partial prototypes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, check_nonnegative, check_positive_int, check_same_width, make_rng
from .dataset import TabularDataset, pairwise_distances
from .errors import (
    DimensionMismatch,
    EmptyPrototypeSet,
    IndexOutOfRange,
    NoPrototypes,
    TooFewRows,
    UnlabeledDataset,
    UnknownColumn,
    ValidationError,
)

KMEANS = "kmeans"
PERCENTILE_GRID = "percentile_grid"
MANUAL = "manual"


@dataclass(frozen=True)
class Prototype:
    id: int
    features: np.ndarray
    label: Optional[int] = None
    provenance: str = MANUAL

    def to_dict(self, feature_names: Sequence[str]) -> dict:
        return {
            "id": int(self.id),
            "provenance": self.provenance,
            "features": {n: float(v) for n, v in zip(feature_names, self.features)},
            "label": None if self.label is None else int(self.label),
        }


def prototypes_from_dicts(records) -> list:
    return [
        Prototype(
            id=int(r["id"]),
            features=np.array(list(r["features"].values()), dtype=float),
            label=r.get("label"),
            provenance=r.get("provenance", MANUAL),
        )
        for r in records
    ]


def prototype_matrix(prototypes: Sequence[Prototype]) -> np.ndarray:
    if len(prototypes) == 0:
        raise EmptyPrototypeSet("no prototypes given")
    return np.vstack([np.asarray(p.features, dtype=float) for p in prototypes])


# ------------------------------------------------------------------------ k-means


class KMeansPrototypes(ClusterMixin, TransformerMixin, BaseEstimator):
    """Lloyd's algorithm with seeded k-means++ seeding.

    ``n_init`` seeded restarts are run and the lowest-inertia one is kept
    (the first on ties). Single-threaded numpy so that a fixed ``seed`` gives
    bit-identical centres.
    ``transform`` returns distances to every centre; ``predict`` the index of
    the nearest centre (lowest index on ties).
    """

    def __init__(self, n_prototypes: int = 8, seed: int = 0, max_iter: int = 300, tol: float = 0.0, n_init: int = 10):
        self.n_prototypes = n_prototypes
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init

    def _init_centers(self, X, rng):
        n = X.shape[0]
        k = self.n_prototypes
        chosen = [int(rng.integers(n))]
        d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
        for _ in range(1, k):
            total = d2.sum()
            if total > 0:
                nxt = int(rng.choice(n, p=d2 / total))
            else:
                # every remaining point coincides with a centre
                free = np.setdiff1d(np.arange(n), chosen)
                nxt = int(rng.choice(free))
            chosen.append(nxt)
            d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
        return X[chosen].copy()

    def fit(self, X, y=None):
        X = as_matrix(X)
        k = check_positive_int(self.n_prototypes, "n_prototypes")
        if k > X.shape[0]:
            raise TooFewRows(f"{k} prototypes requested from {X.shape[0]} rows")
        rng = make_rng(self.seed)
        best = None
        for _ in range(check_positive_int(self.n_init, "n_init")):
            run = self._lloyd(X, k, rng)
            if best is None or run[3] < best[3]:
                best = run
        self.cluster_centers_, self.labels_, self.n_iter_, self.inertia_ = best
        self.n_features_in_ = X.shape[1]
        return self

    def _lloyd(self, X, k, rng):
        centers = self._init_centers(X, rng)
        labels = None
        for it in range(1, self.max_iter + 1):
            d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = d.argmin(axis=1)
            new_centers = centers.copy()
            for c in range(k):
                members = new_labels == c
                if members.any():
                    new_centers[c] = X[members].mean(axis=0)
                else:
                    # re-seed an empty cluster at the point farthest from its centre
                    far = int(d[np.arange(X.shape[0]), new_labels].argmax())
                    new_centers[c] = X[far]
                    new_labels[far] = c
            shift = np.abs(new_centers - centers).max()
            centers = new_centers
            converged = labels is not None and np.array_equal(labels, new_labels) and shift <= self.tol
            labels = new_labels
            if converged:
                break
        return centers, labels, it, float(((X - centers[labels]) ** 2).sum())

    def transform(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = as_matrix(X)
        check_same_width(X.shape[1], self.n_features_in_, "X")
        return pairwise_distances(X, self.cluster_centers_)

    def predict(self, X):
        return self.transform(X).argmin(axis=1)

    def prototypes(self) -> list:
        check_is_fitted(self, "cluster_centers_")
        return [Prototype(i, c.copy(), None, KMEANS) for i, c in enumerate(self.cluster_centers_)]


def kmeans_prototypes(data: TabularDataset, k: int, seed: int = 0, max_iter: int = 300, n_init: int = 10) -> list:
    return KMeansPrototypes(k, seed=seed, max_iter=max_iter, n_init=n_init).fit(data.X).prototypes()


# ---------------------------------------------------------------- percentile grid


def _majority(y) -> int:
    return int(np.mean(y) > 0.5)


def percentile_grid_prototypes(
    data: TabularDataset,
    columns: Sequence[str],
    percentiles: Sequence[float] = (10, 50, 90),
    label_tree_depth: int = 2,
) -> list:
    """Cartesian grid of per-column percentiles, labelled by a shallow tree.

    The tree is fit on the two grid columns to predict the dataset label and
    each grid point takes the majority class of its leaf. Columns outside the
    grid are set to their median. Ids run over the first column's
    percentiles in the outer loop.
    """
    y = data.require_labels()
    if len(columns) != 2:
        raise ValidationError("percentile grid needs exactly two columns")
    idx = []
    for c in columns:
        if c not in data.feature_names:
            raise UnknownColumn(f"{data.name} has no column {c!r}")
        idx.append(data.feature_names.index(c))
    pct = np.asarray(percentiles, dtype=float)
    if pct.size == 0 or (pct <= 0).any() or (pct >= 100).any():
        raise ValidationError("percentiles must lie strictly between 0 and 100")
    if label_tree_depth < 0:
        raise ValidationError("label_tree_depth must be >= 0")
    base = np.median(data.X, axis=0)
    grid_a = np.percentile(data.X[:, idx[0]], pct)
    grid_b = np.percentile(data.X[:, idx[1]], pct)
    points = []
    for a in grid_a:
        for b in grid_b:
            p = base.copy()
            p[idx[0]], p[idx[1]] = a, b
            points.append(p)
    points = np.array(points)
    if label_tree_depth == 0 or len(np.unique(y)) == 1:
        labels = np.full(len(points), _majority(y))
    else:
        tree = DecisionTreeClassifier(max_depth=label_tree_depth, random_state=0)
        tree.fit(data.X[:, idx], y.astype(int))
        labels = tree.predict(points[:, idx])
    return [Prototype(i, p, int(l), PERCENTILE_GRID) for i, (p, l) in enumerate(zip(points, labels))]


# ---------------------------------------------------------- neighbourhood stats


def _with_labels(X, y, label_aware: bool, who: str):
    if not label_aware:
        return X
    if y is None:
        raise UnlabeledDataset(f"label-aware distance needs labels for {who}")
    y = np.asarray(y, dtype=float)
    return np.column_stack([X, 1.0 - y, y])


def _prototype_space(prototypes, label_aware: bool):
    P = prototype_matrix(prototypes)
    if label_aware:
        labels = [p.label for p in prototypes]
        if any(l is None for l in labels):
            raise UnlabeledDataset("label-aware distance needs labelled prototypes")
        P = _with_labels(P, labels, True, "prototypes")
    return P


@dataclass(frozen=True)
class NeighbourhoodStats:
    """Per-prototype neighbour counts, proportions and mean distances for two datasets.

    ``mean_dist_*`` and ``nsdd`` hold NaN where a prototype has no neighbours
    on a side; ``comparable`` is False for those prototypes.
    """

    prototype_ids: np.ndarray
    count_d: np.ndarray
    count_dp: np.ndarray
    prop_d: np.ndarray
    prop_dp: np.ndarray
    mean_dist_d: np.ndarray
    mean_dist_dp: np.ndarray
    nspd: np.ndarray
    nsdd: np.ndarray
    comparable: np.ndarray
    metric: str = "euclidean"
    label_aware: bool = False

    def to_dict(self) -> dict:
        def num(v):
            return None if not np.isfinite(v) else float(v)

        rows = []
        for i, pid in enumerate(self.prototype_ids):
            rows.append(
                {
                    "prototype_id": int(pid),
                    "count_d": int(self.count_d[i]),
                    "count_d_prime": int(self.count_dp[i]),
                    "proportion_d": float(self.prop_d[i]),
                    "proportion_d_prime": float(self.prop_dp[i]),
                    "mean_distance_d": num(self.mean_dist_d[i]),
                    "mean_distance_d_prime": num(self.mean_dist_dp[i]),
                    "nspd": float(self.nspd[i]),
                    "nsdd": num(self.nsdd[i]),
                    "nsdd_comparable": bool(self.comparable[i]),
                }
            )
        return {"metric": self.metric, "label_aware": self.label_aware, "prototypes": rows}

    def write_plot_csv(self, path) -> None:
        """Bar-chart data: ``prototype_id,nspd,nsdd`` (empty nsdd when not comparable)."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["prototype_id", "nspd", "nsdd"])
            for pid, a, b in zip(self.prototype_ids, self.nspd, self.nsdd):
                w.writerow([int(pid), repr(float(a)), "" if not np.isfinite(b) else repr(float(b))])


def nearest_prototype(P: np.ndarray, X: np.ndarray, metric: str = "euclidean"):
    """Index of the nearest prototype per row (lowest index on ties) and its distance."""
    D = pairwise_distances(X, P, metric)
    idx = D.argmin(axis=1)
    return idx, D[np.arange(len(idx)), idx]


def neighbourhood_stats(
    prototypes: Sequence[Prototype],
    d: TabularDataset,
    d_prime: TabularDataset,
    metric: str = "euclidean",
    label_aware: bool = False,
) -> NeighbourhoodStats:
    if len(prototypes) == 0:
        raise EmptyPrototypeSet("neighbourhood statistics need at least one prototype")
    P = _prototype_space(prototypes, label_aware)
    Xd = _with_labels(d.X, d.y, label_aware, d.name)
    Xdp = _with_labels(d_prime.X, d_prime.y, label_aware, d_prime.name)
    if Xd.shape[1] != P.shape[1] or Xdp.shape[1] != P.shape[1]:
        raise DimensionMismatch("prototypes and datasets live in different feature spaces")
    k = P.shape[0]
    out = {}
    for side, X in (("d", Xd), ("dp", Xdp)):
        idx, dist = nearest_prototype(P, X, metric)
        counts = np.bincount(idx, minlength=k)
        sums = np.bincount(idx, weights=dist, minlength=k)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        out[side] = (counts, means, X.shape[0])
    (cd, md, n), (cdp, mdp, ndp) = out["d"], out["dp"]
    # one division per entry keeps exact fractions exact
    nspd = (cd * ndp - cdp * n) / (n * ndp)
    comparable = (cd > 0) & (cdp > 0)
    nsdd = np.where(comparable, md - mdp, np.nan)
    return NeighbourhoodStats(
        prototype_ids=np.array([p.id for p in prototypes]),
        count_d=cd,
        count_dp=cdp,
        prop_d=cd / n,
        prop_dp=cdp / ndp,
        mean_dist_d=md,
        mean_dist_dp=mdp,
        nspd=nspd,
        nsdd=nsdd,
        comparable=comparable,
        metric=metric,
        label_aware=label_aware,
    )


# ---------------------------------------------------------- delta neighbourhood


def resolve_delta(delta, distances: np.ndarray) -> float:
    """Turn ``delta`` (a radius or ``{"percentile": q}``) into a radius."""
    if isinstance(delta, dict):
        q = float(delta["percentile"])
        if not 0 < q <= 100:
            raise ValidationError("delta percentile must lie in (0, 100]")
        if distances.size == 0:
            return 0.0
        return float(np.percentile(distances, q))
    return check_nonnegative(delta, "delta")


def prototype_distances(prototype: Prototype, data: TabularDataset, metric="euclidean", label_aware=False):
    P = _prototype_space([prototype], label_aware)
    X = _with_labels(data.X, data.y, label_aware, data.name)
    return pairwise_distances(X, P, metric)[:, 0]


def delta_neighbourhood(
    prototype: Prototype,
    data: TabularDataset,
    delta,
    metric: str = "euclidean",
    label_aware: bool = False,
) -> np.ndarray:
    """Row indices of ``data`` within distance ``delta`` of the prototype.

    ``delta`` may be ``{"percentile": q}``, in which case the radius is the
    q-th percentile (linear interpolation) of the distances to ``data``.
    """
    dist = prototype_distances(prototype, data, metric, label_aware)
    radius = resolve_delta(delta, dist)
    return np.flatnonzero(dist <= radius)


# ---------------------------------------------------------------- feature scores


def importance_ranks(importance) -> np.ndarray:
    """1-based ranks by descending absolute importance; ties go to the lower index.

    Works row-wise on a 2-D array.
    """
    imp = np.abs(np.atleast_2d(np.asarray(importance, dtype=float)))
    n, m = imp.shape
    order = np.argsort(-imp, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(1, m + 1)[None, :]
    return ranks if np.ndim(importance) == 2 else ranks[0]


def _score_matrix(proto_x, proto_rank, nb_X, nb_ranks, c1, c2, c3):
    rank_diff = np.abs(proto_rank[None, :] - nb_ranks)
    abs_rank = 0.5 * proto_rank[None, :] + 0.5 * nb_ranks
    value = np.abs(proto_x[None, :] - nb_X)
    return c1 * rank_diff + c2 * abs_rank + c3 * value


def feature_score(j, prototype_x, neighbour_x, lifim_p, lifim_n, c1, c2, c3) -> float:
    """Penalty of feature ``j``: rank difference, mean absolute rank and value gap, weighted."""
    px = np.asarray(prototype_x, dtype=float)
    nx = np.asarray(neighbour_x, dtype=float)
    lp = np.asarray(lifim_p, dtype=float)
    ln = np.asarray(lifim_n, dtype=float)
    m = px.shape[0]
    if not (nx.shape[0] == lp.shape[0] == ln.shape[0] == m):
        raise DimensionMismatch("prototype, neighbour and importance vectors differ in length")
    if not 0 <= j < m:
        raise IndexOutOfRange(f"feature index {j} outside [0, {m})")
    for c, nm in ((c1, "c1"), (c2, "c2"), (c3, "c3")):
        check_nonnegative(c, nm)
    s = _score_matrix(px, importance_ranks(lp).astype(float), nx[None, :],
                      importance_ranks(ln)[None, :].astype(float), c1, c2, c3)
    return float(s[0, j])


@dataclass(frozen=True)
class PartialPrototype:
    parent_id: int
    indices: tuple
    values: np.ndarray
    scores: np.ndarray
    n_neighbours_d: int
    n_neighbours_dp: int
    empty_sides: tuple = ()
    radius: float = float("nan")

    def to_dict(self, feature_names: Optional[Sequence[str]] = None) -> dict:
        names = [feature_names[j] for j in self.indices] if feature_names is not None else None
        return {
            "parent_id": int(self.parent_id),
            "indices": [int(j) for j in self.indices],
            "features": names,
            "values": [float(v) for v in self.values],
            "selected_scores": [float(self.scores[j]) for j in self.indices],
            "n_neighbours_d": int(self.n_neighbours_d),
            "n_neighbours_d_prime": int(self.n_neighbours_dp),
            "empty_sides": list(self.empty_sides),
            "radius": float(self.radius),
        }


LifimProvider = Callable[[np.ndarray, str], np.ndarray]


def _side_scores(proto_x, proto_rank, rows, provider, side, c1, c2, c3):
    if rows.shape[0] == 0:
        return np.zeros(proto_x.shape[0])
    if c1 == 0 and c2 == 0:
        ranks = np.zeros_like(rows)
    else:
        ranks = importance_ranks(provider(rows, side)).astype(float)
        if ranks.shape != rows.shape:
            raise DimensionMismatch("importance provider returned the wrong shape")
    return _score_matrix(proto_x, proto_rank, rows, ranks, c1, c2, c3).mean(axis=0)


def partial_prototypes(
    prototypes: Sequence[Prototype],
    d: TabularDataset,
    d_prime: TabularDataset,
    K: int,
    c1: float = 0.0,
    c2: float = 0.0,
    c3: float = 1.0,
    delta=None,
    lifim_provider: Optional[LifimProvider] = None,
    metric: str = "euclidean",
    label_aware: bool = False,
    delta_reference: str = "d",
) -> list:
    """Restrict each prototype to its ``K`` lowest-penalty features.

    The per-feature penalty is the mean score over the delta-neighbours in
    ``d`` plus the mean over the delta-neighbours in ``d_prime``; a side with
    no neighbours contributes zero and is listed in ``empty_sides``.
    ``lifim_provider(rows, side)`` returns importances for ``side`` in
    ``{"d", "d_prime"}``; it is not called when ``c1 == c2 == 0``.
    ``delta`` defaults to the 10th-percentile radius; a percentile is resolved
    against ``d`` distances unless ``delta_reference`` is ``"d_prime"`` or
    ``"each"`` (each side uses its own radius).
    """
    if len(prototypes) == 0:
        raise NoPrototypes("partial prototypes need at least one prototype")
    m = d.n_features
    K = check_positive_int(K, "K")
    if K > m:
        raise ValidationError(f"K={K} exceeds the {m} available features")
    for c, nm in ((c1, "c1"), (c2, "c2"), (c3, "c3")):
        check_nonnegative(c, nm)
    if (c1 > 0 or c2 > 0) and lifim_provider is None:
        raise ValidationError("c1 or c2 > 0 needs a feature-importance provider")
    if delta_reference not in ("d", "d_prime", "each"):
        raise ValidationError("delta_reference must be 'd', 'd_prime' or 'each'")
    if delta is None:
        delta = {"percentile": 10.0}
    out = []
    for proto in prototypes:
        px = np.asarray(proto.features, dtype=float)
        if px.shape[0] != m:
            raise DimensionMismatch("prototype length differs from the dataset width")
        dist_d = prototype_distances(proto, d, metric, label_aware)
        dist_dp = prototype_distances(proto, d_prime, metric, label_aware)
        if delta_reference == "each":
            r_d, r_dp = resolve_delta(delta, dist_d), resolve_delta(delta, dist_dp)
        else:
            r = resolve_delta(delta, dist_d if delta_reference == "d" else dist_dp)
            r_d = r_dp = r
        rows_d = d.X[dist_d <= r_d]
        rows_dp = d_prime.X[dist_dp <= r_dp]
        if c1 == 0 and c2 == 0:
            proto_rank = np.zeros(m)
        else:
            proto_rank = importance_ranks(lifim_provider(px[None, :], "d")[0]).astype(float)
        s_total = _side_scores(px, proto_rank, rows_d, lifim_provider, "d", c1, c2, c3) + _side_scores(
            px, proto_rank, rows_dp, lifim_provider, "d_prime", c1, c2, c3
        )
        chosen = np.lexsort((np.arange(m), s_total))[:K]
        empty = tuple(s for s, rows in (("d", rows_d), ("d_prime", rows_dp)) if rows.shape[0] == 0)
        out.append(
            PartialPrototype(
                parent_id=proto.id,
                indices=tuple(int(j) for j in chosen),
                values=px[chosen].copy(),
                scores=s_total,
                n_neighbours_d=rows_d.shape[0],
                n_neighbours_dp=rows_dp.shape[0],
                empty_sides=empty,
                radius=float(r_d),
            )
        )
    return out
