"""Evaluation metrics and sweeps.

Ordering metrics (random triplet accuracy, global permutation accuracy), the
partial-prototype faithfulness and penalty-weight tradeoff sweeps, the
influence-versus-retraining check and the removal-fraction alignment sweep.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import clone

from ._validation import check_positive_int, make_rng
from .dataset import (
    InfoGainBinarizer,
    TabularDataset,
    apply_normalizer,
    concat,
    fit_normalizer,
    pairwise_distances,
)
from .errors import LengthMismatch, TooFewItems, ValidationError
from .influence import (
    DEFAULT_L2,
    InfluentialExampleExplainer,
    fit_logistic,
    influence_scores,
    loo_retrain_oracle,
)
from .prototypes import (
    Prototype,
    importance_ranks,
    kmeans_prototypes,
    partial_prototypes,
    prototype_distances,
    resolve_delta,
)
from .rashomon import LifimProvider, RashomonImportance
from .synthetic import logistic_task, planted_shift_pair, prototype_corpus

# ---------------------------------------------------------------- ordering metrics


def _sign_agree(a, b):
    return np.sign(a) == np.sign(b)


def random_triplet_accuracy(dist_a, dist_b, n_trials: int = 1000, seed=0) -> float:
    """Share of random anchored triplets ordered the same way by both distance sources.

    Square 2-D inputs are pairwise distance matrices: a triplet ``(i; j, k)``
    compares ``d(i, j)`` with ``d(i, k)``. 1-D inputs are distances from one
    common anchor, and ``(j, k)`` compares ``d[j]`` with ``d[k]``. A tie agrees
    only with a tie.
    """
    A = np.asarray(dist_a, dtype=float)
    B = np.asarray(dist_b, dtype=float)
    if A.shape != B.shape:
        raise LengthMismatch(f"distance sources differ in shape: {A.shape} vs {B.shape}")
    if A.ndim == 2 and A.shape[0] != A.shape[1]:
        raise ValidationError("pairwise distances must form a square matrix")
    if A.ndim not in (1, 2):
        raise ValidationError("distances must be a vector or a square matrix")
    n = A.shape[0]
    if n < 3:
        raise TooFewItems(f"triplets need at least 3 items, got {n}")
    n_trials = check_positive_int(n_trials, "n_trials")
    rng = make_rng(seed)
    # three distinct indices per trial without a Python loop
    i = rng.integers(0, n, n_trials)
    j = (i + 1 + rng.integers(0, n - 1, n_trials)) % n
    k = _third_index(i, j, rng.integers(0, n - 2, n_trials))
    if A.ndim == 2:
        da = A[i, j] - A[i, k]
        db = B[i, j] - B[i, k]
    else:
        da = A[j] - A[k]
        db = B[j] - B[k]
    return float(np.mean(_sign_agree(da, db)))


def _third_index(i, j, r):
    """Map ``r`` in ``[0, n-2)`` onto the indices other than ``i`` and ``j``."""
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    k = r + (r >= lo)
    return k + (k >= hi)


def global_permutation_accuracy(dist_a, dist_b) -> float:
    """Fraction of positions where the stable argsorts of both arrays hold the same element."""
    a = np.asarray(dist_a, dtype=float).ravel()
    b = np.asarray(dist_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"arrays differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise TooFewItems("permutation accuracy needs at least one element")
    return float(np.mean(np.argsort(a, kind="stable") == np.argsort(b, kind="stable")))


# ------------------------------------------------------------------ sweep results


@dataclass
class SweepResult:
    kind: str
    records: list
    seeds: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def columns(self) -> list:
        cols = []
        for r in self.records:
            cols.extend(c for c in r if c not in cols)
        return cols

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    def mean_by(self, key: str, value: str, where: Optional[dict] = None) -> dict:
        """Mean of ``value`` grouped by ``key``, optionally filtered by ``where``."""
        groups = {}
        for r in self.records:
            if where and any(r.get(k) != v for k, v in where.items()):
                continue
            groups.setdefault(r[key], []).append(r[value])
        return {k: float(np.mean(v)) for k, v in sorted(groups.items())}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seeds": list(self.seeds), "params": self.params, "records": self.records}

    def write_csv(self, path) -> None:
        cols = self.columns
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                w.writerow([_cell(r.get(c)) for c in cols])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


# ------------------------------------------------------------ prototype context


@dataclass
class PrototypeContext:
    """Normalized datasets, their prototypes and an importance provider."""

    prototypes: list
    d: TabularDataset
    d_prime: TabularDataset
    lifim_provider: Optional[LifimProvider] = None

    @property
    def n_features(self) -> int:
        return self.d.n_features


def fit_lifim_provider(d: TabularDataset, d_prime: TabularDataset, importance: Optional[RashomonImportance] = None,
                       max_thresholds_per_column: int = 3, seed: int = 0) -> LifimProvider:
    """One importance model per side on the info-gain binarization of the pooled data.

    Attributions of a column's thresholds are summed back onto the column.
    """
    d.require_labels()
    d_prime.require_labels()
    pooled = concat([d, d_prime])
    binz = InfoGainBinarizer(max_thresholds_per_column, d.feature_names, pooled.binary_mask)
    scheme = binz.fit(pooled.X, pooled.y).scheme_
    base = importance if importance is not None else RashomonImportance(seed=seed)
    m_d = clone(base).fit(scheme.transform(d.X), d.y)
    m_dp = clone(base).fit(scheme.transform(d_prime.X), d_prime.y)
    return LifimProvider(m_d, m_dp, scheme, d.n_features)


def build_prototype_context(
    d: TabularDataset,
    d_prime: TabularDataset,
    k: int = 4,
    seed: int = 0,
    importance: Optional[RashomonImportance] = None,
    with_importance: bool = True,
    max_thresholds_per_column: int = 3,
) -> PrototypeContext:
    """Normalize both datasets by ``d``, place k-means prototypes on ``d`` and fit importances."""
    stats_ = fit_normalizer(d)
    dn, dpn = apply_normalizer(stats_, d), apply_normalizer(stats_, d_prime)
    protos = kmeans_prototypes(dn, k, seed=seed)
    provider = None
    if with_importance:
        provider = fit_lifim_provider(dn, dpn, importance, max_thresholds_per_column, seed)
    return PrototypeContext(protos, dn, dpn, provider)


def synthetic_context(seed: int = 0, n: int = 300, m: int = 8, k: int = 4, with_importance: bool = True,
                      importance: Optional[RashomonImportance] = None) -> PrototypeContext:
    d, dp = prototype_corpus(n=n, m=m, seed=seed)
    return build_prototype_context(d, dp, k=k, seed=seed, importance=importance, with_importance=with_importance)


def _neighbourhood(ctx: PrototypeContext, proto: Prototype, delta) -> np.ndarray:
    """Rows of ``d`` and ``d_prime`` within the delta radius (resolved against ``d``)."""
    dist_d = prototype_distances(proto, ctx.d)
    r = resolve_delta(delta, dist_d)
    dist_dp = prototype_distances(proto, ctx.d_prime)
    return np.vstack([ctx.d.X[dist_d <= r], ctx.d_prime.X[dist_dp <= r]])


# ------------------------------------------------------------- faithfulness


def _faithfulness_point(px, V, cols, n_trials, seed):
    cols = np.sort(np.asarray(cols))
    full_pair = pairwise_distances(V, V)
    part_pair = pairwise_distances(V[:, cols], V[:, cols])
    full_anchor = pairwise_distances(V, px[None, :])[:, 0]
    part_anchor = pairwise_distances(V[:, cols], px[None, cols])[:, 0]
    rta = random_triplet_accuracy(full_pair, part_pair, n_trials, seed)
    gpa = global_permutation_accuracy(full_anchor, part_anchor)
    var = float(V[:, cols].var(axis=0).mean())
    return rta, gpa, var


def faithfulness_sweep(
    ctx: PrototypeContext,
    K_values: Optional[Sequence[int]] = None,
    selection: str = "scored",
    seeds: Sequence[int] = tuple(range(10)),
    delta=None,
    n_trials: int = 1000,
) -> SweepResult:
    """Structure preservation of partial prototypes as ``K`` shrinks.

    For every prototype the delta-neighbourhood (both datasets) is ordered by
    full-feature distance and by distance over the ``K`` kept features; RTA
    compares the pairwise matrices, GPA the distance-to-prototype arrays.
    ``selection="scored"`` keeps the features with the lowest value-gap
    penalty; ``"random"`` draws ``K`` features per seed. One record per
    ``(K, seed)``, averaged over prototypes.
    """
    if selection not in ("scored", "random"):
        raise ValidationError("selection must be 'scored' or 'random'")
    m = ctx.n_features
    K_values = list(range(m, 0, -1)) if K_values is None else [int(k) for k in K_values]
    delta = {"percentile": 10.0} if delta is None else delta
    hoods = [_neighbourhood(ctx, p, delta) for p in ctx.prototypes]
    for p, V in zip(ctx.prototypes, hoods):
        if V.shape[0] < 3:
            raise TooFewItems(f"prototype {p.id}: neighbourhood has {V.shape[0]} rows, need 3")
    records = []
    for K in K_values:
        if not 1 <= K <= m:
            raise ValidationError(f"K={K} outside [1, {m}]")
        scored = None
        if selection == "scored":
            scored = partial_prototypes(ctx.prototypes, ctx.d, ctx.d_prime, K, c1=0.0, c2=0.0, c3=1.0, delta=delta)
        for s in seeds:
            rng = np.random.default_rng([s, K])
            vals = []
            for pi, (p, V) in enumerate(zip(ctx.prototypes, hoods)):
                cols = scored[pi].indices if scored is not None else rng.choice(m, K, replace=False)
                vals.append(_faithfulness_point(np.asarray(p.features, float), V, cols, n_trials, [s, K, pi]))
            rta, gpa, var = np.mean(vals, axis=0)
            records.append({"K": K, "selection": selection, "seed": int(s), "rta": float(rta),
                            "gpa": float(gpa), "neighbourhood_variance": float(var)})
    return SweepResult("faithfulness", records, [int(s) for s in seeds],
                       {"selection": selection, "delta": delta, "n_trials": n_trials, "K_values": K_values})


# ------------------------------------------------------------------ tradeoff


def tradeoff_sweep(
    ctx: PrototypeContext,
    n_samples: int = 200,
    c_range=(1e-2, 10.0),
    K_set: Sequence[int] = (3, 4, 5),
    delta_percentile: float = 10.0,
    seed: int = 0,
) -> SweepResult:
    """Sample penalty weights log-uniformly and record what the selected features look like.

    For every sampled ``(c1, c2, c3)`` and every ``K`` in ``K_set`` the
    partial prototypes are built, and over the selected features and
    delta-neighbours (both datasets) the mean rank difference, mean absolute
    rank and mean value deviation are recorded, averaged over prototypes.
    """
    n_samples = check_positive_int(n_samples, "n_samples")
    if ctx.lifim_provider is None:
        raise ValidationError("the tradeoff sweep needs an importance provider")
    lo, hi = float(c_range[0]), float(c_range[1])
    if not 0 < lo <= hi:
        raise ValidationError("c_range must satisfy 0 < low <= high")
    delta = {"percentile": float(delta_percentile)}
    rng = np.random.default_rng(seed)
    cs = np.exp(rng.uniform(math.log(lo), math.log(hi), size=(n_samples, 3)))

    # importances and ranks do not depend on the weights: compute them once
    cache = []
    for p in ctx.prototypes:
        px = np.asarray(p.features, float)
        dist_d = prototype_distances(p, ctx.d)
        r = resolve_delta(delta, dist_d)
        rows_d = ctx.d.X[dist_d <= r]
        rows_dp = ctx.d_prime.X[prototype_distances(p, ctx.d_prime) <= r]
        prank = importance_ranks(ctx.lifim_provider(px[None, :], "d")[0]).astype(float)
        sides = []
        for rows, side in ((rows_d, "d"), (rows_dp, "d_prime")):
            if rows.shape[0]:
                sides.append((rows, importance_ranks(ctx.lifim_provider(rows, side)).astype(float)))
        cache.append((px, prank, sides))

    records = []
    for idx, (c1, c2, c3) in enumerate(cs):
        for K in K_set:
            agg = []
            for px, prank, sides in cache:
                total = np.zeros(px.shape[0])
                for rows, ranks in sides:
                    total += (c1 * np.abs(prank - ranks) + c2 * (0.5 * prank + 0.5 * ranks)
                              + c3 * np.abs(px - rows)).mean(axis=0)
                sel = np.lexsort((np.arange(px.shape[0]), total))[:K]
                rows = np.vstack([s[0] for s in sides])
                ranks = np.vstack([s[1] for s in sides])
                agg.append((
                    np.abs(prank[sel] - ranks[:, sel]).mean(),
                    (0.5 * prank[sel] + 0.5 * ranks[:, sel]).mean(),
                    np.abs(px[sel] - rows[:, sel]).mean(),
                ))
            rd, ar, vd = np.mean(agg, axis=0)
            records.append({"sample": idx, "c1": float(c1), "c2": float(c2), "c3": float(c3), "K": int(K),
                            "mean_rank_difference": float(rd), "mean_absolute_rank": float(ar),
                            "mean_value_deviation": float(vd)})
    return SweepResult("tradeoff", records, [int(seed)],
                       {"n_samples": n_samples, "c_range": [lo, hi], "K_set": list(K_set),
                        "delta_percentile": float(delta_percentile)})


def _pearson(a, b) -> Optional[float]:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def tradeoff_correlation(result: SweepResult) -> dict:
    """Pearson correlation of mean absolute rank against mean rank difference.

    Computed separately for every ``K`` (one tradeoff curve each) and, for
    reference, pooled over all records. Larger ``K`` raises both metrics at
    once, so the pooled value mixes in that between-curve trend.
    """
    out = {}
    for K in sorted({r["K"] for r in result.records}):
        sub = [r for r in result.records if r["K"] == K]
        out[int(K)] = _pearson([r["mean_absolute_rank"] for r in sub], [r["mean_rank_difference"] for r in sub])
    out["pooled"] = _pearson(result.column("mean_absolute_rank"), result.column("mean_rank_difference"))
    return out


# ------------------------------------------------------------------ influence


@dataclass
class InfluenceValidation:
    n: int
    m: int
    l2: float
    seed: int
    n_test: int
    pearson: Optional[float]
    sign_agreement: float
    degenerate: bool
    scores: np.ndarray
    oracle: np.ndarray
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "l2": self.l2,
            "seed": self.seed,
            "n_test": self.n_test,
            "pearson": self.pearson,
            "sign_agreement": self.sign_agreement,
            "degenerate": self.degenerate,
            "notes": list(self.notes),
        }

    def write_csv(self, path) -> None:
        """Scatter data: ``row_id,predicted,retrained`` with predicted = score / n."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "predicted", "retrained"])
            for i, (s, o) in enumerate(zip(self.scores, self.oracle)):
                w.writerow([i, repr(float(s) / self.n), repr(float(o))])


def validate_influence(n: int = 200, m: int = 5, l2: float = DEFAULT_L2, seed: int = 0, n_test: int = 200,
                       degenerate: bool = False) -> InfluenceValidation:
    """Compare influence scores against leave-one-out retraining on a seeded logistic task.

    The test loss is measured on a held-out draw from the same model.
    ``degenerate=True`` replaces every feature row by the first one, which
    leaves nothing to correlate; the Pearson value is then reported as None.
    """
    if n < 20:
        raise ValidationError("validation needs n >= 20")
    X, y, Xt, yt = logistic_task(n, m, seed, n_test=n_test)
    notes = []
    if degenerate:
        X = np.repeat(X[:1], n, axis=0)
        y = np.arange(n) % 2.0
    model = fit_logistic(X, y, l2)
    scores = influence_scores(model, X, y, Xt, yt)
    oracle = loo_retrain_oracle(X, y, Xt, yt, l2)
    flat = np.ptp(X, axis=0).max() == 0 if m else True
    is_degenerate = bool(flat or np.std(scores) == 0 or np.std(oracle) == 0)
    r = None if is_degenerate else _pearson(scores, oracle)
    if is_degenerate:
        notes.append("degenerate input: all feature rows are identical, correlation undefined")
    agree = float(np.mean(np.sign(scores) == np.sign(oracle)))
    return InfluenceValidation(n, m, l2, seed, n_test, r, agree, is_degenerate, scores, oracle, notes)


# ------------------------------------------------------------------- removal


def removal_sweep(
    fractions: Sequence[float] = (0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95),
    seeds: Sequence[int] = tuple(range(5)),
    n: int = 200,
    m: int = 5,
    planted_fraction: float = 0.05,
    importance: Optional[RashomonImportance] = None,
) -> SweepResult:
    """Alignment after removing the top-scored fraction of rows, on planted-shift data.

    One record per ``(seed, fraction)``; the planted rows' recovery in the
    top ``planted_fraction`` of scores is recorded alongside.
    """
    records = []
    for s in seeds:
        d, dp, planted = planted_shift_pair(n, m, planted_fraction, seed=s)
        ex = InfluentialExampleExplainer(importance, seed=s).fit(d, dp)
        top = ex.explain(len(planted))
        recovery = len(set(top.selected_ids.tolist()) & set(planted.tolist())) / len(planted)
        for f, a in zip(fractions, ex.alignment_curve(fractions)):
            records.append({"seed": int(s), "fraction": float(f), "alignment": float(a),
                            "planted_recovery": float(recovery)})
    return SweepResult("removal", records, [int(s) for s in seeds],
                       {"n": n, "m": m, "planted_fraction": planted_fraction, "fractions": list(fractions)})
