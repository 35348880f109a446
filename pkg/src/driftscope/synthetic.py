"""Seeded synthetic datasets with ground truth."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import TabularDataset
from .errors import InvalidSpec


@dataclass(frozen=True)
class MixturePairSpec:
    """One side of a paired circle mixture.

    ``per_cluster`` points per cluster when ``proportions == "equal"``;
    otherwise ``total`` points split by a Dirichlet(``alpha``) draw.
    """

    k: int = 6
    radius: float = 10.0
    per_cluster: int = 60
    total: Optional[int] = None
    std: float = 1.0
    proportions: str = "equal"
    alpha: float = 1.0
    seed: int = 0

    def validate(self):
        if self.k < 1:
            raise InvalidSpec("k must be >= 1")
        if not self.radius > 0:
            raise InvalidSpec("radius must be > 0")
        if not self.std >= 0:
            raise InvalidSpec("std must be >= 0")
        if self.proportions not in ("equal", "dirichlet"):
            raise InvalidSpec("proportions must be 'equal' or 'dirichlet'")
        if self.proportions == "equal" and self.per_cluster < 1:
            raise InvalidSpec("per_cluster must be >= 1")
        if self.proportions == "dirichlet" and (self.total or 0) < 1:
            raise InvalidSpec("dirichlet proportions need total >= 1")
        if not self.alpha > 0:
            raise InvalidSpec("alpha must be > 0")

    @property
    def n_points(self) -> int:
        return self.k * self.per_cluster if self.proportions == "equal" else int(self.total)


@dataclass
class MixtureGroundTruth:
    angles: np.ndarray
    centers_x: np.ndarray
    centers_y: np.ndarray
    proportions_x: np.ndarray
    proportions_y: np.ndarray
    counts_x: np.ndarray
    counts_y: np.ndarray
    cluster_x: np.ndarray
    cluster_y: np.ndarray
    spec_x: MixturePairSpec
    spec_y: MixturePairSpec

    def to_dict(self) -> dict:
        return {
            "angles": self.angles.tolist(),
            "centers": {"x": self.centers_x.tolist(), "y": self.centers_y.tolist()},
            "proportions": {"x": self.proportions_x.tolist(), "y": self.proportions_y.tolist()},
            "counts": {"x": self.counts_x.tolist(), "y": self.counts_y.tolist()},
            "seed": {"x": self.spec_x.seed, "y": self.spec_y.seed},
            "spec": {"x": asdict(self.spec_x), "y": asdict(self.spec_y)},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def _side(spec: MixturePairSpec, centers: np.ndarray, rng):
    if spec.proportions == "equal":
        props = np.full(spec.k, 1.0 / spec.k)
        counts = np.full(spec.k, spec.per_cluster)
    else:
        props = rng.dirichlet(np.full(spec.k, spec.alpha))
        counts = rng.multinomial(spec.total, props)
    cluster = np.repeat(np.arange(spec.k), counts)
    pts = centers[cluster] + spec.std * rng.standard_normal((cluster.size, 2))
    return pts, props, counts, cluster


def gen_circle_mixture_pair(spec_x: MixturePairSpec, spec_y: MixturePairSpec):
    """Two isotropic Gaussian mixtures whose centres share angles on circles of two radii.

    The ``k`` angles are drawn uniformly from ``spec_x.seed`` and reused for
    ``Y`` so cluster ``i`` of X is paired with cluster ``i`` of Y. Returns
    ``(X, Y, ground_truth)``; rows are grouped by cluster.
    """
    spec_x.validate()
    spec_y.validate()
    if spec_x.k != spec_y.k:
        raise InvalidSpec("paired mixtures need the same number of clusters")
    rng_a = np.random.default_rng([spec_x.seed, 0])
    angles = rng_a.uniform(0.0, 2 * np.pi, size=spec_x.k)
    unit = np.column_stack([np.cos(angles), np.sin(angles)])
    cx, cy = spec_x.radius * unit, spec_y.radius * unit
    px, prop_x, n_x, cl_x = _side(spec_x, cx, np.random.default_rng([spec_x.seed, 1]))
    py, prop_y, n_y, cl_y = _side(spec_y, cy, np.random.default_rng([spec_y.seed, 2]))
    names = ("x1", "x2")
    X = TabularDataset(px, names, kinds=("continuous",) * 2, name="X")
    Y = TabularDataset(py, names, kinds=("continuous",) * 2, name="Y")
    truth = MixtureGroundTruth(angles, cx, cy, prop_x, prop_y, n_x, n_y, cl_x, cl_y, spec_x, spec_y)
    return X, Y, truth


def mixture_case(case: int, seed: int = 0, std: float = 1.0, k: int = 6):
    """Equal-proportion shift (case 1) or Dirichlet re-weighting (case 2), radii 10 and 20."""
    spec_x = MixturePairSpec(k=k, radius=10.0, per_cluster=60, std=std, seed=seed)
    if case == 1:
        spec_y = MixturePairSpec(k=k, radius=20.0, per_cluster=60, std=std, seed=seed + 1)
    elif case == 2:
        spec_y = MixturePairSpec(k=k, radius=20.0, total=60 * k, std=std, proportions="dirichlet",
                                 alpha=1.0, seed=seed + 1)
    else:
        raise InvalidSpec(f"unknown case {case}")
    return gen_circle_mixture_pair(spec_x, spec_y)


def logistic_task(n: int, m: int, seed: int = 0, n_test: int = 0):
    """Gaussian features with labels drawn from a random logistic model.

    Features and label noise come from separate streams, so the first ``n``
    rows do not change when ``n`` grows. With ``n_test > 0`` a held-out set
    from the same model (its own streams) is returned as well:
    ``(X, y, X_test, y_test)``.
    """
    theta = np.random.default_rng([seed, 1]).standard_normal(m)

    def draw(count, sx, su):
        X = np.random.default_rng([seed, sx]).standard_normal((count, m))
        u = np.random.default_rng([seed, su]).random(count)
        return X, (u < 1.0 / (1.0 + np.exp(-(X @ theta)))).astype(float)

    X, y = draw(n, 0, 2)
    if n_test <= 0:
        return X, y
    return (X, y) + draw(n_test, 3, 4)


def planted_shift_pair(n: int = 200, m: int = 5, planted_fraction: float = 0.05, noise: float = 0.1,
                       seed: int = 0):
    """Two same-distribution binary datasets; ``d_prime`` also carries planted culprit rows.

    In both, the label copies feature 0 with ``noise`` flip rate and the last
    feature is a marker that is always 0. Planted rows (``planted_fraction``
    of ``d_prime``'s size) have the marker set and the label inverted, which
    gives them a distinct importance signature. Returns
    ``(d, d_prime, planted_row_ids)``.
    """
    if m < 2:
        raise InvalidSpec("need at least two features (signal and marker)")
    rng = np.random.default_rng(seed)
    n_plant = max(1, int(round(planted_fraction * n)))
    n_base = n - n_plant

    def base(count):
        X = (rng.random((count, m)) < 0.5).astype(float)
        X[:, -1] = 0.0
        y = np.where(rng.random(count) < noise, 1.0 - X[:, 0], X[:, 0])
        return X, y

    Xd, yd = base(n)
    Xb, yb = base(n_base)
    Xp = (rng.random((n_plant, m)) < 0.5).astype(float)
    Xp[:, -1] = 1.0
    yp = 1.0 - Xp[:, 0]
    order = rng.permutation(n)
    Xdp = np.vstack([Xb, Xp])[order]
    ydp = np.concatenate([yb, yp])[order]
    planted = np.sort(np.flatnonzero(order >= n_base))
    names = tuple(f"f{j}" for j in range(m - 1)) + ("marker",)
    kinds = ("binary",) * m
    d = TabularDataset(Xd, names, y=yd, kinds=kinds, name="d")
    d_prime = TabularDataset(Xdp, names, y=ydp, kinds=kinds, name="d_prime")
    return d, d_prime, planted


def prototype_corpus(n: int = 300, m: int = 8, n_important: int = 3, seed: int = 0):
    """Labelled continuous pair for partial-prototype sweeps.

    Features have heterogeneous spread (std from 0.2 to 2.0) around a few
    cluster centres; the label depends on the first ``n_important`` features
    with region-dependent weights, so importance ranks vary across the space.
    ``d_prime`` is the same mixture with a shifted centre. Returns ``(d, d_prime)``.
    """
    rng = np.random.default_rng(seed)
    spread = np.linspace(0.2, 2.0, m)[rng.permutation(m)]
    centers = rng.normal(0, 2.0, size=(3, m))

    def draw(count, shift):
        c = rng.integers(0, 3, size=count)
        X = centers[c] + shift + spread * rng.standard_normal((count, m))
        w = np.zeros(m)
        w[:n_important] = 1.0
        gate = X[:, n_important % m] > centers[:, n_important % m].mean()
        score = np.where(gate, X[:, 0] - 0.5 * X[:, 1], X[:, 1] + 0.8 * X[:, 2 % m])
        y = (score + 0.3 * rng.standard_normal(count) > np.median(score)).astype(float)
        return X, y

    Xd, yd = draw(n, 0.0)
    shift = np.zeros(m)
    shift[0] = 0.5
    Xdp, ydp = draw(n, shift)
    names = tuple(f"f{j}" for j in range(m))
    return (
        TabularDataset(Xd, names, y=yd, name="d"),
        TabularDataset(Xdp, names, y=ydp, name="d_prime"),
    )
