"""Explain how two datasets differ: prototypes, intrinsic importance, influential rows and text attributes."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    InfoGainBinarizer,
    ReferenceScaler,
    TabularDataset,
    apply_normalizer,
    fit_binarizer,
    fit_normalizer,
    load_csv,
    write_csv,
)
from .errors import ComputationError, DriftscopeError, ProviderError, ValidationError  # noqa: E402
from .influence import (  # noqa: E402
    InfluentialExampleExplainer,
    NewtonLogisticRegression,
    alignment,
    fit_logistic,
    influence_scores,
    loo_retrain_oracle,
    top_k_influential,
)
from .prototypes import (  # noqa: E402
    KMeansPrototypes,
    Prototype,
    kmeans_prototypes,
    neighbourhood_stats,
    partial_prototypes,
    percentile_grid_prototypes,
)
from .rashomon import GreedyTreeClassifier, RashomonImportance, build_ensemble, gifim, lifim  # noqa: E402

__all__ = [
    "ComputationError",
    "DriftscopeError",
    "GreedyTreeClassifier",
    "InfluentialExampleExplainer",
    "InfoGainBinarizer",
    "KMeansPrototypes",
    "NewtonLogisticRegression",
    "Prototype",
    "ProviderError",
    "RashomonImportance",
    "ReferenceScaler",
    "TabularDataset",
    "ValidationError",
    "alignment",
    "apply_normalizer",
    "build_ensemble",
    "fit_binarizer",
    "fit_logistic",
    "fit_normalizer",
    "gifim",
    "influence_scores",
    "kmeans_prototypes",
    "lifim",
    "load_csv",
    "loo_retrain_oracle",
    "neighbourhood_stats",
    "partial_prototypes",
    "percentile_grid_prototypes",
    "top_k_influential",
    "write_csv",
]
