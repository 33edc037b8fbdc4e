"""Partially synthetic rating data for recommender-system benchmarking.

The toolkit retains a designated share of a user-item rating matrix, redraws
the rest from per-item CART trees via the Bayesian bootstrap, and measures
(a) whether recommender algorithms keep their relative ranking on the
synthetic data and (b) how much user-preference information the synthesis
hides.
"""

from .dataset import (
    DEFAULT_SCALE,
    DataError,
    HoldoutSplit,
    ItemMetadata,
    RatingDataset,
    RatingsSchema,
    density,
    load_metadata,
    load_ratings,
    split_holdout,
    write_ratings,
)
from .synthesis import (
    UNRATED,
    CartTree,
    ClassCounts,
    RetentionMask,
    StoppingRule,
    SynthesisConfig,
    SynthesisError,
    bayesian_bootstrap_draw,
    classify,
    designate_retained,
    fit_item_tree,
    gini_index,
    select_predictors,
    synthesize,
)

__version__ = "0.1.0"
