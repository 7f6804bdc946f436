"""fairtrim: find and remove bias-inducing training points from tabular data.

A trained classifier is probed with synthetic pairs of near-identical
applicants that differ in a sensitive attribute; training rows are ranked by
how much they push the model toward treating such pairs differently
(influence functions), and the worst offenders are removed chunk by chunk
until the model stops improving.
"""

from .data import (
    Dataset,
    FeatureSchema,
    SplitSpec,
    drop_sensitive,
    load_dataset,
    load_schema,
    split,
)
from .debias import DebiasConfig, DebiasReport, debias_data, drop_first, sort_dataset
from .errors import FairtrimError
from .experiment import ExperimentResult, GridSpec, emit_reports, run_grid
from .fairness import (
    SimilarityConfig,
    build_influence_set,
    discriminatory_pairs,
    estimate_discrim,
    generate_similar_pairs,
    statistical_parity_difference,
)
from .influence import (
    InfluenceRanking,
    InfluenceSet,
    SolverConfig,
    inverse_hvp,
    rank_by_influence,
)
from .model import (
    FeatureMaskedModel,
    Hyperparameters,
    Model,
    grad_loss,
    hvp,
    load_model,
    predict,
    predict_batch,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DebiasConfig",
    "DebiasReport",
    "ExperimentResult",
    "FairtrimError",
    "FeatureMaskedModel",
    "FeatureSchema",
    "GridSpec",
    "Hyperparameters",
    "InfluenceRanking",
    "InfluenceSet",
    "Model",
    "SimilarityConfig",
    "SolverConfig",
    "SplitSpec",
    "build_influence_set",
    "debias_data",
    "discriminatory_pairs",
    "drop_first",
    "drop_sensitive",
    "emit_reports",
    "estimate_discrim",
    "generate_similar_pairs",
    "grad_loss",
    "hvp",
    "inverse_hvp",
    "load_dataset",
    "load_model",
    "load_schema",
    "predict",
    "predict_batch",
    "rank_by_influence",
    "run_grid",
    "save_model",
    "sort_dataset",
    "split",
    "statistical_parity_difference",
    "train",
    "__version__",
]
