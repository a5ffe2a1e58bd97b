"""BI-RADS scoring from Monte-Carlo-dropout predictive entropy."""

from .core import (
    BiRadsCategory,
    Consistency,
    FeatureLayout,
    LesionRecord,
    MorphFeatures,
    Pathology,
    coarse,
    consistent_with_pathology,
    encode_features,
)
from .network import (
    BayesianClassifier,
    DropoutConfig,
    PredictiveDistribution,
    PredictiveSamples,
    TrainConfig,
    mc_predict,
    train,
)
from .pipeline import RunConfig, run_pipeline
from .uncertainty import (
    MapperConfig,
    derive_thresholds,
    map_birads_from_entropy,
    map_birads_from_prob,
    predictive_entropy,
)

__version__ = "0.1.0"
