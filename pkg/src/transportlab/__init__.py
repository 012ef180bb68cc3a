"""Estimand algebra and transportability laboratory for anchored indirect comparisons."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConfigurationError,
    EffectMeasure,
    EstimandKind,
    Link,
    MeasureKind,
    OutcomeModel,
    Treatment,
    conditional_contrast_at,
    link_inverse,
    linear_predictor,
)
from .population import PopulationGrid, PopulationSpec, default_grid, expectation_over_x, sample_covariates  # noqa: E402
from .estimands import conditional_effect, effect_curve, marginal_effect, rmst  # noqa: E402

__all__ = [
    "ConfigurationError",
    "EffectMeasure",
    "EstimandKind",
    "Link",
    "MeasureKind",
    "OutcomeModel",
    "PopulationGrid",
    "PopulationSpec",
    "Treatment",
    "conditional_contrast_at",
    "conditional_effect",
    "default_grid",
    "effect_curve",
    "expectation_over_x",
    "link_inverse",
    "linear_predictor",
    "marginal_effect",
    "rmst",
    "sample_covariates",
]
