from .distance import distance_grad, distance_value, mse_grad, mse_value, ssim_grad, ssim_value
from .engine import (
    Defense,
    ModelContext,
    OdeConfig,
    average_probs,
    defense_apply,
    ensemble_classify,
    purify_multi,
    purify_once,
)
from .plan import (
    GuidanceConfig,
    PurificationPlan,
    SurrogateSpec,
    build_surrogate,
    format_steps,
    parse_plan_steps,
    parse_process_string,
    parse_schedule_string,
)

__all__ = [
    "Defense",
    "GuidanceConfig",
    "ModelContext",
    "OdeConfig",
    "PurificationPlan",
    "SurrogateSpec",
    "average_probs",
    "build_surrogate",
    "defense_apply",
    "distance_grad",
    "distance_value",
    "ensemble_classify",
    "format_steps",
    "mse_grad",
    "mse_value",
    "parse_plan_steps",
    "parse_process_string",
    "parse_schedule_string",
    "purify_multi",
    "purify_once",
    "ssim_grad",
    "ssim_value",
]
