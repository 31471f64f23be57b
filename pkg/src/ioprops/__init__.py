"""Black-box estimation of L2-gain, passivity and conic sectors of LTI plants."""

__version__ = "0.1.0"

from .conic import ConeEstimate, estimate_cone
from .errors import (
    BudgetExhausted,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    FlowError,
    NoisyDenominatorError,
    SingularOperatorError,
    StabilityError,
)
from .estimator import EstimateTrace, EstimatorConfig
from .flows import FlowConfig, FlowResult, integrate_flow
from .gain import GainEstimate, estimate_gain
from .lti import (
    ImpulseResponse,
    MimoPlant,
    StateSpaceModel,
    mimo_apply,
    oscillator,
    random_stable_plant,
    toeplitz_apply,
    zoh_discretize,
)
from .passivity import PassivityEstimate, estimate_passivity
from .probe import NoiseModel, ProbeSession, reverse

__all__ = [
    "BudgetExhausted",
    "ConeEstimate",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "DivergenceError",
    "EstimateTrace",
    "EstimatorConfig",
    "FlowConfig",
    "FlowError",
    "FlowResult",
    "GainEstimate",
    "ImpulseResponse",
    "MimoPlant",
    "NoiseModel",
    "NoisyDenominatorError",
    "PassivityEstimate",
    "ProbeSession",
    "SingularOperatorError",
    "StabilityError",
    "StateSpaceModel",
    "estimate_cone",
    "estimate_gain",
    "estimate_passivity",
    "integrate_flow",
    "mimo_apply",
    "oscillator",
    "random_stable_plant",
    "reverse",
    "toeplitz_apply",
    "zoh_discretize",
]
