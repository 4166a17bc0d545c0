"""Architecture search for classification heads on a small sentence encoder."""

__version__ = "0.1.0"

from .space import (  # noqa: F401
    HeadConfig,
    MlpSpec,
    ConvSpec,
    EncoderSpec,
    ConfigVector,
    baseline_config,
    cardinality,
    decode,
    encode,
    sample_uniform,
    validate,
)
from .autodiff import Tensor, no_grad  # noqa: F401
from .optim import Adam, AdamState, ScheduleSpec, adam_step, lr_at  # noqa: F401
from .hyperband import HyperbandPlan, plan, run_bracket  # noqa: F401
