"""snls: sensor-language contrastive learning for wearable activity
recognition.

Pre-trains a joint embedding space between accelerometer windows and
activity sentences, then supports zero-shot classification, few-shot
projection-head adaptation, unseen-activity recognition, and
cross-modal retrieval, with a full evaluation harness.
"""

__version__ = "0.1.0"

from . import datapipe, encoders, harness, inference, numerics, objectives, prompts
from .config import TrainConfig, UnseenGroupPlan
from .model import NlsModel

__all__ = [
    "NlsModel",
    "TrainConfig",
    "UnseenGroupPlan",
    "datapipe",
    "encoders",
    "harness",
    "inference",
    "numerics",
    "objectives",
    "prompts",
]
