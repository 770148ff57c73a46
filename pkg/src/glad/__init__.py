"""Global-locally self-attentive dialogue state tracking on a small numpy autograd core."""

from ._accel import BACKEND
from .data import Dialogue, Ontology, SyntheticConfig, Turn, generate_synthetic, load_corpus, load_ontology
from .gradcheck import check_gradients
from .model import GladModel, ModelConfig
from .tracker import accumulate, aggregate_asr, predict_turn, track_dialogue
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Dialogue", "GladModel", "ModelConfig", "Ontology", "SyntheticConfig",
    "TrainConfig", "Turn", "accumulate", "aggregate_asr", "check_gradients", "generate_synthetic",
    "load_corpus", "load_ontology", "predict_turn", "track_dialogue", "train",
]
