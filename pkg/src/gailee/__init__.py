"""Joint event extraction with Q-learning, policy gradients and adversarial rewards."""
from .config import ConfigError, TrainConfig, load_config
from .estimator import EventExtractor
from .extractor import EventExtractorModel, ExtractedEvent, extract_events
from .trainer import evaluate, load_model, run_training, save_model

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EventExtractor",
    "EventExtractorModel",
    "ExtractedEvent",
    "TrainConfig",
    "evaluate",
    "extract_events",
    "load_config",
    "load_model",
    "run_training",
    "save_model",
]
