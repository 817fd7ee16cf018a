"""HTTP bridge exposing masked-LM checkpoints through the engine's wire protocol."""

from .model import HFMaskedModel, TinyMaskedModel, load_model
from .server import create_app

__version__ = "0.1.0"
