"""Breathing-gesture user identification: MFCC features, a two-layer LSTM,
elbow-based model selection, 8-bit quantization and a linear SVM baseline.

Hot loops run on numba-compiled kernels by default; set
``BREATHAUTH_KERNELS=numpy`` before import to use the pure-numpy versions.
"""

__version__ = "0.1.0"

from .audio_io import AudioClip, Gesture, load_wav, synthesize_clip, write_wav  # noqa: E402
from .features import WindowConfig, extract_features, make_windows, mfcc  # noqa: E402
from .lstm import LstmModel, forward, init_model  # noqa: E402
from .model_store import load_model, save_model  # noqa: E402
from .quantize import quantize_model  # noqa: E402

__all__ = [
    "AudioClip",
    "Gesture",
    "LstmModel",
    "WindowConfig",
    "__version__",
    "extract_features",
    "forward",
    "init_model",
    "load_model",
    "load_wav",
    "make_windows",
    "mfcc",
    "quantize_model",
    "save_model",
    "synthesize_clip",
    "write_wav",
]
