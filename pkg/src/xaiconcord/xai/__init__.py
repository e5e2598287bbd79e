"""Feature-importance extraction: MDI, permutation (MDA), tree SHAP and LIME."""

from .importance import ImportanceVector
from .lime import LimeConfig, LimeExplanation, lime_global, lime_local
from .mdi import mdi
from .permutation import mda
from .shap import ShapMatrix, shap_global, shap_values

__all__ = [
    "ImportanceVector",
    "LimeConfig",
    "LimeExplanation",
    "ShapMatrix",
    "lime_global",
    "lime_local",
    "mda",
    "mdi",
    "shap_global",
    "shap_values",
]
