"""Bundle exporter: dump features, logits, and final-layer parameters from a torch classifier."""

from .errors import ExportError, LayerNotFound, NonAffineHead, ShapeMismatch
from .export import export
from .spec import ExportSpec, load_spec

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportSpec",
    "LayerNotFound",
    "NonAffineHead",
    "ShapeMismatch",
    "export",
    "load_spec",
]
