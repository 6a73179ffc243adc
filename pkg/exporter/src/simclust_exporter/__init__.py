"""simclust-exporter: image folders to embedding stores via CNN features."""

from .export import DEFAULT_MODEL, MODEL_REGISTRY, ExportSpec, export

__version__ = "0.1.0"

__all__ = ["ExportSpec", "export", "MODEL_REGISTRY", "DEFAULT_MODEL", "__version__"]
