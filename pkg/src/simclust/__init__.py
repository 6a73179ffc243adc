"""simclust: similarity-based dataset clustering over feature embeddings.

Shards a labeled embedding store into clusters of similar classes, trains an
independent classifier head per cluster, and routes inference queries to the
right head by centroid similarity.
"""

from .errors import FormatError, SimclustError, ValidationError

__version__ = "0.1.0"

__all__ = ["SimclustError", "ValidationError", "FormatError", "__version__"]
