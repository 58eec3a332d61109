"""Projection-based 3D shape search engine.

Pipeline: depth-view rendering of pose-normalized meshes, per-view unit-norm
descriptors, codeword-quantized inverted-file matching of view sets, and
contextual re-ranking through a second inverted file of sparse neighbor
activations.
"""

from .index import (
    IndexBundle,
    IndexConfig,
    build_index,
    evaluate_index,
    load_bundle,
    query,
    query_by_id,
    save_bundle,
)

__all__ = [
    "IndexBundle",
    "IndexConfig",
    "build_index",
    "evaluate_index",
    "load_bundle",
    "query",
    "query_by_id",
    "save_bundle",
]

__version__ = "0.1.0"
