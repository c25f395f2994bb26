"""Link-level bicycling volume estimation toolkit.

Builds road-segment graphs, trains a configurable graph convolutional
network on annual average daily bicycle (AADB) counts, fits classical
baselines, and runs controlled label-sparsity sweeps.
"""

__version__ = "0.1.0"

from bikevolume.graph import RoadGraph, SparseMatrix, NormalizedAdjacency, build_graph, normalize, spmm

__all__ = [
    "RoadGraph",
    "SparseMatrix",
    "NormalizedAdjacency",
    "build_graph",
    "normalize",
    "spmm",
    "__version__",
]
