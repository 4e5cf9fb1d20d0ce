"""Dynamic graph-based approximate nearest neighbor search.

A layered navigable small-world index with greedy and softmax-random-walk
search, a family of bottom-layer vertex deletion strategies built around
random-walk-preserving sparsified patching, a dense spectral verification
lab, and a benchmark harness.
"""

from .bench import (
    ExperimentConfig,
    MetricRow,
    brute_force_topk,
    emit_report,
    recall_at_k,
    run_mass_deletion,
    run_rhat_sweep,
    run_steady_state,
    run_turnover,
)
from .datasets import Dataset, read_vecs, synthetic_mixture
from .deletion import (
    DeletionConfig,
    DeletionOutcome,
    StarMeshResult,
    delete_point,
    star_mesh_weights,
)
from .graph import (
    GraphError,
    LayeredGraph,
    NodeId,
    UndirectedWeightedGraph,
    load_snapshot,
    save_snapshot,
)
from .index import (
    BuildParams,
    HnswIndex,
    QueryResult,
    SearchParams,
    VectorStore,
    adaptive_r,
    assign_layer,
    construct_layer_sparsified,
    select_neighbors,
    transition_probabilities,
)

__all__ = [
    "BuildParams",
    "Dataset",
    "DeletionConfig",
    "DeletionOutcome",
    "ExperimentConfig",
    "GraphError",
    "HnswIndex",
    "LayeredGraph",
    "MetricRow",
    "NodeId",
    "QueryResult",
    "SearchParams",
    "StarMeshResult",
    "UndirectedWeightedGraph",
    "VectorStore",
    "adaptive_r",
    "assign_layer",
    "brute_force_topk",
    "construct_layer_sparsified",
    "delete_point",
    "emit_report",
    "load_snapshot",
    "read_vecs",
    "recall_at_k",
    "run_mass_deletion",
    "run_rhat_sweep",
    "run_steady_state",
    "run_turnover",
    "save_snapshot",
    "select_neighbors",
    "star_mesh_weights",
    "synthetic_mixture",
    "transition_probabilities",
]

__version__ = "0.1.0"
