"""Budget-constrained active-learning labeling for growing audio pools."""

__version__ = "0.1.0"

from .domain import (
    AudioRecord,
    ChunkAnnotation,
    EmbeddingRecord,
    LabelerGroup,
    Ontology,
    OntologyClass,
    WindowSelection,
)
from .engine import ActiveLearningEngine, EngineConfig, IterationRecord
from .ingestion import EmbeddingPool, generate_synthetic_pool, load_sidecar, write_sidecar
from .partition import PartitionConfig, PartitionPlan, assign_disjoint_sets, num_disjoint_sets
from .persistence import Database
from .selection import MedoidPool, ProposalBatch
from .simulator import SimConfig, compare_strategies, run_simulation

__all__ = [
    "ActiveLearningEngine",
    "AudioRecord",
    "ChunkAnnotation",
    "Database",
    "EmbeddingPool",
    "EmbeddingRecord",
    "EngineConfig",
    "IterationRecord",
    "LabelerGroup",
    "MedoidPool",
    "Ontology",
    "OntologyClass",
    "PartitionConfig",
    "PartitionPlan",
    "ProposalBatch",
    "SimConfig",
    "WindowSelection",
    "assign_disjoint_sets",
    "compare_strategies",
    "generate_synthetic_pool",
    "load_sidecar",
    "num_disjoint_sets",
    "run_simulation",
    "write_sidecar",
]
