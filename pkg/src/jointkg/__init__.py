"""jointkg: joint multilingual knowledge-graph completion and alignment.

Two relation-aware GNN encoders are trained alternately: one scores triples
with a layerwise translation objective, the other embeds entities for
cross-KG matching, reusing the completion embeddings through a per-layer
fusion. Between epochs, confident alignments grow the seed set under an
entropy budget and transfer triples between graphs. Ranking evaluation
reports MRR and Hits@k for both tasks.
"""

__version__ = "0.1.0"

from .errors import JointKgError
from .kgdata import Kg, MultiKg, SeedSet, Triple, load_multikg
from .train import Checkpoint, TrainConfig, fit

__all__ = [
    "Checkpoint",
    "JointKgError",
    "Kg",
    "MultiKg",
    "SeedSet",
    "TrainConfig",
    "Triple",
    "fit",
    "load_multikg",
    "__version__",
]
