"""Contrastive embedding trainer for citation retrieval.

Mines query-positive pairs from a corpus plus a training split, trains a
small text encoder with temperature-scaled InfoNCE against mined and
in-batch negatives, and exports corpus vectors in the shared vector file
format consumed by the retrieval stack.
"""

from .loss import info_nce_loss
from .pairs import TrainingPair, mine_pairs

__version__ = "0.1.0"

__all__ = ["TrainingPair", "info_nce_loss", "mine_pairs", "__version__"]
