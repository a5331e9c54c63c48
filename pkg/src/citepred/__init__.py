"""Citation-prediction engine and evaluation harness.

Builds a three-level hierarchical paper corpus, carves reference-list and
placeholder prediction datasets, retrieves candidates with fused
sparse/dense multi-level search, drives any chat-completion generator, and
scores predictions with the full metric suite.
"""

from .records import Corpus, CorpusLevel, PaperRecord, ReferenceDescriptor, Section
from .ranking import RankedList

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "CorpusLevel",
    "PaperRecord",
    "RankedList",
    "ReferenceDescriptor",
    "Section",
    "__version__",
]
