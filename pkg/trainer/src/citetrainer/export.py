"""Export corpus vectors in the shared {id, vector} JSONL format."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .data import CorpusDoc, save_vectors
from .encoder import Checkpoint


def export_vectors(
    checkpoint: Checkpoint,
    docs: Sequence[CorpusDoc],
    level: str,
    path: str | Path,
    *,
    batch_size: int = 256,
) -> int:
    """One vector per corpus record at the given level; returns the count."""
    if level not in ("L1", "L2", "L3"):
        raise ValueError(f"unknown corpus level {level!r}")
    encoder = checkpoint.build_encoder()
    matrix = encoder.encode_texts_eval([doc.texts[level] for doc in docs],
                                       batch_size=batch_size)
    rows = [
        (doc.id, [float(x) for x in vector])
        for doc, vector in zip(docs, matrix.numpy())
    ]
    save_vectors(rows, path)
    return len(rows)
