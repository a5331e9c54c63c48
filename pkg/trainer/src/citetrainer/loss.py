"""Temperature-scaled InfoNCE over cosine similarities.

The numeric core takes precomputed similarities, one positive and a list of
negatives per pair, and averages
    -log( exp(s+/t) / (sum_i exp(s-_i/t) + exp(s+/t)) )
over the batch via a log-sum-exp, so equal similarities give exactly
ln(1 + #negatives) regardless of the temperature.
"""

from __future__ import annotations

import math
from typing import Sequence

import torch


def info_nce_loss(
    positive_sims: Sequence[float],
    negative_sims: Sequence[Sequence[float]],
    temperature: float,
) -> float:
    """Batch-mean InfoNCE from raw similarity values."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if len(positive_sims) != len(negative_sims) or not positive_sims:
        raise ValueError("one negative list per positive similarity required")
    total = 0.0
    for pos, negs in zip(positive_sims, negative_sims):
        if not negs:
            raise ValueError("each pair needs at least one negative")
        values = [pos] + list(negs)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("non-finite similarity")
        scaled = [v / temperature for v in values]
        peak = max(scaled)
        log_denominator = peak + math.log(sum(math.exp(v - peak) for v in scaled))
        total += log_denominator - scaled[0]
    return total / len(positive_sims)


def info_nce_loss_torch(
    positive_sims: torch.Tensor,
    negative_sims: torch.Tensor,
    temperature: float,
) -> torch.Tensor:
    """Differentiable InfoNCE: positives (B,), negatives (B, N)."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if not torch.isfinite(positive_sims).all() or not torch.isfinite(negative_sims).all():
        raise ValueError("non-finite similarity")
    logits = torch.cat([positive_sims.unsqueeze(1), negative_sims], dim=1) / temperature
    return (torch.logsumexp(logits, dim=1) - logits[:, 0]).mean()
