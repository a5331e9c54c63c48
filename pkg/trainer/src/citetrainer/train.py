"""Contrastive training loop with static hard-negative mining.

Hard negatives come from the nearest neighbors of each query under the
initial encoder, minus the query's true positives; in-batch positives of
the other pairs serve as additional negatives. Mining is static: it runs
once before the loop and is not refreshed.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .data import CorpusDoc, QueryInstance
from .encoder import Checkpoint, EncoderConfig, TextEncoder, fresh_encoder
from .loss import info_nce_loss_torch
from .pairs import TrainingPair

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step
        self.loss = loss


@dataclass
class TrainConfig:
    steps: int = 300
    batch_size: int = 32
    learning_rate: float = 5e-3
    temperature: float = 0.05
    hard_negatives_per_pair: int = 4
    mining_pool_k: int = 100
    seed: int = 0
    log_every: int = 10
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    @classmethod
    def from_mapping(cls, raw: dict) -> "TrainConfig":
        config = cls()
        encoder_kwargs = config.encoder.to_dict()
        for key, value in raw.items():
            if key in ("steps", "batch_size", "hard_negatives_per_pair",
                       "mining_pool_k", "seed", "log_every"):
                setattr(config, key, int(value))
            elif key in ("learning_rate", "temperature"):
                setattr(config, key, float(value))
            elif key in ("n_buckets", "embed_dim", "output_dim"):
                encoder_kwargs[key] = int(value)
            else:
                raise ValueError(f"unknown training config key {key!r}")
        encoder_kwargs["temperature"] = config.temperature
        config.encoder = EncoderConfig.from_dict(encoder_kwargs)
        return config


def mine_hard_negatives(
    encoder: TextEncoder,
    pairs: Sequence[TrainingPair],
    docs: Sequence[CorpusDoc],
    instances: Sequence[QueryInstance],
    *,
    pool_k: int = 100,
    per_pair: int = 4,
    seed: int = 0,
) -> list[list[str]]:
    """Per pair: sample negatives from the query's nearest corpus neighbors
    under the current encoder, excluding every true positive of the query."""
    by_title = {}
    for doc in docs:
        by_title.setdefault(doc.normalized_title, doc.id)
    positives_of: dict[str, set[str]] = {}
    for instance in instances:
        positives_of[instance.query_id] = {
            doc_id for title in instance.ground_truth_refs
            if (doc_id := by_title.get(title)) is not None
        } | {instance.query_id}

    doc_texts = {doc.id: doc.texts["L1"] for doc in docs}
    doc_ids = sorted(doc_texts)
    doc_matrix = encoder.encode_texts_eval([doc_texts[d] for d in doc_ids])

    query_texts: dict[str, str] = {}
    for pair in pairs:
        query_texts.setdefault(pair.query_id, pair.query_text)
    query_ids = sorted(query_texts)
    query_matrix = encoder.encode_texts_eval([query_texts[q] for q in query_ids])

    pool_k = min(pool_k, len(doc_ids))
    sims = query_matrix @ doc_matrix.T
    top = torch.topk(sims, k=pool_k, dim=1).indices
    neighbor_pool = {
        query_id: [doc_ids[j] for j in top[i].tolist()]
        for i, query_id in enumerate(query_ids)
    }

    rng = random.Random(seed)
    out: list[list[str]] = []
    for pair in pairs:
        banned = positives_of.get(pair.query_id, {pair.query_id})
        pool = [doc_id for doc_id in neighbor_pool[pair.query_id] if doc_id not in banned]
        chosen = pool[:per_pair] if len(pool) <= per_pair else rng.sample(pool, per_pair)
        out.append([doc_texts[doc_id] for doc_id in chosen])
    return out


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_curve: list[tuple[int, float]]  # (step, loss)

    @property
    def initial_loss(self) -> float:
        return self.loss_curve[0][1]

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1]

    def save_loss_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["step", "loss"])
            for step, loss in self.loss_curve:
                writer.writerow([step, f"{loss:.6f}"])


class _BucketCache:
    """Token buckets per text, computed once; all training texts are static."""

    def __init__(self, n_buckets: int):
        from .encoder import token_bucket, tokenize

        self._tokenize = tokenize
        self._bucket = token_bucket
        self.n_buckets = n_buckets
        self._cache: dict[str, list[int]] = {}

    def buckets(self, text: str) -> list[int]:
        cached = self._cache.get(text)
        if cached is None:
            tokens = self._tokenize(text) or ["\x00empty"]
            cached = [self._bucket(t, self.n_buckets) for t in tokens]
            self._cache[text] = cached
        return cached

    def tensorize(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            offsets.append(len(flat))
            flat.extend(self.buckets(text))
        return (torch.tensor(flat, dtype=torch.long),
                torch.tensor(offsets, dtype=torch.long))


def train_encoder(
    pairs: Sequence[TrainingPair],
    docs: Sequence[CorpusDoc],
    instances: Sequence[QueryInstance],
    config: TrainConfig,
) -> TrainResult:
    """Train the encoder; the returned loss curve starts at step 0."""
    if len(pairs) < 2:
        raise ValueError("need at least 2 pairs for in-batch negatives")
    torch.manual_seed(config.seed)
    encoder = fresh_encoder(config.encoder, seed=config.seed)
    mined = mine_hard_negatives(
        encoder, pairs, docs, instances,
        pool_k=config.mining_pool_k, per_pair=config.hard_negatives_per_pair,
        seed=config.seed,
    )
    cache = _BucketCache(config.encoder.n_buckets)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed)
    indices = list(range(len(pairs)))
    curve: list[tuple[int, float]] = []

    for step in range(config.steps + 1):
        batch_idx = rng.sample(indices, min(config.batch_size, len(indices)))
        batch = [pairs[i] for i in batch_idx]
        # Encode each distinct candidate text once per step; negatives are
        # the pair's mined texts plus the other pairs' positives.
        candidates = dict.fromkeys(
            [p.positive_text for p in batch]
            + [text for i in batch_idx for text in mined[i]]
        )
        candidate_row = {text: row for row, text in enumerate(candidates)}
        queries = encoder(cache.tensorize([p.query_text for p in batch]))
        encoded = encoder(cache.tensorize(list(candidates)))
        sims = queries @ encoded.T  # (B, U)

        positive_sims = torch.stack([
            sims[row, candidate_row[p.positive_text]] for row, p in enumerate(batch)
        ])
        negative_rows = []
        for row, (i, pair) in enumerate(zip(batch_idx, batch)):
            negs = [candidate_row[t] for t in mined[i]]
            negs += [
                candidate_row[other.positive_text] for other in batch
                if other.positive_text != pair.positive_text
            ]
            negative_rows.append(negs)
        width = max(len(negs) for negs in negative_rows)
        if width == 0:
            raise ValueError("no negatives available; enlarge the corpus or batch")
        # Padding at -1e4 vanishes under exp() at any sane temperature.
        padded = torch.full((len(batch), width), -1e4)
        for row, negs in enumerate(negative_rows):
            if negs:
                padded[row, : len(negs)] = sims[row, negs]

        loss = info_nce_loss_torch(positive_sims, padded, config.temperature)
        value = float(loss.detach())
        if not torch.isfinite(loss):
            raise TrainingDiverged(step, value)
        if step % config.log_every == 0 or step == config.steps:
            curve.append((step, value))
            logger.debug("step %d loss %.4f", step, value)
        if step == config.steps:
            break
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    checkpoint = Checkpoint(
        config=config.encoder,
        state_dict={k: v.detach().clone() for k, v in encoder.state_dict().items()},
        meta={"steps": config.steps, "seed": config.seed, "pairs": len(pairs),
              "final_loss": curve[-1][1]},
    )
    return TrainResult(checkpoint=checkpoint, loss_curve=curve)
