"""A small trainable text encoder: hashed bag-of-words into an embedding
table, mean pool, linear projection, unit normalization.

Token hashing uses blake2s, so bucket assignment is stable across processes
(Python's builtin hash is salted). A few hundred thousand parameters is
enough to learn citation structure on desk-scale fixtures while keeping
CPU training fast.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(unicodedata.normalize("NFKC", text).casefold())


def token_bucket(token: str, n_buckets: int) -> int:
    digest = hashlib.blake2s(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


@dataclass
class EncoderConfig:
    n_buckets: int = 16384
    embed_dim: int = 48
    output_dim: int = 64
    temperature: float = 0.05

    def to_dict(self) -> dict:
        return {
            "n_buckets": self.n_buckets,
            "embed_dim": self.embed_dim,
            "output_dim": self.output_dim,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        return cls(
            n_buckets=int(data["n_buckets"]),
            embed_dim=int(data["embed_dim"]),
            output_dim=int(data["output_dim"]),
            temperature=float(data["temperature"]),
        )


class TextEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.EmbeddingBag(config.n_buckets, config.embed_dim, mode="mean")
        self.projection = nn.Linear(config.embed_dim, config.output_dim)

    def bucketize(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        """Flat bucket ids plus offsets, the EmbeddingBag input shape."""
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            offsets.append(len(flat))
            tokens = tokenize(text)
            if not tokens:
                tokens = ["\x00empty"]
            flat.extend(token_bucket(t, self.config.n_buckets) for t in tokens)
        device = self.embedding.weight.device
        return (torch.tensor(flat, dtype=torch.long, device=device),
                torch.tensor(offsets, dtype=torch.long, device=device))

    def forward(self, inputs: tuple[torch.Tensor, torch.Tensor]) -> torch.Tensor:
        flat, offsets = inputs
        pooled = self.embedding(flat, offsets)
        projected = self.projection(pooled)
        return torch.nn.functional.normalize(projected, dim=1)

    def encode_texts(self, texts: list[str]) -> torch.Tensor:
        return self(self.bucketize(texts))

    @torch.no_grad()
    def encode_texts_eval(self, texts: list[str], batch_size: int = 256) -> torch.Tensor:
        self.eval()
        chunks = []
        for start in range(0, len(texts), batch_size):
            chunks.append(self.encode_texts(texts[start:start + batch_size]))
        return torch.cat(chunks) if chunks else torch.zeros((0, self.config.output_dim))


@dataclass
class Checkpoint:
    config: EncoderConfig
    state_dict: dict
    meta: dict

    def save(self, path: str | Path) -> None:
        torch.save(
            {"config": self.config.to_dict(), "state_dict": self.state_dict, "meta": self.meta},
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        data = torch.load(path, map_location="cpu", weights_only=False)
        return cls(config=EncoderConfig.from_dict(data["config"]),
                   state_dict=data["state_dict"], meta=dict(data.get("meta", {})))

    def build_encoder(self) -> TextEncoder:
        encoder = TextEncoder(self.config)
        encoder.load_state_dict(self.state_dict)
        encoder.eval()
        return encoder


def fresh_encoder(config: EncoderConfig, seed: int) -> TextEncoder:
    torch.manual_seed(seed)
    return TextEncoder(config)
