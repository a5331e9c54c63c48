"""Command line for mining pairs, training, and exporting vectors."""

from __future__ import annotations

import argparse
import sys

from .data import load_corpus_docs, load_training_split, parse_kv_config
from .encoder import Checkpoint
from .export import export_vectors
from .pairs import mine_pairs
from .train import TrainConfig, train_encoder


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="citetrainer",
                                     description="contrastive citation-embedding trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="mine pairs and train the encoder")
    train_p.add_argument("--corpus", required=True)
    train_p.add_argument("--split", required=True, help="training-split instances JSONL")
    train_p.add_argument("--config", help="plain-text key-value training config")
    train_p.add_argument("--max-queries", type=int, default=300)
    train_p.add_argument("--pairs-per-level", type=int, default=1334)
    train_p.add_argument("--out", required=True, help="checkpoint path")
    train_p.add_argument("--loss-csv", help="loss curve output")

    export_p = sub.add_parser("export", help="export corpus vectors from a checkpoint")
    export_p.add_argument("--checkpoint", required=True)
    export_p.add_argument("--corpus", required=True)
    export_p.add_argument("--level", choices=["L1", "L2", "L3"], default="L1")
    export_p.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "train":
        config = TrainConfig.from_mapping(parse_kv_config(args.config)) if args.config \
            else TrainConfig()
        docs = load_corpus_docs(args.corpus)
        instances = load_training_split(args.split)
        pairs = mine_pairs(docs, instances, max_queries=args.max_queries,
                           pairs_per_level=args.pairs_per_level, seed=config.seed)
        print(f"mined {len(pairs)} pairs from {len(instances)} split instances")
        result = train_encoder(pairs, docs, instances, config)
        result.checkpoint.save(args.out)
        print(f"loss {result.initial_loss:.4f} -> {result.final_loss:.4f} "
              f"over {config.steps} steps; checkpoint -> {args.out}")
        if args.loss_csv:
            result.save_loss_csv(args.loss_csv)
            print(f"loss curve -> {args.loss_csv}")
        return 0

    if args.command == "export":
        checkpoint = Checkpoint.load(args.checkpoint)
        docs = load_corpus_docs(args.corpus)
        count = export_vectors(checkpoint, docs, args.level, args.out)
        print(f"exported {count} vectors (dim {checkpoint.config.output_dim}) -> {args.out}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
