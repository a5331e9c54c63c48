"""End-to-end experiment orchestration: retriever evaluation, task runs with
any generator endpoint, the level ablation, and the depth / noise sweeps.

Every experiment runs offline against the scripted mock endpoints; an HTTP
endpoint is just another endpoint name. Per-instance failures are recorded,
scored as zero-prediction instances, and never abort a run.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import generation, metrics
from .datasets import Task1Instance, Task2Instance, load_instances
from .dense import HashingProvider, build_dense_index, embed_corpus, load_vectors
from .errors import (
    CorpusFormatError,
    GenerationError,
    PredictionParseError,
    PredictionSchemaError,
    ValidationError,
)
from .fusion import RRF_C, make_dense_searcher, make_sparse_searcher, retrieve_multilevel, single_level_search
from .metrics import MetricReport, VerificationSet
from .ranking import RankedList
from .records import Corpus, CorpusLevel
from .sparse import build_sparse_index

logger = logging.getLogger(__name__)

DEFAULT_TASK1_KS = (20, 40)
DEFAULT_PACA_KS = (10, 20, 40)
DEFAULT_RETRIEVER_KS = (20, 50)
DEFAULT_DEPTHS = (5, 10, 15, 20)
DEFAULT_NOISE_RATIOS = (0.0, 0.2, 0.4, 0.8, 1.0)


def parse_kv_config(path: str | Path) -> dict[str, str]:
    """Plain-text 'key = value' configuration; '#' starts a comment."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path}: line {line_no}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass
class ExperimentConfig:
    corpus_path: str
    dataset_path: str = ""
    task: int = 1
    scorer: str = "bm25"  # bm25 | tfidf | dense
    mode: str = "fused"  # fused | L1 | L2 | L3
    k: int = 50
    c: float = RRF_C
    dense_mode: str = "exact"
    hash_dim: int = 64
    vector_paths: dict[str, str] = field(default_factory=dict)  # level name -> file
    endpoint: str = "mock-copy"
    model: str = ""
    R: int = 10
    noise_ratio: float = 0.0
    seed: int = 0
    hit_variant: str = "normalized-count"
    task1_ks: tuple[int, ...] = DEFAULT_TASK1_KS
    paca_ks: tuple[int, ...] = DEFAULT_PACA_KS
    retriever_ks: tuple[int, ...] = DEFAULT_RETRIEVER_KS
    workers: int = 1
    output_dir: str = "."
    label: str = ""

    def validate(self) -> None:
        if not Path(self.corpus_path).exists():
            raise ValidationError(f"corpus path does not exist: {self.corpus_path}")
        if self.dataset_path and not Path(self.dataset_path).exists():
            raise ValidationError(f"dataset path does not exist: {self.dataset_path}")
        if self.task not in (1, 2):
            raise ValidationError("task must be 1 or 2")
        if self.k < 1 or self.R < 1:
            raise ValidationError("k and R must be >= 1")
        if not 0.0 <= self.noise_ratio <= 1.0:
            raise ValidationError("noise_ratio must be in [0, 1]")
        if any(k < 1 for k in self.task1_ks + self.paca_ks + self.retriever_ks):
            raise ValidationError("metric k values must be positive")

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        raw = parse_kv_config(path)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        kwargs: dict = {}
        for key, value in raw.items():
            if key in ("task", "k", "R", "hash_dim", "workers", "seed"):
                kwargs[key] = int(value)
            elif key in ("c", "noise_ratio"):
                kwargs[key] = float(value)
            elif key in ("task1_ks", "paca_ks", "retriever_ks"):
                kwargs[key] = _parse_int_list(str(value))
            elif key.startswith("vectors."):
                kwargs.setdefault("vector_paths", {})[key.split(".", 1)[1].upper()] = str(value)
            else:
                kwargs[key] = value
        config = cls(**kwargs)
        config.validate()
        return config

    def describe(self) -> str:
        if self.label:
            return self.label
        return f"{self.scorer}/{self.mode}/R={self.R}/noise={self.noise_ratio:g}"


def build_searchers(corpus: Corpus, config: ExperimentConfig) -> dict[CorpusLevel, "object"]:
    """One searcher per corpus level, per the configured retriever family."""
    searchers = {}
    if config.scorer in ("bm25", "tfidf"):
        for level in CorpusLevel:
            index = build_sparse_index(corpus, level)
            searchers[level] = make_sparse_searcher(index, scorer=config.scorer)
    elif config.scorer == "dense":
        provider = HashingProvider(dim=config.hash_dim, seed=config.seed)
        for level in CorpusLevel:
            path = config.vector_paths.get(level.name)
            vectors = load_vectors(path) if path else embed_corpus(corpus, level, provider)
            index = build_dense_index(
                vectors, level, approximate=config.dense_mode == "approximate",
                seed=config.seed,
            )
            searchers[level] = make_dense_searcher(index, provider, mode=config.dense_mode)
    else:
        raise ValidationError(f"unknown scorer {config.scorer!r}")
    return searchers


def _retrieve(query: str, searchers, config: ExperimentConfig, k: int) -> RankedList:
    if config.mode == "fused":
        return retrieve_multilevel(query, searchers, k, c=config.c).fused.top(k)
    level = CorpusLevel.parse(config.mode)
    return single_level_search(query, searchers, level, k)


def _instance_seed(base_seed: int, query_id: str) -> int:
    digest = hashlib.blake2s(f"{base_seed}:{query_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# Retriever evaluation
# ---------------------------------------------------------------------------


def eval_retriever(
    corpus: Corpus,
    instances: Sequence[Task1Instance],
    config: ExperimentConfig,
    searchers=None,
) -> MetricReport:
    """Recall@k and MRR@k of the configured retriever against reference-list
    ground truth, resolved to corpus ids."""
    searchers = searchers or build_searchers(corpus, config)
    max_k = max(config.retriever_ks)
    ranked_ids: list[list[str]] = []
    relevant_sets: list[set[str]] = []
    skipped = 0
    for instance in instances:
        relevant = {
            doc_id
            for title in instance.ground_truth_refs
            if (doc_id := corpus.resolve_title(title)) is not None
        }
        if not relevant:
            skipped += 1
            continue
        query = f"{instance.title}\n{instance.abstract}"
        ranked = _retrieve(query, searchers, config, max_k)
        ranked_ids.append(ranked.ids())
        relevant_sets.append(relevant)
    if not ranked_ids:
        raise ValidationError("no task-1 instance has ground truth resolvable in the corpus")
    values: dict[str, float] = {}
    for k in config.retriever_ks:
        recalls = [
            metrics.recall_at_k(ids, rel, k, normalize=False)
            for ids, rel in zip(ranked_ids, relevant_sets)
        ]
        values[f"Recall@{k}"] = sum(recalls) / len(recalls)
        values[f"MRR@{k}"] = metrics.mrr_at_k(ranked_ids, relevant_sets, k)
    report = MetricReport(
        task=1,
        configuration=config.describe(),
        values=values,
        instance_count=len(ranked_ids),
        meta={"skipped_unresolvable": skipped},
    )
    report.validate()
    return report


# ---------------------------------------------------------------------------
# Task runs
# ---------------------------------------------------------------------------


@dataclass
class _InstanceOutcome:
    instance: object
    output: generation.GenerationOutput | None
    failure: str | None = None
    parse_error: str | None = None


def _process_instance(instance, searchers, corpus: Corpus, config: ExperimentConfig,
                      endpoint) -> _InstanceOutcome:
    try:
        query = f"{instance.title}\n{instance.abstract}"
        retrieved = _retrieve(query, searchers, config, config.R)
        if config.noise_ratio > 0:
            if isinstance(instance, Task2Instance):
                truth_titles = [t for s in instance.sections for t in s.targets.values()]
            else:
                truth_titles = instance.ground_truth_refs
            truth_ids = {
                doc_id for t in truth_titles if (doc_id := corpus.resolve_title(t)) is not None
            }
            retrieved = generation.inject_noise(
                retrieved, config.noise_ratio, corpus, truth_ids,
                seed=_instance_seed(config.seed, instance.query_id),
            )
        envelope = generation.build_prompt(instance, retrieved, corpus, config.R)
        raw = generation.call_generator(envelope, endpoint, model=config.model, sleep=lambda _: None)
    except (GenerationError, ValidationError) as exc:
        return _InstanceOutcome(instance=instance, output=None, failure=str(exc))
    try:
        task = 2 if isinstance(instance, Task2Instance) else 1
        output = generation.parse_prediction(raw, task=task)
    except (PredictionParseError, PredictionSchemaError) as exc:
        # Unusable generations score as zero predictions, not failures.
        return _InstanceOutcome(instance=instance, output=None, parse_error=str(exc))
    return _InstanceOutcome(instance=instance, output=output)


def run_task(
    corpus: Corpus,
    instances: Sequence[Task1Instance] | Sequence[Task2Instance],
    config: ExperimentConfig,
    *,
    endpoint=None,
    searchers=None,
    verification: VerificationSet | None = None,
) -> MetricReport:
    """Retrieve, prompt, generate, parse, and score every instance."""
    if not instances:
        raise ValidationError("no instances to run")
    searchers = searchers or build_searchers(corpus, config)
    if endpoint is None:
        endpoint = generation.resolve_endpoint(
            config.endpoint, model=config.model,
            api_key=os.environ.get("CITEPRED_API_KEY"),
        )
    if verification is None:
        gt_titles: list[str] = []
        for instance in instances:
            if isinstance(instance, Task2Instance):
                gt_titles.extend(t for s in instance.sections for t in s.targets.values())
            else:
                gt_titles.extend(instance.ground_truth_refs)
        verification = VerificationSet.from_titles(
            (record.title for record in corpus), gt_titles
        )

    if config.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(
                pool.map(
                    lambda inst: _process_instance(inst, searchers, corpus, config, endpoint),
                    instances,
                )
            )
    else:
        outcomes = [
            _process_instance(inst, searchers, corpus, config, endpoint) for inst in instances
        ]

    task = config.task
    category_of = corpus.categories()
    values: dict[str, float] = {}
    failures = [
        {"query_id": o.instance.query_id, "reason": o.failure}
        for o in outcomes if o.failure is not None
    ]
    parse_errors = sum(1 for o in outcomes if o.parse_error is not None)

    if task == 1:
        per_metric: dict[str, list[float]] = {}
        for outcome in outcomes:
            predicted = outcome.output.predicted_titles if outcome.output else []
            gt = outcome.instance.ground_truth_refs
            for k in config.task1_ks:
                per_metric.setdefault(f"Recall@{k}", []).append(
                    metrics.recall_at_k(predicted, gt, k))
                per_metric.setdefault(f"NDCG@{k}", []).append(
                    metrics.ndcg_at_k(predicted, gt, k))
                per_metric.setdefault(f"Hit@{k}", []).append(
                    metrics.hit_at_k(predicted, gt, k, variant=config.hit_variant))
        values.update({name: sum(v) / len(v) for name, v in per_metric.items()})
    else:
        candidates: list[list[str]] = []
        truths: list[str] = []
        for outcome in outcomes:
            inst: Task2Instance = outcome.instance
            got = outcome.output.placeholder_candidates if outcome.output else {}
            for section in inst.sections:
                for index, truth in section.targets.items():
                    candidates.append(got.get(index, []))
                    truths.append(truth)
        for k in config.paca_ks:
            values[f"PACA@{k}"] = metrics.paca_at_k(candidates, truths, k)

    cde_values: list[float] = []
    halluc_values: list[float] = []
    for outcome in outcomes:
        titles = outcome.output.all_titles() if outcome.output else []
        if not titles:
            continue
        try:
            cde_values.append(metrics.cde(titles, category_of))
        except metrics.UndefinedMetricError:
            pass
        halluc_values.append(metrics.hallucination_rate(titles, verification))
    if cde_values:
        values["CDE"] = sum(cde_values) / len(cde_values)
    if halluc_values:
        values["Halluc"] = sum(halluc_values) / len(halluc_values)

    report = MetricReport(
        task=task,
        configuration=config.describe(),
        values=values,
        instance_count=len(instances) - len(failures),
        failures=failures,
        meta={
            "dataset_size": len(instances),
            "parse_errors": parse_errors,
            "endpoint": getattr(endpoint, "name", config.endpoint),
            "R": config.R,
            "noise_ratio": config.noise_ratio,
        },
    )
    report.validate()
    return report


# ---------------------------------------------------------------------------
# Suites: ablation, depth sweep, noise sweep
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    kind: str
    reports: list[MetricReport]
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "reports": [r.to_json_dict() for r in self.reports],
                "summary": self.summary,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        data = json.loads(text)
        return cls(
            kind=str(data["kind"]),
            reports=[MetricReport.from_json_dict(r) for r in data["reports"]],
            summary=dict(data["summary"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def ablate_levels(
    corpus: Corpus,
    instances: Sequence[Task1Instance],
    config: ExperimentConfig,
    searchers=None,
) -> ExperimentReport:
    """MRR@50 for each single level versus the fused retriever."""
    searchers = searchers or build_searchers(corpus, config)
    reports: list[MetricReport] = []
    mrr_key = f"MRR@{max(config.retriever_ks)}"
    for mode in ("L1", "L2", "L3", "fused"):
        sub = ExperimentConfig(**{**config.__dict__, "mode": mode, "label": mode})
        reports.append(eval_retriever(corpus, instances, sub, searchers=searchers))
    by_mode = {r.configuration: r.values[mrr_key] for r in reports}
    best_single = max(by_mode[m] for m in ("L1", "L2", "L3"))
    fused = by_mode["fused"]
    summary = {
        "metric": mrr_key,
        "per_mode": by_mode,
        "best_single_level": best_single,
        "fused": fused,
        "fused_over_best_single": fused / best_single if best_single > 0 else None,
        "relative_delta_pct": {
            m: 100.0 * (fused - by_mode[m]) / by_mode[m] if by_mode[m] > 0 else None
            for m in ("L1", "L2", "L3")
        },
    }
    return ExperimentReport(kind="level-ablation", reports=reports, summary=summary)


def _best_configuration(reports: Sequence[MetricReport], metric: str) -> str:
    lower_is_better = metric.lower().startswith("halluc")
    scored = [(r.values[metric], r.configuration) for r in reports if metric in r.values]
    if not scored:
        return ""
    return (min if lower_is_better else max)(scored)[1]


def depth_sweep(
    corpus: Corpus,
    instances,
    config: ExperimentConfig,
    r_values: Iterable[int] = DEFAULT_DEPTHS,
    *,
    endpoint=None,
    searchers=None,
) -> ExperimentReport:
    """Run the task at several retrieval depths; flag the best R per metric."""
    searchers = searchers or build_searchers(corpus, config)
    reports: list[MetricReport] = []
    for r in r_values:
        sub = ExperimentConfig(**{**config.__dict__, "R": r, "label": f"R={r}"})
        reports.append(
            run_task(corpus, instances, sub, endpoint=endpoint, searchers=searchers)
        )
    metric_names = sorted({name for report in reports for name in report.values})
    summary = {
        "r_values": list(r_values),
        "best_R_per_metric": {
            name: _best_configuration(reports, name) for name in metric_names
        },
    }
    return ExperimentReport(kind="depth-sweep", reports=reports, summary=summary)


def noise_sweep(
    corpus: Corpus,
    instances,
    config: ExperimentConfig,
    ratios: Iterable[float] = DEFAULT_NOISE_RATIOS,
    *,
    endpoint=None,
    searchers=None,
) -> ExperimentReport:
    """Run the task at several noise-injection ratios."""
    searchers = searchers or build_searchers(corpus, config)
    reports: list[MetricReport] = []
    for ratio in ratios:
        sub = ExperimentConfig(
            **{**config.__dict__, "noise_ratio": ratio, "label": f"noise={ratio:g}"}
        )
        reports.append(
            run_task(corpus, instances, sub, endpoint=endpoint, searchers=searchers)
        )
    summary = {"ratios": list(ratios)}
    return ExperimentReport(kind="noise-sweep", reports=reports, summary=summary)


def paired_bootstrap(
    values_a: Sequence[float],
    values_b: Sequence[float],
    *,
    n_resamples: int = 2000,
    seed: int = 0,
) -> float:
    """Two-sided paired-bootstrap p-value for mean(a) != mean(b).

    The choice of test is an assumption: it resamples per-instance score
    pairs with replacement and reports how often the mean difference crosses
    zero.
    """
    import random as _random

    if len(values_a) != len(values_b) or not values_a:
        raise ValidationError("paired_bootstrap needs equal-length, non-empty sequences")
    diffs = [a - b for a, b in zip(values_a, values_b)]
    rng = _random.Random(seed)
    n = len(diffs)
    at_or_below = 0
    at_or_above = 0
    for _ in range(n_resamples):
        mean = sum(diffs[rng.randrange(n)] for _ in range(n)) / n
        if mean <= 0:
            at_or_below += 1
        if mean >= 0:
            at_or_above += 1
    return min(1.0, 2.0 * min(at_or_below, at_or_above) / n_resamples)


def load_experiment_inputs(config: ExperimentConfig) -> tuple[Corpus, list]:
    """Load the corpus and the task dataset named by the configuration."""
    from .corpus import load_corpus

    corpus = load_corpus(config.corpus_path)
    if not config.dataset_path:
        raise ValidationError("config has no dataset_path")
    instances = load_instances(config.dataset_path, task=config.task)
    if not instances:
        raise CorpusFormatError(f"no instances in {config.dataset_path}")
    return corpus, instances
