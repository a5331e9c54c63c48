"""Command-line interface for the corpus, dataset, index, and experiment tools."""

from __future__ import annotations

import datetime as dt
import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import datasets as datasets_mod
from . import harness
from .dense import HashingProvider, build_dense_index, embed_corpus, load_vectors, save_vectors
from .errors import CitepredError
from .harness import ExperimentConfig
from .metrics import render_csv, render_table
from .records import CorpusLevel
from .sparse import build_sparse_index, save_sparse_index


@click.group()
def main():
    """Citation-prediction corpus, retrieval, and evaluation toolkit."""


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _echo_reasons(verb: str, items: list[tuple[str, str]], limit: int = 10) -> None:
    for key, reason in items[:limit]:
        click.echo(f"{verb} {key}: {reason}")
    if len(items) > limit:
        click.echo(f"... and {len(items) - limit} more {verb}")


# --- corpus -----------------------------------------------------------------


@main.group("corpus")
def corpus_group():
    """Build and maintain the three-level paper corpus."""


@corpus_group.command("ingest")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path())
def corpus_ingest(in_dir: str, out_file: str):
    """Ingest raw .json/.jsonl records from a directory into a corpus file."""
    built, rejected = corpus_mod.ingest_directory(in_dir)
    corpus_mod.persist_corpus(built, out_file)
    click.echo(f"ingested {len(built)} records -> {out_file}")
    _echo_reasons("rejected", rejected)


@corpus_group.command("merge")
@click.option("--base", required=True, type=click.Path(exists=True))
@click.option("--batch", required=True, type=click.Path(exists=True))
@click.option("--out", "out_file", required=True, type=click.Path())
def corpus_merge(base: str, batch: str, out_file: str):
    """Merge a new batch into a base corpus (normalized-title dedup)."""
    try:
        merged = corpus_mod.incremental_merge(
            corpus_mod.load_corpus(base), corpus_mod.load_corpus(batch)
        )
    except CitepredError as exc:
        _fail(str(exc))
    corpus_mod.persist_corpus(merged, out_file)
    click.echo(f"merged corpus has {len(merged)} records -> {out_file}")


@corpus_group.command("plan-crawl")
@click.option("--category", default="unknown")
@click.option("--volume", required=True, type=int)
@click.option("--from", "date_from", required=True, help="span start, YYYY-MM-DD")
@click.option("--to", "date_to", required=True, help="span end, YYYY-MM-DD")
def corpus_plan_crawl(category: str, volume: int, date_from: str, date_to: str):
    """Plan adaptive crawl query windows for a category."""
    try:
        plan = corpus_mod.plan_crawl_windows(
            category, volume,
            (dt.date.fromisoformat(date_from), dt.date.fromisoformat(date_to)),
        )
    except (CitepredError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"{plan.category}: {len(plan.windows)} {plan.granularity} windows")
    for start, end in plan.windows:
        click.echo(f"  {start.isoformat()} .. {end.isoformat()}")


@corpus_group.command("remove")
@click.option("--corpus", "corpus_file", required=True, type=click.Path(exists=True))
@click.option("--ids", "ids_file", required=True, type=click.Path(exists=True),
              help="file with one id per line")
@click.option("--out", "out_file", required=True, type=click.Path())
def corpus_remove(corpus_file: str, ids_file: str, out_file: str):
    """Remove papers by id (used to purge dataset query papers)."""
    loaded = corpus_mod.load_corpus(corpus_file)
    ids = [line.strip() for line in Path(ids_file).read_text().splitlines() if line.strip()]
    remaining, report = corpus_mod.remove_papers(loaded, ids)
    corpus_mod.persist_corpus(remaining, out_file)
    click.echo(f"removed {len(report.removed)}, {len(remaining)} remain -> {out_file}")
    if report.not_found:
        click.echo(f"not found: {', '.join(report.not_found)}")


# --- dataset ----------------------------------------------------------------


@main.group("dataset")
def dataset_group():
    """Carve task datasets and verify leakage removal."""


@dataset_group.command("build")
@click.option("--task", type=click.IntRange(1, 2), required=True)
@click.option("--corpus", "corpus_file", required=True, type=click.Path(exists=True))
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--corpus-out", type=click.Path(), default=None,
              help="also write the corpus with query papers removed")
def dataset_build(task: int, corpus_file: str, out_file: str, corpus_out: str | None):
    """Build Task 1 or Task 2 instances from a corpus."""
    loaded = corpus_mod.load_corpus(corpus_file)
    result = datasets_mod.build_task1(loaded) if task == 1 else datasets_mod.build_task2(loaded)
    datasets_mod.save_instances(result.instances, out_file)
    click.echo(f"task {task}: {len(result.instances)} instances -> {out_file}")
    _echo_reasons("excluded", result.excluded)
    if corpus_out:
        remaining, _ = corpus_mod.remove_papers(loaded, result.query_ids)
        corpus_mod.persist_corpus(remaining, corpus_out)
        click.echo(f"corpus minus query papers: {len(remaining)} records -> {corpus_out}")


@dataset_group.command("verify-leakage")
@click.option("--task", type=click.IntRange(1, 2), required=True)
@click.option("--dataset", "dataset_file", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_file", required=True, type=click.Path(exists=True))
def dataset_verify_leakage(task: int, dataset_file: str, corpus_file: str):
    """Fail if any dataset query paper is still inside the corpus."""
    instances = datasets_mod.load_instances(dataset_file, task=task)
    report = datasets_mod.verify_no_leakage(instances, corpus_mod.load_corpus(corpus_file))
    if report.passed:
        click.echo(f"leakage check passed ({len(instances)} instances)")
    else:
        click.echo("leakage check FAILED; offending ids:")
        for record_id in report.overlapping_ids:
            click.echo(f"  {record_id}")
        sys.exit(1)


# --- index ------------------------------------------------------------------


@main.group("index")
def index_group():
    """Build retrieval indexes."""


@index_group.command("sparse")
@click.option("--corpus", "corpus_file", required=True, type=click.Path(exists=True))
@click.option("--level", type=click.Choice(["L1", "L2", "L3"]), required=True)
@click.option("--scorer", type=click.Choice(["bm25", "tfidf"]), default="bm25",
              help="default scorer recorded in the index header")
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--stopwords/--no-stopwords", default=False)
@click.option("--stem/--no-stem", default=False)
def index_sparse(corpus_file: str, level: str, scorer: str, out_file: str,
                 stopwords: bool, stem: bool):
    """Build and persist an inverted index for one corpus level."""
    loaded = corpus_mod.load_corpus(corpus_file)
    index = build_sparse_index(loaded, CorpusLevel.parse(level),
                               stopwords=stopwords, stem=stem, default_scorer=scorer)
    save_sparse_index(index, out_file)
    click.echo(f"{level}: {index.doc_count} docs, {index.vocabulary_size()} terms "
               f"({scorer}) -> {out_file}")


@index_group.command("dense")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), default=None,
              help="embed this corpus with the hashing provider")
@click.option("--vectors", "vectors_file", type=click.Path(exists=True), default=None,
              help="load externally produced vectors instead")
@click.option("--level", type=click.Choice(["L1", "L2", "L3"]), required=True)
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--dim", type=int, default=64, help="hashing-provider dimension")
@click.option("--fmt", type=click.Choice(["jsonl", "binary"]), default="jsonl")
def index_dense(corpus_file, vectors_file, level, out_file, dim, fmt):
    """Validate or produce a vector file for one corpus level."""
    if (corpus_file is None) == (vectors_file is None):
        _fail("provide exactly one of --corpus or --vectors")
    try:
        if vectors_file:
            vectors = load_vectors(vectors_file)
        else:
            loaded = corpus_mod.load_corpus(corpus_file)
            vectors = embed_corpus(loaded, CorpusLevel.parse(level), HashingProvider(dim=dim))
        build_dense_index(vectors, CorpusLevel.parse(level))  # validates
        save_vectors(vectors, out_file, fmt=fmt)
    except CitepredError as exc:
        _fail(str(exc))
    click.echo(f"{level}: {len(vectors)} vectors (dim {vectors[0].dim}) -> {out_file}")


# --- retrieval + experiments -------------------------------------------------


def _config_from(config_file: str | None, **overrides) -> ExperimentConfig:
    try:
        if config_file:
            return ExperimentConfig.from_file(config_file, **overrides)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        config = ExperimentConfig(**overrides)
        config.validate()
        return config
    except CitepredError as exc:
        _fail(str(exc))


@main.command("retrieve")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--queries", "queries_file", required=True, type=click.Path(exists=True),
              help="JSONL with query_id, title, abstract")
@click.option("--mode", type=click.Choice(["fused", "L1", "L2", "L3"]), default=None)
@click.option("--scorer", type=click.Choice(["bm25", "tfidf", "dense"]), default=None)
@click.option("--k", type=int, default=None)
@click.option("--out", "out_file", required=True, type=click.Path())
def retrieve_cmd(config_file, corpus_path, queries_file, mode, scorer, k, out_file):
    """Run retrieval for a query file; emits JSONL results."""
    config = _config_from(config_file, corpus_path=corpus_path, mode=mode,
                          scorer=scorer, k=k)
    loaded = corpus_mod.load_corpus(config.corpus_path)
    searchers = harness.build_searchers(loaded, config)
    with open(queries_file, "r", encoding="utf-8") as qf, open(out_file, "w", encoding="utf-8") as out:
        for line in qf:
            if not line.strip():
                continue
            query = json.loads(line)
            text = f"{query.get('title', '')}\n{query.get('abstract', '')}"
            ranked = harness._retrieve(text, searchers, config, config.k)
            out.write(json.dumps({
                "query_id": query.get("query_id", ""),
                "results": [[doc, score] for doc, score in ranked.entries],
            }) + "\n")
    click.echo(f"retrieval results -> {out_file}")


def _experiment_inputs(config: ExperimentConfig):
    try:
        return harness.load_experiment_inputs(config)
    except CitepredError as exc:
        _fail(str(exc))


@main.command("eval-retriever")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
def eval_retriever_cmd(config_file, out_file):
    """Score the configured retriever against Task 1 ground truth."""
    config = _config_from(config_file, task=1)
    loaded, instances = _experiment_inputs(config)
    report = harness.eval_retriever(loaded, instances, config)
    click.echo(render_table([report]))
    if out_file:
        Path(out_file).write_text(report.to_json() + "\n", encoding="utf-8")
        click.echo(f"report -> {out_file}")


@main.command("run-task")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--task", type=click.IntRange(1, 2), default=None)
@click.option("--R", "r_value", type=int, default=None)
@click.option("--noise", "noise_ratio", type=float, default=None)
@click.option("--endpoint", default=None)
@click.option("--out", "out_file", type=click.Path(), default=None)
def run_task_cmd(config_file, task, r_value, noise_ratio, endpoint, out_file):
    """Run retrieve -> prompt -> generate -> parse -> score for one setting."""
    config = _config_from(config_file, task=task, R=r_value,
                          noise_ratio=noise_ratio, endpoint=endpoint)
    loaded, instances = _experiment_inputs(config)
    try:
        report = harness.run_task(loaded, instances, config)
    except CitepredError as exc:
        _fail(str(exc))
    click.echo(render_table([report]))
    if report.failures:
        click.echo(f"failures: {len(report.failures)} (see report JSON)")
    if out_file:
        Path(out_file).write_text(report.to_json() + "\n", encoding="utf-8")
        click.echo(f"report -> {out_file}")


@main.command("ablate-levels")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
def ablate_levels_cmd(config_file, out_file):
    """Compare single-level retrieval against fusion."""
    config = _config_from(config_file, task=1)
    loaded, instances = _experiment_inputs(config)
    report = harness.ablate_levels(loaded, instances, config)
    click.echo(render_table(report.reports))
    ratio = report.summary.get("fused_over_best_single")
    if ratio is not None:
        click.echo(f"fused / best single level = {ratio:.4f}")
    if out_file:
        report.save(out_file)
        click.echo(f"report -> {out_file}")


@main.command("depth-sweep")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--R-values", "r_values", default="5,10,15,20")
@click.option("--out", "out_file", type=click.Path(), default=None)
def depth_sweep_cmd(config_file, r_values, out_file):
    """Run the task across retrieval depths."""
    config = _config_from(config_file)
    loaded, instances = _experiment_inputs(config)
    values = [int(x) for x in r_values.split(",")]
    report = harness.depth_sweep(loaded, instances, config, values)
    click.echo(render_table(report.reports))
    click.echo(f"best R per metric: {json.dumps(report.summary['best_R_per_metric'])}")
    if out_file:
        report.save(out_file)
        click.echo(f"report -> {out_file}")


@main.command("noise-sweep")
@click.option("--config", "config_file", type=click.Path(exists=True), required=True)
@click.option("--ratios", default="0,0.2,0.4,0.8,1.0")
@click.option("--out", "out_file", type=click.Path(), default=None)
def noise_sweep_cmd(config_file, ratios, out_file):
    """Run the task across noise-injection ratios."""
    config = _config_from(config_file)
    loaded, instances = _experiment_inputs(config)
    values = [float(x) for x in ratios.split(",")]
    report = harness.noise_sweep(loaded, instances, config, values)
    click.echo(render_table(report.reports))
    if out_file:
        report.save(out_file)
        click.echo(f"report -> {out_file}")


@main.command("report")
@click.option("--in", "in_file", required=True, type=click.Path(exists=True))
@click.option("--csv", "csv_file", type=click.Path(), default=None)
def report_cmd(in_file, csv_file):
    """Render a saved report as a table; optionally export CSV."""
    text = Path(in_file).read_text(encoding="utf-8")
    data = json.loads(text)
    if "reports" in data:
        reports = harness.ExperimentReport.from_json(text).reports
    else:
        reports = [harness.MetricReport.from_json(text)]
    click.echo(render_table(reports))
    if csv_file:
        Path(csv_file).write_text(render_csv(reports), encoding="utf-8")
        click.echo(f"csv -> {csv_file}")


if __name__ == "__main__":
    main()
