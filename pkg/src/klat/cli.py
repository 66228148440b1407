"""Command-line entry points for the whole pipeline."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .config import TrainConfig
from .corpus import read_jsonl
from .metrics import MetricsReport


def _load_config(config_path: str | None, overrides: dict) -> TrainConfig:
    cfg = TrainConfig.load(config_path) if config_path else TrainConfig()
    clean = {k: v for k, v in overrides.items() if v is not None}
    return cfg.replace(**clean) if clean else cfg


@click.group()
def main():
    """Knowledge-enhanced multi-label text classification toolkit."""


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True),
              help="JSONL corpus file to attach knowledge to.")
@click.option("--cache", "cache_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--backend", type=click.Choice(["live", "fixture"]), default="fixture",
              show_default=True)
@click.option("--fixture-dir", type=click.Path(exists=True), default=None)
@click.option("--base-url", default="https://tagme.d4science.org/tagme")
@click.option("--workers", default=4, show_default=True)
def retrieve(corpus_path, cache_dir, out_path, threshold, backend, fixture_dir,
             base_url, workers):
    """Attach encyclopedia knowledge to every corpus document."""
    from .retrieval import (FixtureBackend, KnowledgeStore, LiveBackend,
                            RetrievalCache, retrieve_corpus_knowledge)

    docs = read_jsonl(Path(corpus_path))
    if backend == "fixture":
        if not fixture_dir:
            raise click.UsageError("--fixture-dir is required with --backend fixture")
        be = FixtureBackend(fixture_dir)
    else:
        be = LiveBackend(base_url)
    cache = RetrievalCache(cache_dir)
    store = KnowledgeStore(out_path)
    summary = retrieve_corpus_knowledge(
        docs, cache, threshold, be, store, max_workers=workers,
        progress=lambda doc_id, source: click.echo(f"{doc_id}\t{source}"),
    )
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--raw", "raw_dir", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", required=True,
              type=click.Choice(["rcv1v2", "aapd", "reuters21578"]))
@click.option("--out", "out_dir", required=True, type=click.Path())
def preprocess(raw_dir, fmt, out_dir):
    """Convert a raw public corpus into the JSONL dataset layout."""
    from .ingest import convert

    stats = convert(raw_dir, fmt, out_dir)
    click.echo(json.dumps(stats, sort_keys=True))


_train_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None),
    click.option("--data-dir", default=None),
    click.option("--knowledge", "knowledge_path", default=None),
    click.option("--vectors", "vectors_path", default=None),
    click.option("--checkpoint-dir", default=None),
    click.option("--max-len", type=int, default=None),
    click.option("--hidden", type=int, default=None),
    click.option("--batch-size", type=int, default=None),
    click.option("--learning-rate", type=float, default=None),
    click.option("--max-epochs", type=int, default=None),
    click.option("--patience", "early_stop_patience", type=int, default=None),
    click.option("--beta-doc", type=float, default=None),
    click.option("--threshold", type=float, default=None),
    click.option("--seed", type=int, default=None),
]


def train_options(fn):
    for opt in reversed(_train_options):
        fn = opt(fn)
    return fn


def _overrides(kwargs) -> dict:
    kwargs = dict(kwargs)
    kwargs.pop("config_path", None)
    beta_doc = kwargs.get("beta_doc")
    if beta_doc is not None:
        kwargs["beta_know"] = 1.0 - beta_doc
    return kwargs


@main.command()
@train_options
def train(config_path, **kwargs):
    """Train the full model (or the configured variant)."""
    from .training import train as run_train

    cfg = _load_config(config_path, _overrides(kwargs))
    record = run_train(cfg, log=click.echo)
    click.echo(record.to_json())


@main.command()
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["train", "valid", "test"]), default="test",
              show_default=True)
@click.option("--dump", "dump_path", type=click.Path(), default=None,
              help="Also write per-document top-k predictions to this file.")
def evaluate(checkpoint_dir, split, dump_path):
    """Evaluate a checkpoint on a split and print the metrics table."""
    from .training import dump_predictions, evaluate as run_eval

    report: MetricsReport = run_eval(checkpoint_dir, split)
    click.echo(report.as_table())
    click.echo(report.to_json())
    if dump_path:
        dump_predictions(checkpoint_dir, split, dump_path)


@main.command()
@click.option("--variant", required=True,
              type=click.Choice(["all", "full", "no_KR", "no_DEm", "no_DEn", "no_LEm", "no_DA"]))
@train_options
def ablate(variant, config_path, **kwargs):
    """Train ablation variants and print the comparison table."""
    from .training import ABLATION_ORDER, ablate as run_ablate, ablation_table, train as run_train

    cfg = _load_config(config_path, _overrides(kwargs))
    records = {}
    variants = list(ABLATION_ORDER) + ["full"] if variant == "all" else [variant]
    for v in variants:
        click.echo(f"== variant {v} ==")
        if v == "full":
            records[v] = run_train(cfg, log=click.echo)
        else:
            records[v] = run_ablate(cfg, v, log=click.echo)
    click.echo(ablation_table(records))


@main.command()
@click.option("--axis", required=True, type=click.Choice(["length", "hidden_dim"]))
@click.option("--values", required=True, help="Comma-separated integers, e.g. 100,250,400.")
@click.option("--out-dir", default="sweep_out", show_default=True)
@train_options
def sweep(axis, values, out_dir, config_path, **kwargs):
    """Sensitivity sweep over input length or hidden width."""
    from .training import evaluate as run_eval, sweep as run_sweep, sweep_table
    from .visualize import sweep_figure

    cfg = _load_config(config_path, _overrides(kwargs))
    vals = [int(v) for v in values.split(",") if v]
    records = run_sweep(cfg, axis, vals, log=click.echo)
    tests = [run_eval(r.checkpoint_dir, "test") for r in records]
    table = sweep_table(axis, vals, records, tests)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep_{axis}.tsv").write_text(table + "\n", encoding="utf-8")
    sweep_figure(axis, vals, [r.metrics["micro_f1"] for r in records],
                 [t.micro_f1 for t in tests], out / f"sweep_{axis}.png")
    click.echo(table)
    click.echo(f"wrote {out / f'sweep_{axis}.tsv'} and {out / f'sweep_{axis}.png'}")


@main.command()
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(exists=True))
@click.option("--doc", "doc_id", required=True)
@click.option("--out-dir", default="viz_out", show_default=True)
def visualize(checkpoint_dir, doc_id, out_dir):
    """Export salience heatmaps and the label-probability chart for a document."""
    from .visualize import visualize as run_viz

    for path in run_viz(checkpoint_dir, doc_id, out_dir):
        click.echo(str(path))


if __name__ == "__main__":
    main()
