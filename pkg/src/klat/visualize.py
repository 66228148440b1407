"""Case-study exports: token-salience heatmaps and label-probability charts.

Every figure is rendered to a PNG next to a tab-separated data table
carrying the exact values plotted, so the numbers stay inspectable.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import classifier as clf
from .attention import trace_from_intermediates
from .errors import ConfigurationError
from .retrieval import KnowledgeStore
from .training import build_examples, collate, load_checkpoint, split_documents


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in name)


def salience_heatmap(tokens: list[str], weights: np.ndarray, title: str, out_path: Path) -> None:
    weights = np.asarray(weights, dtype=float).reshape(1, -1)
    width = max(4.0, 0.3 * len(tokens))
    fig, ax = plt.subplots(figsize=(width, 1.8))
    im = ax.imshow(weights, aspect="auto", cmap="Reds")
    ax.set_yticks([])
    ax.set_xticks(range(len(tokens)))
    ax.set_xticklabels(tokens, rotation=90, fontsize=7)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.05)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def probability_chart(label_names: list[str], probs: np.ndarray, gold: set[str],
                      out_path: Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * len(label_names)), 3.0))
    colors = ["#c0392b" if name in gold else "#7f8c8d" for name in label_names]
    ax.bar(range(len(label_names)), probs, color=colors)
    ax.set_xticks(range(len(label_names)))
    ax.set_xticklabels(label_names, rotation=90, fontsize=7)
    ax.set_ylabel("probability")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("label probabilities (gold in red)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def visualize(checkpoint_dir, doc_id: str, out_dir) -> list[Path]:
    """Emit per-gold-label salience maps, a probability chart, data tables
    and the raw attention-trace bundle for one document."""
    model, cfg, tokenizer, vocab = load_checkpoint(checkpoint_dir)
    doc = None
    for split in ("test", "train", "valid"):
        docs, _ = split_documents(cfg, split)
        for d in docs:
            if d.id == doc_id:
                doc = d
                break
        if doc is not None:
            break
    if doc is None:
        raise LookupError(f"document {doc_id!r} not found in any split")
    if model.variant == "no_DA":
        raise ConfigurationError("the attention-free variant has no trace to visualize")

    store = KnowledgeStore(cfg.knowledge_path)
    [example] = build_examples([doc], store, vocab, tokenizer, cfg.max_len)
    doc_ids_t, doc_mask, know_ids, know_mask, _ = collate([example])
    import torch

    with torch.no_grad():
        probs, inter = model(doc_ids_t, doc_mask, know_ids, know_mask,
                             return_intermediates=True)
    probs = probs.squeeze(0).numpy()
    l1, l2 = len(example.doc_ids), len(example.know_ids)
    trace = trace_from_intermediates(inter, 0, doc_len=l1, know_len=l2)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []

    trace_path = out_dir / f"{_safe(doc_id)}_trace.npz"
    trace.save(trace_path)
    files.append(trace_path)

    id_to_token = {i: t for t, i in tokenizer.vocab.items()}
    tokens = [id_to_token.get(int(i), "?") for i in example.doc_ids]

    # One salience map per gold label, from its label-attention row.
    table_lines = ["label\t" + "\t".join(tokens)]
    for name in sorted(doc.labels):
        row = trace.label_doc_attention[vocab.index[name], :l1]
        png = out_dir / f"{_safe(doc_id)}_salience_{_safe(name)}.png"
        salience_heatmap(tokens, row, f"{doc_id}: token salience for {name}", png)
        files.append(png)
        table_lines.append(name + "\t" + "\t".join(f"{v:.6g}" for v in row))
    salience_tsv = out_dir / f"{_safe(doc_id)}_salience.tsv"
    salience_tsv.write_text("\n".join(table_lines) + "\n", encoding="utf-8")
    files.append(salience_tsv)

    png = out_dir / f"{_safe(doc_id)}_label_probs.png"
    probability_chart(vocab.names, probs, doc.labels, png)
    files.append(png)
    decided = clf.decide(probs, cfg.threshold, cfg.nonempty_guard)
    prob_lines = ["label\tprobability\tdecided\tgold"]
    for i, name in enumerate(vocab.names):
        prob_lines.append(f"{name}\t{probs[i]:.6f}\t{decided[i]}\t{int(name in doc.labels)}")
    prob_tsv = out_dir / f"{_safe(doc_id)}_label_probs.tsv"
    prob_tsv.write_text("\n".join(prob_lines) + "\n", encoding="utf-8")
    files.append(prob_tsv)
    return files


def sweep_figure(axis: str, values: list[int], valid_f1: list[float],
                 test_f1: list[float], out_path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(values, valid_f1, marker="o", label="validation")
    ax.plot(values, test_f1, marker="s", label="test")
    ax.set_xlabel(axis)
    ax.set_ylabel("micro-F1")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
