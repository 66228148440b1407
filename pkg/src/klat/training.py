"""Training loop, evaluation, ablation harness and sensitivity sweeps.

Checkpoints are directories: ``weights.pt`` (state dict), ``manifest.json``
(parameter name -> shape / sha256 / trainable flag), ``config.yaml``,
``tokenizer.json`` and ``labels.txt``. Every reported metric is
recomputable from the checkpoint alone.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from . import classifier as clf
from .config import TrainConfig
from .corpus import (
    Document,
    LabelVocabulary,
    Tokenizer,
    TokenizedExample,
    load_dataset,
    make_example,
    split_validation,
)
from .errors import ConfigurationError
from .metrics import MetricsReport, micro_prf
from .model import VARIANTS, VARIANT_TOUCHED_PREFIXES, KnowledgeLabelModel
from .representation import embed_labels, load_vector_table, random_label_matrix
from .retrieval import KnowledgeStore
from .seeding import derive_seed


@dataclass
class RunRecord:
    config: dict
    train_losses: list = field(default_factory=list)
    valid_losses: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    checkpoint_dir: str = ""
    checkpoint_hash: str = ""
    stopped_epoch: int = 0
    seeds: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def collate(examples: list[TokenizedExample]):
    """Pad a batch to its max lengths; PAD id is 0, mask 0 at padding."""
    l1 = max(len(e.doc_ids) for e in examples)
    l2 = max(len(e.know_ids) for e in examples)
    n = len(examples)
    doc_ids = torch.zeros(n, l1, dtype=torch.long)
    doc_mask = torch.zeros(n, l1, dtype=torch.long)
    know_ids = torch.zeros(n, l2, dtype=torch.long)
    know_mask = torch.zeros(n, l2, dtype=torch.long)
    ys = torch.zeros(n, len(examples[0].y), dtype=torch.long)
    for i, e in enumerate(examples):
        doc_ids[i, : len(e.doc_ids)] = torch.as_tensor(e.doc_ids)
        doc_mask[i, : len(e.doc_mask)] = torch.as_tensor(e.doc_mask)
        know_ids[i, : len(e.know_ids)] = torch.as_tensor(e.know_ids)
        know_mask[i, : len(e.know_mask)] = torch.as_tensor(e.know_mask)
        ys[i] = torch.as_tensor(e.y)
    return doc_ids, doc_mask, know_ids, know_mask, ys


def build_examples(docs: list[Document], store: KnowledgeStore, vocab, tokenizer, max_len):
    out = []
    for doc in docs:
        rec = store.get(doc.id)
        know_text = rec.text if rec is not None else doc.text
        out.append(make_example(doc, know_text, vocab, tokenizer, max_len))
    return out


def build_label_matrix(cfg: TrainConfig, vocab: LabelVocabulary) -> np.ndarray:
    if cfg.variant == "no_LEm" or not cfg.vectors_path:
        mat = random_label_matrix(vocab, cfg.label_dim, cfg.seed)
    else:
        table = load_vector_table(cfg.vectors_path)
        mat = embed_labels(vocab, table, cfg.seed)
        if mat.matrix.shape[1] != cfg.label_dim:
            raise ConfigurationError(
                f"vector table dim {mat.matrix.shape[1]} != label_dim {cfg.label_dim}"
            )
    return mat.matrix


def build_model(cfg: TrainConfig, vocab_size: int, label_matrix: np.ndarray) -> KnowledgeLabelModel:
    return KnowledgeLabelModel(
        vocab_size=vocab_size,
        label_matrix=label_matrix,
        variant=cfg.variant,
        plm_dim=cfg.plm_dim,
        proj_dim=cfg.proj_dim,
        hidden=cfg.hidden,
        bottleneck=cfg.bottleneck,
        bilinear=cfg.bilinear,
        head_dim=cfg.head_dim,
        beta_doc=cfg.beta_doc,
        beta_know=cfg.beta_know,
        label_attention_softmax=cfg.label_attention_softmax,
        shared_encoder=cfg.shared_encoder,
        seed=cfg.seed,
    )


def state_dict_manifest(model: torch.nn.Module) -> dict:
    trainable = {n for n, p in model.named_parameters() if p.requires_grad}
    manifest = {}
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        manifest[name] = {
            "shape": list(arr.shape),
            "sha256": hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest(),
            "trainable": name in trainable,
        }
    return manifest


def inventory_diff(manifest_a: dict, manifest_b: dict) -> set[str]:
    """Names added, removed, resized, re-valued or re-flagged between manifests."""
    touched = set()
    for name in set(manifest_a) | set(manifest_b):
        if manifest_a.get(name) != manifest_b.get(name):
            touched.add(name)
    return touched


def save_checkpoint(model, cfg: TrainConfig, tokenizer: Tokenizer,
                    vocab: LabelVocabulary, directory) -> str:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / "weights.pt")
    manifest = state_dict_manifest(model)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True),
                                             encoding="utf-8")
    cfg.save(directory / "config.yaml")
    tokenizer.save(directory / "tokenizer.json")
    vocab.save(directory / "labels.txt")
    digest = hashlib.sha256()
    for name in sorted(manifest):
        digest.update(name.encode())
        digest.update(manifest[name]["sha256"].encode())
    return digest.hexdigest()


def load_checkpoint(directory):
    directory = Path(directory)
    if not (directory / "weights.pt").exists():
        raise ConfigurationError(f"no checkpoint in {directory}")
    cfg = TrainConfig.load(directory / "config.yaml")
    tokenizer = Tokenizer.load(directory / "tokenizer.json")
    vocab = LabelVocabulary.load(directory / "labels.txt")
    state = torch.load(directory / "weights.pt", weights_only=True)
    label_matrix = state["label_embedding"].numpy()
    model = build_model(cfg, tokenizer.size, label_matrix)
    model.load_state_dict(state)
    model.eval()
    return model, cfg, tokenizer, vocab


def _forward_batch(model, batch):
    doc_ids, doc_mask, know_ids, know_mask, ys = batch
    probs = model(doc_ids, doc_mask, know_ids, know_mask)
    return probs, ys


def _epoch_batches(examples, batch_size, rng: random.Random | None):
    order = list(range(len(examples)))
    if rng is not None:
        rng.shuffle(order)
    for i in range(0, len(order), batch_size):
        yield [examples[j] for j in order[i : i + batch_size]]


def run_inference(model, examples, batch_size=256):
    """Probabilities and targets over a split, deterministic order."""
    model.eval()
    probs_out, ys_out = [], []
    with torch.no_grad():
        for chunk in _epoch_batches(examples, batch_size, rng=None):
            probs, ys = _forward_batch(model, collate(chunk))
            probs_out.append(probs.numpy())
            ys_out.append(ys.numpy())
    return np.concatenate(probs_out), np.concatenate(ys_out)


def metrics_on(model, examples, cfg: TrainConfig) -> MetricsReport:
    probs, ys = run_inference(model, examples)
    decided = clf.decide(probs, cfg.threshold, cfg.nonempty_guard)
    return micro_prf(ys, decided)


def load_training_data(cfg: TrainConfig):
    train_docs, test_docs, vocab = load_dataset(cfg.data_dir, cfg.dataset_format)
    store = KnowledgeStore(cfg.knowledge_path)
    tokenizer = Tokenizer.build(
        [d.text for d in train_docs]
        + [store.get(d.id).text for d in train_docs if store.get(d.id) is not None],
        min_count=cfg.min_token_count,
        max_size=cfg.max_vocab_size,
    )
    return train_docs, test_docs, vocab, store, tokenizer


def train(cfg: TrainConfig, log=print) -> RunRecord:
    """Train with early stopping on validation loss; keep the best checkpoint."""
    t0 = time.monotonic()
    seeds = {
        "master": cfg.seed,
        "split": derive_seed(cfg.seed, "split"),
        "shuffle": derive_seed(cfg.seed, "shuffle"),
        "init": cfg.seed,
    }
    torch.manual_seed(derive_seed(cfg.seed, "torch"))

    train_docs, _, vocab, store, tokenizer = load_training_data(cfg)
    train_docs, valid_docs = split_validation(train_docs, cfg.validation_fraction, seeds["split"])
    train_ex = build_examples(train_docs, store, vocab, tokenizer, cfg.max_len)
    valid_ex = build_examples(valid_docs, store, vocab, tokenizer, cfg.max_len)

    label_matrix = build_label_matrix(cfg, vocab)
    model = build_model(cfg, tokenizer.size, label_matrix)
    # Inventory of the freshly built model, for ablation architecture diffs.
    ckpt_dir = Path(cfg.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    (ckpt_dir / "manifest_init.json").write_text(
        json.dumps(state_dict_manifest(model), indent=1, sort_keys=True), encoding="utf-8"
    )
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=cfg.learning_rate,
                                 betas=(cfg.adam_beta1, cfg.adam_beta2))
    shuffle_rng = random.Random(seeds["shuffle"])

    record = RunRecord(config=json.loads(json.dumps(asdict_config(cfg))), seeds=seeds)
    best_valid = float("inf")
    best_state = None
    since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        total, count = 0.0, 0
        for chunk in _epoch_batches(train_ex, cfg.batch_size, shuffle_rng):
            optimizer.zero_grad()
            probs, ys = _forward_batch(model, collate(chunk))
            batch_loss = clf.loss(probs, ys)
            if not torch.isfinite(batch_loss):
                raise RuntimeError(f"non-finite training loss at epoch {epoch}")
            batch_loss.backward()
            optimizer.step()
            total += batch_loss.item() * len(chunk)
            count += len(chunk)
        train_loss = total / count

        model.eval()
        with torch.no_grad():
            vprobs, vys = run_inference(model, valid_ex)
            valid_loss = float(clf.loss(torch.as_tensor(vprobs), torch.as_tensor(vys)))
        record.train_losses.append(train_loss)
        record.valid_losses.append(valid_loss)
        log(f"epoch {epoch:3d}  train loss {train_loss:.4f}  valid loss {valid_loss:.4f}")

        if valid_loss < best_valid - 1e-12:
            best_valid = valid_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                log(f"early stop at epoch {epoch} (no improvement for {since_best} epochs)")
                break

    record.stopped_epoch = len(record.train_losses)
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    record.metrics = asdict_report(metrics_on(model, valid_ex, cfg))
    record.checkpoint_hash = save_checkpoint(model, cfg, tokenizer, vocab, cfg.checkpoint_dir)
    record.checkpoint_dir = str(cfg.checkpoint_dir)
    record.wall_clock_s = time.monotonic() - t0
    record.save(Path(cfg.checkpoint_dir) / "run_record.json")
    return record


def asdict_config(cfg: TrainConfig) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def asdict_report(report: MetricsReport) -> dict:
    from dataclasses import asdict

    return asdict(report)


def split_documents(cfg: TrainConfig, split: str):
    train_docs, test_docs, vocab = load_dataset(cfg.data_dir, cfg.dataset_format)
    if split == "test":
        return test_docs, vocab
    tr, va = split_validation(train_docs, cfg.validation_fraction,
                              derive_seed(cfg.seed, "split"))
    if split == "train":
        return tr, vocab
    if split == "valid":
        return va, vocab
    raise ValueError(f"unknown split {split!r}")


def evaluate(checkpoint_dir, split: str = "test") -> MetricsReport:
    model, cfg, tokenizer, vocab = load_checkpoint(checkpoint_dir)
    docs, data_vocab = split_documents(cfg, split)
    if data_vocab != vocab:
        raise ConfigurationError("label vocabulary mismatch between checkpoint and dataset")
    store = KnowledgeStore(cfg.knowledge_path)
    examples = build_examples(docs, store, vocab, tokenizer, cfg.max_len)
    return metrics_on(model, examples, cfg)


def dump_predictions(checkpoint_dir, split: str, out_path, top_k: int = 5) -> None:
    """Tab-separated rows: doc id then top-k "label:prob" cells."""
    model, cfg, tokenizer, vocab = load_checkpoint(checkpoint_dir)
    docs, _ = split_documents(cfg, split)
    store = KnowledgeStore(cfg.knowledge_path)
    examples = build_examples(docs, store, vocab, tokenizer, cfg.max_len)
    probs, _ = run_inference(model, examples)
    with open(out_path, "w", encoding="utf-8") as fh:
        for ex, row in zip(examples, probs):
            top = np.argsort(-row)[:top_k]
            cells = [f"{vocab.names[i]}:{row[i]:.4f}" for i in top]
            fh.write("\t".join([ex.doc_id] + cells) + "\n")


ABLATION_ORDER = ("no_KR", "no_DEm", "no_DEn", "no_LEm", "no_DA")


def ablate(cfg: TrainConfig, variant: str, log=print) -> RunRecord:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    sub = cfg.replace(variant=variant,
                      checkpoint_dir=str(Path(cfg.checkpoint_dir).parent
                                         / f"{Path(cfg.checkpoint_dir).name}_{variant}"))
    return train(sub, log=log)


def ablation_table(records: dict[str, RunRecord]) -> str:
    """Comparison table: the five ablation rows first, full model last."""
    lines = [f"{'variant':<10} {'HL(-)':>8} {'mP(+)':>8} {'mR(+)':>8} {'mF1(+)':>8}"]
    order = [v for v in ABLATION_ORDER if v in records]
    if "full" in records:
        order.append("full")
    for name in order:
        m = records[name].metrics
        lines.append(
            f"{name:<10} {m['hamming_loss']:>8.4f} {m['micro_precision']:>8.3f} "
            f"{m['micro_recall']:>8.3f} {m['micro_f1']:>8.3f}"
        )
    return "\n".join(lines)


def sweep(cfg: TrainConfig, axis: str, values: list[int], log=print) -> list[RunRecord]:
    """One full run per value of max_len or hidden width, all else fixed."""
    if axis not in ("length", "hidden_dim"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ValueError("values must be non-empty")
    records = []
    for value in values:
        overrides = {"max_len": int(value)} if axis == "length" else {"hidden": int(value)}
        sub = cfg.replace(
            checkpoint_dir=str(Path(cfg.checkpoint_dir).parent
                               / f"{Path(cfg.checkpoint_dir).name}_{axis}_{value}"),
            **overrides,
        )
        log(f"sweep {axis}={value}")
        records.append(train(sub, log=log))
    return records


def sweep_table(axis: str, values: list[int], records: list[RunRecord],
                test_metrics: list[MetricsReport]) -> str:
    """Plot-ready TSV: value, train-side (validation) micro-F1, test micro-F1."""
    lines = [f"{axis}\tvalid_micro_f1\ttest_micro_f1\twall_clock_s"]
    for value, rec, test in zip(values, records, test_metrics):
        lines.append(f"{value}\t{rec.metrics['micro_f1']:.4f}\t"
                     f"{test.micro_f1:.4f}\t{rec.wall_clock_s:.2f}")
    return "\n".join(lines)
