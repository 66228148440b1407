"""Corpus loading, label vocabulary, tokenization and splits.

On-disk interchange format: one JSON object per line, {"id", "text",
"labels": [...]}, in ``train.jsonl`` / ``test.jsonl`` next to a
``labels.txt`` vocabulary manifest (one label per line, order fixed) and
an optional ``stats.json`` with expected counts. Raw public corpora are
converted into this layout by the ingestion scripts under
``klat.ingest`` (see the ``preprocess`` CLI subcommand).
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError, VocabularyError

DATASET_FORMATS = ("rcv1v2", "aapd", "reuters21578")

# Reserved token ids. PAD must be 0 so padded positions are cheap to spot.
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
SEP_TOKEN = "[KSEP]"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, SEP_TOKEN)

_WORD_RE = re.compile(r"\[KSEP\]|[A-Za-z0-9']+")


@dataclass
class Document:
    id: str
    text: str
    labels: set[str] = field(default_factory=set)


class LabelVocabulary:
    """Fixed, ordered list of label names with a name -> index map."""

    def __init__(self, names: list[str]):
        if len(set(names)) != len(names):
            raise VocabularyError("duplicate label names in vocabulary")
        self.names = list(names)
        self.index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.names == other.names

    def decode(self, y: np.ndarray) -> set[str]:
        return {self.names[i] for i in np.flatnonzero(np.asarray(y))}

    def save(self, path: Path) -> None:
        Path(path).write_text("\n".join(self.names) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "LabelVocabulary":
        names = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
        return cls(names)


@dataclass
class TokenizedExample:
    doc_id: str
    doc_ids: np.ndarray  # int64, length <= max_len
    know_ids: np.ndarray
    doc_mask: np.ndarray  # same length as ids, all ones (padding happens at batch time)
    know_mask: np.ndarray
    y: np.ndarray  # {0,1}^M


class Tokenizer:
    """Whitespace/word tokenizer with a corpus-built vocabulary.

    Token 0 is PAD, 1 is UNK, 2 is the knowledge passage separator.
    """

    def __init__(self, vocab: dict[str, int]):
        for i, tok in enumerate(RESERVED_TOKENS):
            if vocab.get(tok) != i:
                raise ConfigurationError(f"reserved token {tok!r} must map to id {i}")
        self.vocab = vocab

    @property
    def size(self) -> int:
        return len(self.vocab)

    @staticmethod
    def split(text: str) -> list[str]:
        return [t if t == SEP_TOKEN else t.lower() for t in _WORD_RE.findall(text)]

    def encode(self, text: str) -> list[int]:
        unk = self.vocab[UNK_TOKEN]
        return [self.vocab.get(tok, unk) for tok in self.split(text)]

    @classmethod
    def build(cls, texts, min_count: int = 1, max_size: int | None = None) -> "Tokenizer":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in cls.split(text):
                if tok in RESERVED_TOKENS:
                    continue
                counts[tok] = counts.get(tok, 0) + 1
        # Deterministic order: by count desc, then lexicographic.
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_size is not None:
            ordered = ordered[: max(0, max_size - len(RESERVED_TOKENS))]
        vocab = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
        for tok, cnt in ordered:
            if cnt >= min_count:
                vocab[tok] = len(vocab)
        return cls(vocab)

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.vocab, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Tokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def read_jsonl(path: Path, vocab: LabelVocabulary | None = None) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                doc = Document(id=str(rec["id"]), text=rec["text"], labels=set(rec["labels"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed record ({exc})") from exc
            if not doc.text:
                raise ParseError(f"{path}:{lineno}: empty text")
            if vocab is not None:
                unknown = doc.labels - set(vocab.names)
                if unknown:
                    raise VocabularyError(
                        f"{path}:{lineno}: labels outside vocabulary: {sorted(unknown)}"
                    )
            docs.append(doc)
    return docs


def write_jsonl(docs: list[Document], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"id": doc.id, "text": doc.text, "labels": sorted(doc.labels)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_dataset(path, fmt: str = "reuters21578", drop_empty_train: bool = True):
    """Load a preprocessed dataset directory.

    Returns (train docs, test docs, label vocabulary). Empty-label train
    documents are dropped with a warning count; empty-label test documents
    are kept for evaluation. When a ``stats.json`` manifest is present the
    loaded counts must match it.
    """
    if fmt not in DATASET_FORMATS:
        raise ConfigurationError(f"unknown dataset format {fmt!r}")
    path = Path(path)
    for name in ("train.jsonl", "test.jsonl", "labels.txt"):
        if not (path / name).exists():
            raise ConfigurationError(
                f"{path} is not a preprocessed dataset dir (missing {name}); "
                f"run `klat preprocess --format {fmt}` first"
            )
    vocab = LabelVocabulary.load(path / "labels.txt")
    train = read_jsonl(path / "train.jsonl", vocab)
    test = read_jsonl(path / "test.jsonl", vocab)
    if drop_empty_train:
        kept = [d for d in train if d.labels]
        if len(kept) != len(train):
            import warnings

            warnings.warn(f"dropped {len(train) - len(kept)} empty-label train documents")
        train = kept
    stats_path = path / "stats.json"
    if stats_path.exists():
        stats = json.loads(stats_path.read_text(encoding="utf-8"))
        got = {"n_train": len(train), "n_test": len(test), "n_labels": len(vocab)}
        for key, expected in stats.items():
            if key in got and got[key] != expected:
                raise ParseError(f"{stats_path}: {key} is {got[key]}, manifest says {expected}")
    return train, test, vocab


def binarize_labels(labels: set[str], vocab: LabelVocabulary) -> np.ndarray:
    y = np.zeros(len(vocab), dtype=np.int64)
    for name in labels:
        if name not in vocab:
            raise VocabularyError(f"unknown label {name!r}")
        y[vocab.index[name]] = 1
    return y


def make_example(
    doc: Document,
    knowledge_text: str,
    vocab: LabelVocabulary,
    tokenizer: Tokenizer,
    max_len: int = 250,
) -> TokenizedExample:
    """Tokenize and truncate a (document, knowledge) pair to max_len each."""
    doc_ids = tokenizer.encode(doc.text)[:max_len]
    know_ids = tokenizer.encode(knowledge_text)[:max_len]
    # Degenerate empty tokenizations keep one UNK so masks are never all-zero.
    if not doc_ids:
        doc_ids = [tokenizer.vocab[UNK_TOKEN]]
    if not know_ids:
        know_ids = [tokenizer.vocab[UNK_TOKEN]]
    return TokenizedExample(
        doc_id=doc.id,
        doc_ids=np.asarray(doc_ids, dtype=np.int64),
        know_ids=np.asarray(know_ids, dtype=np.int64),
        doc_mask=np.ones(len(doc_ids), dtype=np.int64),
        know_mask=np.ones(len(know_ids), dtype=np.int64),
        y=binarize_labels(doc.labels, vocab),
    )


def split_validation(train: list[Document], fraction: float, seed: int):
    """Deterministic random train/valid split; disjoint, union-preserving."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(train)
    n_valid = int(round(fraction * n))
    if n_valid == 0 or n_valid == n:
        raise ValueError(f"fraction {fraction} leaves an empty partition for {n} documents")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    valid_idx = set(order[:n_valid])
    train_out = [train[i] for i in range(n) if i not in valid_idx]
    valid_out = [train[i] for i in range(n) if i in valid_idx]
    return train_out, valid_out
