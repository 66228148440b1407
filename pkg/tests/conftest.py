import json
import random

import numpy as np
import pytest
import torch

from klat.config import TrainConfig
from klat.corpus import Document, LabelVocabulary, write_jsonl
from klat.retrieval import FixtureBackend, KnowledgeStore, RetrievalCache, retrieve_corpus_knowledge

LABELS = ["economy", "science", "sports", "culture"]

# Signal vocabulary per label; documents are bags of their labels' words.
SIGNAL = {
    "economy": ["market", "trade", "inflation", "bank", "currency"],
    "science": ["physics", "quantum", "laboratory", "theory", "experiment"],
    "sports": ["match", "league", "goal", "tournament", "coach"],
    "culture": ["museum", "opera", "festival", "painting", "novel"],
}
FILLER = ["the", "a", "report", "today", "new", "first", "announced"]


def synth_doc(doc_id: str, labels: list[str], rng: random.Random) -> Document:
    words = []
    for lab in labels:
        words += rng.choices(SIGNAL[lab], k=6)
    words += rng.choices(FILLER, k=4)
    rng.shuffle(words)
    return Document(id=doc_id, text=" ".join(words), labels=set(labels))


def synth_corpus(n: int, seed: int, prefix: str) -> list[Document]:
    rng = random.Random(seed)
    docs = []
    for i in range(n):
        k = rng.choice([1, 1, 2])
        labels = rng.sample(LABELS, k)
        docs.append(synth_doc(f"{prefix}{i}", labels, rng))
    return docs


@pytest.fixture()
def label_vocab():
    return LabelVocabulary(LABELS)


@pytest.fixture()
def toy_dataset_dir(tmp_path):
    """32 train + 8 test synthetic documents in the JSONL layout."""
    d = tmp_path / "data"
    d.mkdir()
    train = synth_corpus(32, seed=101, prefix="tr")
    test = synth_corpus(8, seed=202, prefix="te")
    write_jsonl(train, d / "train.jsonl")
    write_jsonl(test, d / "test.jsonl")
    LabelVocabulary(LABELS).save(d / "labels.txt")
    return d


@pytest.fixture()
def fixture_backend_dir(tmp_path):
    """Annotator + page fixtures covering a few toy documents."""
    d = tmp_path / "fixtures"
    d.mkdir()
    annotations = {
        "tr0": [
            {"start": 0, "end": 6, "title": "Market", "confidence": 0.9},
            {"start": 10, "end": 15, "title": "Trade", "confidence": 0.7},
        ],
        "tr1": [{"start": 0, "end": 7, "title": "Physics", "confidence": 0.3}],
        "te0": [{"start": 0, "end": 5, "title": "Match", "confidence": 0.8}],
    }
    pages = {
        "Market": "A market is a place where goods are exchanged for currency.",
        "Trade": "Trade is the exchange of goods between parties.",
        "Physics": "Physics studies matter and energy.",
        "Match": "A match is a sporting contest between teams.",
    }
    (d / "annotations.json").write_text(json.dumps(annotations))
    (d / "pages.json").write_text(json.dumps(pages))
    return d


@pytest.fixture()
def knowledge_store(tmp_path, toy_dataset_dir, fixture_backend_dir):
    """Knowledge records for the whole toy corpus via the fixture backend."""
    from klat.corpus import read_jsonl

    docs = read_jsonl(toy_dataset_dir / "train.jsonl") + read_jsonl(toy_dataset_dir / "test.jsonl")
    backend = FixtureBackend(fixture_backend_dir)
    cache = RetrievalCache(tmp_path / "cache")
    store = KnowledgeStore(tmp_path / "knowledge.jsonl")
    retrieve_corpus_knowledge(docs, cache, 0.5, backend, store)
    return store


@pytest.fixture()
def vectors_path(tmp_path):
    """Tiny word-vector table (dim 8) covering the labels and a few tokens."""
    rng = np.random.default_rng(7)
    tokens = LABELS + ["foreign", "exchange", "market", "cs", "quantum"]
    lines = []
    for tok in tokens:
        vec = rng.normal(0, 1, 8)
        lines.append(tok + " " + " ".join(f"{v:.6f}" for v in vec))
    p = tmp_path / "vectors.txt"
    p.write_text("\n".join(lines) + "\n")
    return p


@pytest.fixture()
def toy_config(tmp_path, toy_dataset_dir, knowledge_store, vectors_path):
    """Desk-scale config: tiny widths, the toy corpus, fixture knowledge."""
    return TrainConfig(
        data_dir=str(toy_dataset_dir),
        knowledge_path=str(knowledge_store.path),
        vectors_path=str(vectors_path),
        checkpoint_dir=str(tmp_path / "ckpt"),
        max_len=40,
        label_dim=8,
        hidden=16,
        plm_dim=24,
        proj_dim=16,
        bottleneck=12,
        bilinear=12,
        head_dim=16,
        batch_size=8,
        learning_rate=5e-3,
        max_epochs=60,
        early_stop_patience=10,
        validation_fraction=0.25,
        seed=13,
    )


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
