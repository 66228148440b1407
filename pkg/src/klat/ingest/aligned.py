"""Line-aligned text/label file pairs (the AAPD and RCV1-V2 releases)."""

from __future__ import annotations

from pathlib import Path

from ..corpus import Document
from ..errors import ParseError


def _read_pair(text_path: Path, label_path: Path, prefix: str) -> list[Document]:
    texts = text_path.read_text(encoding="utf-8").splitlines()
    labels = label_path.read_text(encoding="utf-8").splitlines()
    if len(texts) != len(labels):
        raise ParseError(
            f"{text_path.name} has {len(texts)} lines but {label_path.name} has {len(labels)}"
        )
    docs = []
    for i, (text, lab) in enumerate(zip(texts, labels)):
        if not text.strip():
            raise ParseError(f"{text_path}:{i + 1}: empty text line")
        docs.append(Document(id=f"{prefix}{i}", text=text.strip(), labels=set(lab.split())))
    return docs


def parse_aligned(raw_dir, train_text: str, train_label: str,
                  test_text: str, test_label: str):
    raw_dir = Path(raw_dir)
    train = _read_pair(raw_dir / train_text, raw_dir / train_label, "train-")
    test = _read_pair(raw_dir / test_text, raw_dir / test_label, "test-")
    labels = sorted({l for d in train + test for l in d.labels})
    return train, test, labels
