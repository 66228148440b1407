"""Converters from the public raw corpus formats to the JSONL interchange
layout (train.jsonl / test.jsonl / labels.txt / stats.json)."""

from __future__ import annotations

import json
from pathlib import Path

from ..corpus import Document, LabelVocabulary, write_jsonl
from ..errors import ConfigurationError


def write_dataset(train: list[Document], test: list[Document], labels: list[str], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(train, out_dir / "train.jsonl")
    write_jsonl(test, out_dir / "test.jsonl")
    LabelVocabulary(labels).save(out_dir / "labels.txt")
    stats = {
        "n_train": sum(1 for d in train if d.labels),
        "n_test": len(test),
        "n_labels": len(labels),
    }
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=1, sort_keys=True),
                                        encoding="utf-8")


def convert(raw_dir, fmt: str, out_dir) -> dict:
    if fmt == "reuters21578":
        from .reuters21578 import parse_modapte

        train, test, labels = parse_modapte(raw_dir)
    elif fmt == "aapd":
        from .aligned import parse_aligned

        train, test, labels = parse_aligned(raw_dir, "text_train", "label_train",
                                            "text_test", "label_test")
    elif fmt == "rcv1v2":
        from .aligned import parse_aligned

        train, test, labels = parse_aligned(raw_dir, "train.src", "train.tgt",
                                            "test.src", "test.tgt")
    else:
        raise ConfigurationError(f"unknown dataset format {fmt!r}")
    write_dataset(train, test, labels, out_dir)
    return {"n_train": len(train), "n_test": len(test), "n_labels": len(labels)}
