"""Reuters-21578 SGML parser, ModApte split.

Keeps TOPICS="YES" documents that carry at least one topic, assigns
train/test by LEWISSPLIT, and restricts the label set to topics appearing
in at least one train and one test document (the standard 90-category
subset).
"""

from __future__ import annotations

import html
import re
from pathlib import Path

from ..corpus import Document
from ..errors import ConfigurationError

_REUTERS_RE = re.compile(r"<REUTERS([^>]*)>(.*?)</REUTERS>", re.S)
_ATTR_RE = re.compile(r'(\w+)="([^"]*)"')
_TOPIC_RE = re.compile(r"<D>(.*?)</D>", re.S)
_TAG_RE = re.compile(r"<[^>]+>")


def _extract(block: str, tag: str) -> str:
    m = re.search(rf"<{tag}[^>]*>(.*?)</{tag}>", block, re.S)
    return m.group(1) if m else ""


def parse_modapte(raw_dir):
    raw_dir = Path(raw_dir)
    sgm_files = sorted(raw_dir.glob("*.sgm"))
    if not sgm_files:
        raise ConfigurationError(f"no .sgm files in {raw_dir}")
    train, test = [], []
    for sgm in sgm_files:
        raw = sgm.read_text(encoding="latin-1")
        for m in _REUTERS_RE.finditer(raw):
            attrs = dict(_ATTR_RE.findall(m.group(1)))
            if attrs.get("TOPICS") != "YES":
                continue
            split = attrs.get("LEWISSPLIT")
            if split not in ("TRAIN", "TEST"):
                continue
            block = m.group(2)
            topics = set(_TOPIC_RE.findall(_extract(block, "TOPICS")))
            if not topics:
                continue
            text_block = _extract(block, "TEXT")
            title = _TAG_RE.sub(" ", _extract(text_block, "TITLE"))
            body = _TAG_RE.sub(" ", _extract(text_block, "BODY"))
            text = html.unescape(f"{title} {body}").strip()
            text = re.sub(r"\s+", " ", text)
            if not text:
                continue
            doc = Document(id=attrs.get("NEWID", f"{sgm.stem}-{m.start()}"),
                           text=text, labels=topics)
            (train if split == "TRAIN" else test).append(doc)

    train_topics = {t for d in train for t in d.labels}
    test_topics = {t for d in test for t in d.labels}
    labels = sorted(train_topics & test_topics)
    keep = set(labels)
    for docs in (train, test):
        for d in docs:
            d.labels &= keep
    train = [d for d in train if d.labels]
    test = [d for d in test if d.labels]
    return train, test, labels
