"""External-knowledge retrieval: entity linking, page fetching, composition.

Two annotator backends exist: a live HTTP endpoint (TAGME-style; base URL
configurable, API key via the KLAT_ANNOTATOR_KEY env var) and an offline
fixture backend reading local files, so the whole test suite runs with no
network. Fixture directory layout::

    <dir>/annotations.json    {doc_id: [{"start", "end", "title", "confidence"}]}
    <dir>/pages.json          {title: text}

The page cache is one file per sanitized entity title under the cache dir
plus a ``manifest.json`` index; a cached title is never re-fetched unless
``force`` is set.
"""

from __future__ import annotations

import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .corpus import Document, SEP_TOKEN
from .errors import ConfigurationError, MissingPageError, TransportError

DEFAULT_CONFIDENCE_THRESHOLD = 0.5
LEAD_SECTION_WORDS = 500
ANNOTATOR_KEY_ENV = "KLAT_ANNOTATOR_KEY"


@dataclass(frozen=True)
class EntityMention:
    start: int
    end: int
    title: str
    confidence: float

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span [{self.start}, {self.end})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class KnowledgeRecord:
    doc_id: str
    mentions: list[EntityMention] = field(default_factory=list)
    text: str = ""
    source: str = "fallback"  # live | cache | fixture | fallback

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "mentions": [asdict(m) for m in self.mentions],
            "text": self.text,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeRecord":
        return cls(
            doc_id=d["doc_id"],
            mentions=[EntityMention(**m) for m in d["mentions"]],
            text=d["text"],
            source=d["source"],
        )


def _sanitize_title(title: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", title)[:128] or "_"


class RetrievalCache:
    """Disk-backed entity-title -> page-text store. Safe for concurrent writers."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.dir / "manifest.json"
        self._lock = threading.Lock()
        if self.manifest_path.exists():
            self._manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        else:
            self._manifest = {}

    def __contains__(self, title: str) -> bool:
        return title in self._manifest

    def get(self, title: str) -> str | None:
        with self._lock:
            entry = self._manifest.get(title)
        if entry is None:
            return None
        return (self.dir / entry["file"]).read_text(encoding="utf-8")

    def put(self, title: str, text: str) -> None:
        fname = _sanitize_title(title) + ".txt"
        with self._lock:
            # Last write wins; distinct titles colliding on sanitized name get a suffix.
            taken = {e["file"] for t, e in self._manifest.items() if t != title}
            base = fname
            i = 1
            while fname in taken:
                fname = f"{Path(base).stem}.{i}.txt"
                i += 1
            (self.dir / fname).write_text(text, encoding="utf-8")
            self._manifest[title] = {"file": fname, "fetched_at": time.time()}
            self.manifest_path.write_text(
                json.dumps(self._manifest, indent=1, sort_keys=True), encoding="utf-8"
            )


class FixtureBackend:
    """Offline annotator + page corpus loaded from local fixture files."""

    name = "fixture"

    def __init__(self, directory):
        directory = Path(directory)
        ann_path = directory / "annotations.json"
        pages_path = directory / "pages.json"
        if not ann_path.exists() or not pages_path.exists():
            raise ConfigurationError(f"fixture backend needs annotations.json and pages.json in {directory}")
        self.annotations = json.loads(ann_path.read_text(encoding="utf-8"))
        self.pages = json.loads(pages_path.read_text(encoding="utf-8"))

    def annotate(self, doc_id: str, text: str) -> list[EntityMention]:
        return [EntityMention(**m) for m in self.annotations.get(doc_id, [])]

    def fetch_page(self, title: str) -> str:
        if title not in self.pages:
            raise MissingPageError(title)
        return self.pages[title]


class LiveBackend:
    """HTTP annotator + encyclopedia fetcher (TAGME-style API surface)."""

    name = "live"

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 15.0):
        import os

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key or os.environ.get(ANNOTATOR_KEY_ENV, "")
        self.timeout = timeout

    def _get(self, path: str, params: dict) -> dict:
        import requests

        try:
            resp = requests.get(self.base_url + path, params=params, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 404:
            raise MissingPageError(params.get("title", path))
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code} from {path}")
        return resp.json()

    def annotate(self, doc_id: str, text: str) -> list[EntityMention]:
        data = self._get("/tag", {"text": text, "gcube-token": self.api_key})
        mentions = []
        for ann in data.get("annotations", []):
            mentions.append(
                EntityMention(
                    start=int(ann["start"]),
                    end=int(ann["end"]),
                    title=ann["title"],
                    confidence=float(ann.get("rho", ann.get("confidence", 0.0))),
                )
            )
        return mentions

    def fetch_page(self, title: str) -> str:
        data = self._get("/page", {"title": title, "gcube-token": self.api_key})
        text = data.get("extract", "")
        if not text:
            raise MissingPageError(title)
        return text


def truncate_lead(text: str, max_words: int = LEAD_SECTION_WORDS) -> str:
    words = text.split()
    return " ".join(words[:max_words])


def link_entities(doc_text: str, threshold: float, backend, doc_id: str = "") -> list[EntityMention]:
    """Annotate a document and keep mentions with confidence strictly above threshold.

    Result is sorted by start offset (document entity order). Zero mentions
    is a valid empty result; backend transport failures propagate.
    """
    if not doc_text:
        raise ValueError("doc_text must be non-empty")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    mentions = backend.annotate(doc_id, doc_text)
    kept = [m for m in mentions if m.confidence > threshold]
    return sorted(kept, key=lambda m: (m.start, m.end))


def fetch_entity_text(title: str, cache: RetrievalCache, backend, force: bool = False) -> tuple[str, str]:
    """Fetch the lead text for an entity page, going to the cache first.

    Returns (text, origin) where origin is "cache" or the backend name.
    """
    if not title:
        raise ValueError("title must be non-empty")
    if not force:
        cached = cache.get(title)
        if cached is not None:
            return cached, "cache"
    text = truncate_lead(backend.fetch_page(title))
    cache.put(title, text)
    return text, backend.name


def compose_knowledge(
    doc: Document, mentions: list[EntityMention], texts: dict[str, str | None]
) -> KnowledgeRecord:
    """Concatenate fetched passages in mention order into one knowledge record.

    Each distinct title contributes one passage, at its first mention
    position. Titles mapped to None (missing pages) are skipped. With no
    passage left, the document's own text is used and source=fallback.
    """
    ordered = sorted(mentions, key=lambda m: (m.start, m.end))
    seen: set[str] = set()
    passages = []
    for m in ordered:
        if m.title in seen:
            continue
        seen.add(m.title)
        passage = texts.get(m.title)
        if passage is not None:
            passages.append(passage)
    if not passages:
        return KnowledgeRecord(doc_id=doc.id, mentions=ordered, text=doc.text, source="fallback")
    sep = f" {SEP_TOKEN} "
    return KnowledgeRecord(doc_id=doc.id, mentions=ordered, text=sep.join(passages), source="live")


class KnowledgeStore:
    """JSONL store of KnowledgeRecords keyed by doc_id; append-only, resumable."""

    def __init__(self, path):
        self.path = Path(path)
        self.records: dict[str, KnowledgeRecord] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = KnowledgeRecord.from_dict(json.loads(line))
                        self.records[rec.doc_id] = rec

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.records

    def get(self, doc_id: str) -> KnowledgeRecord | None:
        return self.records.get(doc_id)

    def add(self, rec: KnowledgeRecord) -> None:
        self.records[rec.doc_id] = rec
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def retrieve_corpus_knowledge(
    corpus: list[Document],
    cache: RetrievalCache,
    threshold: float,
    backend,
    store: KnowledgeStore,
    max_workers: int = 4,
    progress=None,
) -> dict[str, int]:
    """Attach a KnowledgeRecord to every document; resumable and idempotent.

    Documents already present in the store are skipped. Per-document
    retrieval failures fall back to the document's own text. Returns the
    summary count per source kind.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    summary = {"live": 0, "cache": 0, "fixture": 0, "fallback": 0}
    fetch_lock = threading.Lock()
    inflight: dict[str, object] = {}

    def fetch_once(title: str, pool) -> str | None:
        # A title is fetched at most once per run, even across documents.
        with fetch_lock:
            fut = inflight.get(title)
            if fut is None:
                fut = pool.submit(_fetch_or_none, title)
                inflight[title] = fut
        return fut.result()

    origins: dict[str, str] = {}

    def _fetch_or_none(title: str) -> str | None:
        try:
            text, origin = fetch_entity_text(title, cache, backend)
            origins[title] = origin
            return text
        except MissingPageError:
            return None

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for doc in corpus:
            existing = store.get(doc.id)
            if existing is not None:
                summary[existing.source] += 1
                continue
            try:
                mentions = link_entities(doc.text, threshold, backend, doc_id=doc.id)
                titles = []
                for m in mentions:
                    if m.title not in titles:
                        titles.append(m.title)
                texts = {t: fetch_once(t, pool) for t in titles}
                rec = compose_knowledge(doc, mentions, texts)
            except TransportError:
                rec = KnowledgeRecord(doc_id=doc.id, text=doc.text, source="fallback")
            if rec.source != "fallback":
                used = [origins.get(t, backend.name) for t in texts if texts[t] is not None]
                if backend.name == "fixture":
                    rec.source = "fixture"
                elif used and all(o == "cache" for o in used):
                    rec.source = "cache"
                else:
                    rec.source = "live"
            store.add(rec)
            summary[rec.source] += 1
            if progress is not None:
                progress(doc.id, rec.source)
    return summary
