"""
myADS-style digests and query feeds.

A digest run scans every subscriber's stored per-database queries, restricted
to records ingested after that subscriber's watermark, renders an HTML
document per (subscriber, database) with new matches, and advances the
watermark. Feeds turn any query result list into an RSS 2.0 channel.
"""

import html
import json
import logging
import os
import re
import tempfile
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Mapping, Optional, Sequence, Union

import PyRSS2Gen

from corpus import DATABASE_NAMES, DATABASES, Corpus
from errors import AdsLiteError, MalformedRecord, UnknownDatabase
from index import IndexedCorpus
from metrics import adslite_digests
from query import FieldValue, GroupStore, QueryAst, SearchHit, canonical_query, execute, parse_query

logger = logging.getLogger(__name__)

DEFAULT_CYCLE_DAYS = 10
NAMED_CYCLES = {"daily": 1, "weekly": 7}  # preprints only
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
FILE_TIMESTAMP_FORMAT = "%Y%m%dT%H%M%SZ"
FEED_DESCRIPTION = "adslite search results"
FEED_DOCS = "https://www.rssboard.org/rss-specification"

_SUBSCRIBER_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")

# at most one digest run at a time
_digest_lock = threading.Lock()


@dataclass
class SubscriberProfile:
    subscriber_id: str
    queries: Dict[str, Dict[str, FieldValue]]
    frequencies: Dict[str, Union[int, str]] = field(default_factory=dict)
    last_run: Dict[str, int] = field(default_factory=dict)
    last_run_at: Dict[str, datetime] = field(default_factory=dict)

    def __post_init__(self):
        if not _SUBSCRIBER_RE.match(self.subscriber_id or ""):
            raise MalformedRecord(f"invalid subscriber id {self.subscriber_id!r}")
        for db in set(self.queries) | set(self.frequencies) | set(self.last_run):
            if db not in DATABASES:
                raise UnknownDatabase(f"{self.subscriber_id}: {db}")
        for db, cycle in self.frequencies.items():
            if isinstance(cycle, str) and cycle in NAMED_CYCLES:
                if db != "pre":
                    raise MalformedRecord(f"{self.subscriber_id}: {cycle} cycles are only for pre")
            elif not isinstance(cycle, int) or isinstance(cycle, bool) or cycle < 1:
                raise MalformedRecord(f"{self.subscriber_id}: bad cycle {cycle!r} for {db}")

    def cycle(self, database: str, default_days: int = DEFAULT_CYCLE_DAYS) -> timedelta:
        value = self.frequencies.get(database, default_days)
        return timedelta(days=NAMED_CYCLES.get(value, value) if isinstance(value, str) else value)

    def due(self, database: str, now: datetime, default_days: int = DEFAULT_CYCLE_DAYS) -> bool:
        last = self.last_run_at.get(database)
        return last is None or now - last >= self.cycle(database, default_days)

    def query(self, database: str) -> QueryAst:
        return parse_query(self.queries[database])

    def to_document(self) -> Dict:
        return {
            "id": self.subscriber_id,
            "queries": {db: self.queries[db] for db in sorted(self.queries)},
            "frequencies": {db: self.frequencies[db] for db in sorted(self.frequencies)},
            "last_run": {db: self.last_run[db] for db in sorted(self.last_run)},
            "last_run_at": {db: self.last_run_at[db].strftime(TIMESTAMP_FORMAT) for db in sorted(self.last_run_at)},
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "SubscriberProfile":
        return cls(
            subscriber_id=doc.get("id", ""),
            queries=dict(doc.get("queries") or {}),
            frequencies=dict(doc.get("frequencies") or {}),
            last_run={db: int(seq) for db, seq in (doc.get("last_run") or {}).items()},
            last_run_at={db: _parse_timestamp(ts) for db, ts in (doc.get("last_run_at") or {}).items()},
        )


def _parse_timestamp(value: str) -> datetime:
    return datetime.strptime(value, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


def load_profiles(path: str) -> List[SubscriberProfile]:
    profiles = []
    if not os.path.exists(path):
        logger.warning(f"Profiles file {path} not found, starting with no subscribers")
        return profiles
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                profiles.append(SubscriberProfile.from_document(json.loads(line)))
            except (json.JSONDecodeError, AdsLiteError, ValueError, TypeError) as e:
                logger.error(f"Profile line {line_number} skipped: {e}")
    logger.info(f"Loaded {len(profiles)} subscriber profiles from {path}")
    return profiles


def save_profiles(path: str, profiles: Sequence[SubscriberProfile]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".profiles-")
    with os.fdopen(fd, "w", encoding="utf-8") as f:
        for profile in profiles:
            f.write(json.dumps(profile.to_document(), sort_keys=True) + "\n")
    os.replace(tmp_path, path)


@dataclass(frozen=True)
class DigestItem:
    bibcode: str
    title: str
    first_author: str
    score: float


@dataclass
class DigestDocument:
    subscriber_id: str
    database: str
    run_at: datetime
    query: str
    items: List[DigestItem]
    html: str = ""

    @property
    def filename(self) -> str:
        return f"{self.subscriber_id}-{self.database}-{self.run_at.strftime(FILE_TIMESTAMP_FORMAT)}.html"


def render_digest_html(doc: DigestDocument, base_url: str = "") -> str:
    e = html.escape
    heading = f"myADS update for {doc.subscriber_id}: {DATABASE_NAMES[doc.database]}"
    lines = [
        "<html>",
        f"<head><title>{e(heading)}</title></head>",
        "<body>",
        f"<h1>{e(heading)}</h1>",
        f"<p>Query: <code>{e(doc.query)}</code><br/>Run: {doc.run_at.strftime(TIMESTAMP_FORMAT)}"
        f"<br/>New records: {len(doc.items)}</p>",
        "<ol>",
    ]
    for item in doc.items:
        link = f"{base_url}/abs/{item.bibcode}"
        lines.append(
            f"<li><b>{e(item.title)}</b><br/>{e(item.first_author)}"
            f" - <a href=\"{e(link)}\">{e(item.bibcode)}</a></li>"
        )
    lines += ["</ol>", "</body>", "</html>"]
    return "\n".join(lines) + "\n"


def run_digest(profiles: Sequence[SubscriberProfile], corpus: Corpus, index: IndexedCorpus, now: datetime,
               groups: Optional[GroupStore] = None, registry=None, output_dir: Optional[str] = None,
               default_days: int = DEFAULT_CYCLE_DAYS, base_url: str = "") -> List[DigestDocument]:
    """Produce digests for every due (subscriber, database); watermarks move to the index snapshot."""
    if not _digest_lock.acquire(blocking=False):
        logger.warning("Digest run already in progress, skipping")
        return []
    try:
        groups = groups or GroupStore()
        snapshot_seq = index.max_seq
        documents = []
        for profile in profiles:
            for db in sorted(profile.queries):
                if not profile.due(db, now, default_days):
                    continue
                watermark = profile.last_run.get(db, 0)
                try:
                    ast = profile.query(db)
                    hits = execute(ast, index, corpus, groups, registry, after_seq=watermark, database=db)
                except AdsLiteError as e:
                    logger.warning(f"Skipping stored query of {profile.subscriber_id} for {db}: {e}")
                    continue
                if hits:
                    documents.append(_digest_document(profile.subscriber_id, db, now, ast, hits, base_url))
                profile.last_run[db] = max(watermark, snapshot_seq)
                profile.last_run_at[db] = now
                logger.info(f"Digest {profile.subscriber_id}/{db}: {len(hits)} new records, "
                            f"watermark {watermark} -> {profile.last_run[db]}")
        if output_dir:
            os.makedirs(output_dir, exist_ok=True)
            for doc in documents:
                with open(os.path.join(output_dir, doc.filename), "w", encoding="utf-8") as f:
                    f.write(doc.html)
        for doc in documents:
            adslite_digests.labels(database=doc.database).inc()
        return documents
    finally:
        _digest_lock.release()


def _digest_document(subscriber_id: str, db: str, now: datetime, ast: QueryAst,
                     hits: Sequence[SearchHit], base_url: str) -> DigestDocument:
    doc = DigestDocument(
        subscriber_id=subscriber_id,
        database=db,
        run_at=now,
        query=canonical_query(ast),
        items=[DigestItem(h.bibcode, h.record.title, h.record.first_author.display(), h.score) for h in hits],
    )
    doc.html = render_digest_html(doc, base_url)
    return doc


# Feeds

@dataclass(frozen=True)
class FeedItem:
    title: str
    link: str
    pub_date: datetime
    guid: str


@dataclass
class FeedDocument:
    title: str
    items: List[FeedItem]
    xml: str

    def to_bytes(self) -> bytes:
        return self.xml.encode("utf-8")


def render_rss(ast: QueryAst, results: Sequence[SearchHit], base_url: str = "") -> FeedDocument:
    title = canonical_query(ast)
    items = []
    rss_items = []
    for hit in results[:ast.limit]:
        pub = hit.record.pubdate
        item = FeedItem(
            title=hit.record.title,
            link=f"{base_url}/abs/{hit.bibcode}",
            pub_date=datetime(pub.year, pub.month or 1, 1),
            guid=hit.bibcode,
        )
        items.append(item)
        rss_items.append(PyRSS2Gen.RSSItem(
            title=item.title,
            link=item.link,
            description=hit.record.first_author.display(),
            guid=PyRSS2Gen.Guid(item.guid, isPermaLink=False),
            pubDate=item.pub_date,
        ))
    rss = PyRSS2Gen.RSS2(
        title=title,
        link=f"{base_url}/search",
        description=FEED_DESCRIPTION,
        generator="adslite",
        docs=FEED_DOCS,
        items=rss_items,
    )
    return FeedDocument(title=title, items=items, xml=rss.to_xml(encoding="utf-8"))


def check_feed(xml_text: str) -> List[str]:
    """Structural check of the RSS 2.0 required elements; returns the problems found."""
    problems = []
    try:
        root = ET.fromstring(xml_text.encode("utf-8"))
    except ET.ParseError as e:
        return [f"not well-formed: {e}"]
    if root.tag != "rss" or root.get("version") != "2.0":
        problems.append("root must be <rss version=\"2.0\">")
    channels = root.findall("channel")
    if len(channels) != 1:
        return problems + ["exactly one <channel> required"]
    channel = channels[0]
    for name in ("title", "link", "description"):
        if channel.find(name) is None:
            problems.append(f"channel lacks <{name}>")
    for position, item in enumerate(channel.findall("item"), start=1):
        if item.find("title") is None and item.find("description") is None:
            problems.append(f"item {position} has neither <title> nor <description>")
    return problems
