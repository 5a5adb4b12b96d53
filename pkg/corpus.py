"""
Record corpus: bibcodes, bibliographic records, interchange ingestion and
corpus-wide statistics.

The interchange format is one JSON document per line::

    {"bibcode": "2006ApJ...636..891G", "title": "...", "abstract": null,
     "authors": [{"last": "Grant", "first": "Carolyn", "middle": ["S."], "aff": null}],
     "pubdate": {"year": 2006, "month": 0}, "journal": "ApJ",
     "databases": ["ast"], "references": [], "objects": [],
     "scanned_pages": 0, "external_links": 0}
"""

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

from unidecode import unidecode

from errors import (
    AdsLiteError,
    DuplicateBibcode,
    EmptyAuthorList,
    MalformedBibcode,
    MalformedRecord,
    NonEmptyDatabasesRequired,
    UnknownDatabaseId,
)
from metrics import adslite_corpus_records, adslite_ingest_rejected

logger = logging.getLogger(__name__)

DATABASES = ("ast", "phy", "pre", "gen")
DATABASE_NAMES = {
    "ast": "Astronomy",
    "phy": "Physics",
    "pre": "Preprints",
    "gen": "General Science",
}

BIBCODE_LENGTH = 19
_BIBCODE_RE = re.compile(r"^(\d{4})([A-Za-z0-9.&+\-]{14})([A-Za-z0-9.])$")


def fold_text(text: str) -> str:
    """Lowercase and transliterate to ASCII."""
    return unidecode(text).lower()


@dataclass(frozen=True, order=True)
class Bibcode:
    year: int
    journal_code: str
    volume: str
    qualifier: str
    page: str
    author_initial: str

    def render(self) -> str:
        return (f"{self.year:04d}{self.journal_code}{self.volume}"
                f"{self.qualifier}{self.page}{self.author_initial}")

    def __str__(self) -> str:
        return self.render()

    @property
    def journal(self) -> str:
        return self.journal_code.rstrip(".")

    @classmethod
    def build(cls, year: int, journal: str, volume, page, initial: str, qualifier: str = ".") -> "Bibcode":
        return parse_bibcode(f"{year:04d}{journal:.<5}{str(volume):.>4}{qualifier}{str(page):.>4}{initial}")


def parse_bibcode(s: str) -> Bibcode:
    if not isinstance(s, str) or len(s) != BIBCODE_LENGTH:
        raise MalformedBibcode(f"{s!r}: expected {BIBCODE_LENGTH} characters")
    if not s[:4].isdigit():
        raise MalformedBibcode(f"{s!r}: year is not numeric")
    match = _BIBCODE_RE.match(s)
    if not match:
        raise MalformedBibcode(f"{s!r}: forbidden characters")
    year = int(s[:4])
    if not 1000 <= year <= 2999:
        raise MalformedBibcode(f"{s!r}: year {s[:4]} out of range")
    return Bibcode(
        year=year,
        journal_code=s[4:9],
        volume=s[9:13],
        qualifier=s[13],
        page=s[14:18],
        author_initial=s[18],
    )


@dataclass(frozen=True)
class Author:
    last_name: str
    first_name: str = ""
    middle_names: Tuple[str, ...] = ()
    affiliation: Optional[str] = None

    def display(self) -> str:
        given = " ".join(n for n in (self.first_name, *self.middle_names) if n)
        return f"{self.last_name}, {given}" if given else self.last_name


@dataclass(frozen=True, order=True)
class PubDate:
    year: int
    month: int = 0  # 0 means unknown

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True)
class BibRecord:
    bibcode: Bibcode
    title: str
    abstract: Optional[str]
    authors: Tuple[Author, ...]
    pubdate: PubDate
    journal_code: str
    databases: FrozenSet[str]
    references: FrozenSet[Bibcode] = frozenset()
    object_names: FrozenSet[str] = frozenset()
    ingest_seq: int = 0
    scanned_pages: int = 0
    external_links: int = 0

    @property
    def first_author(self) -> Author:
        return self.authors[0]

    @property
    def has_abstract(self) -> bool:
        return bool(self.abstract and self.abstract.strip())


@dataclass
class Rejection:
    line_number: int
    reason: str
    detail: str

    def __str__(self) -> str:
        return f"line {self.line_number}: {self.reason}: {self.detail}"


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    rejections: List[Rejection] = field(default_factory=list)
    accepted_lines: List[str] = field(default_factory=list)


@dataclass
class CorpusStats:
    total_records: int
    per_database: Dict[str, int]
    with_abstract: int
    with_abstract_fraction: float
    with_references: int
    with_references_fraction: float
    citation_pairs: int
    affiliation_coverage: float
    multi_database_records: int
    scanned_pages: int
    external_links: int

    def to_dict(self) -> Dict:
        return {
            "total_records": self.total_records,
            "per_database": dict(self.per_database),
            "with_abstract": self.with_abstract,
            "with_abstract_fraction": self.with_abstract_fraction,
            "with_references": self.with_references,
            "with_references_fraction": self.with_references_fraction,
            "citation_pairs": self.citation_pairs,
            "affiliation_coverage": self.affiliation_coverage,
            "multi_database_records": self.multi_database_records,
            "scanned_pages": self.scanned_pages,
            "external_links": self.external_links,
        }


class Corpus:
    """Append-only record store with a single writer and many readers."""

    def __init__(self):
        self._records: List[BibRecord] = []
        self._by_bibcode: Dict[str, BibRecord] = {}
        self._next_seq = 1
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> Tuple[BibRecord, ...]:
        with self._lock:
            return tuple(self._records)

    @property
    def max_seq(self) -> int:
        with self._lock:
            return self._next_seq - 1

    def get(self, bibcode: str) -> Optional[BibRecord]:
        return self._by_bibcode.get(bibcode)

    def by_seq(self, seq: int) -> BibRecord:
        # seqs are consecutive from 1
        return self._records[seq - 1]

    def __contains__(self, bibcode: str) -> bool:
        return bibcode in self._by_bibcode

    def append(self, record: BibRecord) -> BibRecord:
        with self._lock:
            key = record.bibcode.render()
            if key in self._by_bibcode:
                raise DuplicateBibcode(key)
            stored = _with_seq(record, self._next_seq)
            self._records.append(stored)
            self._by_bibcode[key] = stored
            self._next_seq += 1
        adslite_corpus_records.set(len(self._records))
        return stored


def _with_seq(record: BibRecord, seq: int) -> BibRecord:
    return BibRecord(
        bibcode=record.bibcode,
        title=record.title,
        abstract=record.abstract,
        authors=record.authors,
        pubdate=record.pubdate,
        journal_code=record.journal_code,
        databases=record.databases,
        references=record.references,
        object_names=record.object_names,
        ingest_seq=seq,
        scanned_pages=record.scanned_pages,
        external_links=record.external_links,
    )


def _require_str(doc: Dict, key: str, optional: bool = False) -> Optional[str]:
    value = doc.get(key)
    if value is None and optional:
        return None
    if not isinstance(value, str):
        raise MalformedRecord(f"field {key!r} must be a string")
    return value


def _counter(doc: Dict, key: str) -> int:
    value = doc.get(key)
    if value is None:
        return 0
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise MalformedRecord(f"field {key!r} must be a non-negative integer")
    return value


def parse_author(doc: Dict) -> Author:
    if not isinstance(doc, dict):
        raise MalformedRecord("author entries must be objects")
    last = doc.get("last")
    if not isinstance(last, str) or not fold_text(last).strip():
        raise MalformedRecord("author last name is empty")
    first = doc.get("first")
    if first is not None and not isinstance(first, str):
        raise MalformedRecord("author first name must be a string or null")
    middle = doc.get("middle") or []
    if not isinstance(middle, list) or not all(isinstance(m, str) for m in middle):
        raise MalformedRecord("author middle names must be a list of strings")
    aff = doc.get("aff")
    if aff is not None and not isinstance(aff, str):
        raise MalformedRecord("author affiliation must be a string or null")
    return Author(
        last_name=last.strip(),
        first_name=(first or "").strip(),
        middle_names=tuple(m.strip() for m in middle if m.strip()),
        affiliation=aff,  # verbatim
    )


def record_from_document(doc: Dict) -> BibRecord:
    """Validate one interchange document and build a record (ingest_seq 0)."""
    if not isinstance(doc, dict):
        raise MalformedRecord("record document must be an object")
    bibcode = parse_bibcode(doc.get("bibcode"))

    authors = doc.get("authors")
    if not isinstance(authors, list) or not authors:
        raise EmptyAuthorList(bibcode.render())

    databases = doc.get("databases")
    if not isinstance(databases, list) or not databases:
        raise NonEmptyDatabasesRequired(bibcode.render())
    unknown = sorted(str(d) for d in databases if d not in DATABASES)
    if unknown:
        raise UnknownDatabaseId(f"{bibcode.render()}: {', '.join(unknown)}")

    pubdate = doc.get("pubdate")
    if not isinstance(pubdate, dict):
        raise MalformedRecord("field 'pubdate' must be an object")
    year, month = pubdate.get("year"), pubdate.get("month", 0)
    if (not isinstance(year, int) or isinstance(year, bool) or not isinstance(month, int)
            or isinstance(month, bool) or not 0 <= month <= 12):
        raise MalformedRecord(f"bad pubdate {pubdate!r}")

    refs = doc.get("references") or []
    if not isinstance(refs, list):
        raise MalformedRecord("field 'references' must be a list")
    references = set()
    for ref in refs:
        ref_code = parse_bibcode(ref)
        if ref_code != bibcode:
            references.add(ref_code)

    objects = doc.get("objects") or []
    if not isinstance(objects, list) or not all(isinstance(o, str) for o in objects):
        raise MalformedRecord("field 'objects' must be a list of strings")

    return BibRecord(
        bibcode=bibcode,
        title=_require_str(doc, "title"),
        abstract=_require_str(doc, "abstract", optional=True),
        authors=tuple(parse_author(a) for a in authors),
        pubdate=PubDate(year, month),
        journal_code=_require_str(doc, "journal"),
        databases=frozenset(databases),
        references=frozenset(references),
        object_names=frozenset(o.strip() for o in objects if o.strip()),
        scanned_pages=_counter(doc, "scanned_pages"),
        external_links=_counter(doc, "external_links"),
    )


def record_to_document(record: BibRecord) -> Dict:
    return {
        "bibcode": record.bibcode.render(),
        "title": record.title,
        "abstract": record.abstract,
        "authors": [
            {"last": a.last_name, "first": a.first_name, "middle": list(a.middle_names), "aff": a.affiliation}
            for a in record.authors
        ],
        "pubdate": {"year": record.pubdate.year, "month": record.pubdate.month},
        "journal": record.journal_code,
        "databases": sorted(record.databases),
        "references": sorted(r.render() for r in record.references),
        "objects": sorted(record.object_names),
        "scanned_pages": record.scanned_pages,
        "external_links": record.external_links,
    }


def ingest_records(corpus: Corpus, source: Iterable[Union[str, bytes]]) -> IngestReport:
    """Ingest interchange lines; bad lines are rejected and reported, never fatal.

    Byte lines are decoded as UTF-8 one at a time, so an undecodable line is
    rejected like any other malformed one.
    """
    report = IngestReport()
    for line_number, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            if isinstance(line, bytes):
                try:
                    line = line.decode("utf-8")
                except UnicodeDecodeError as e:
                    raise MalformedRecord(f"invalid UTF-8: {e}")
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"invalid JSON: {e}")
            record = record_from_document(doc)
            stored = corpus.append(record)
        except AdsLiteError as e:
            report.rejected += 1
            report.rejections.append(Rejection(line_number, e.reason, e.detail))
            adslite_ingest_rejected.labels(reason=e.reason).inc()
            logger.warning(f"Rejected line {line_number}: {e}")
            continue
        report.accepted += 1
        report.accepted_lines.append(line)
        logger.debug(f"Ingested {stored.bibcode} as seq {stored.ingest_seq}")
    logger.info(f"Ingestion finished: accepted={report.accepted}, rejected={report.rejected}")
    return report


def load_corpus(path: str) -> Corpus:
    corpus = Corpus()
    with open(path, "rb") as f:
        ingest_records(corpus, f)
    return corpus


def compute_stats(corpus: Corpus) -> CorpusStats:
    records = corpus.records
    total = len(records)
    present = {r.bibcode for r in records}
    per_database = {db: 0 for db in DATABASES}
    with_abstract = with_references = citation_pairs = with_aff = multi = 0
    scanned = links = 0

    for record in records:
        for db in record.databases:
            per_database[db] += 1
        if len(record.databases) > 1:
            multi += 1
        if record.has_abstract:
            with_abstract += 1
        if record.references:
            with_references += 1
        citation_pairs += sum(1 for ref in record.references if ref in present)
        if any(a.affiliation and a.affiliation.strip() for a in record.authors):
            with_aff += 1
        scanned += record.scanned_pages
        links += record.external_links

    def fraction(n: int) -> float:
        return n / total if total else 0.0

    return CorpusStats(
        total_records=total,
        per_database=per_database,
        with_abstract=with_abstract,
        with_abstract_fraction=fraction(with_abstract),
        with_references=with_references,
        with_references_fraction=fraction(with_references),
        citation_pairs=citation_pairs,
        affiliation_coverage=fraction(with_aff),
        multi_database_records=multi,
        scanned_pages=scanned,
        external_links=links,
    )
