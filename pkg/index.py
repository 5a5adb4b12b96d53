"""
Tokenization, synonym groups, the inverted index and tf-idf scoring.

Synonyms are expanded at query time; the index stores surface forms only,
so an exact ("=") term can still reach its own postings.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Set, Tuple

from corpus import BibRecord, Corpus, fold_text
from errors import SynonymTableError
from metrics import adslite_index_terms

logger = logging.getLogger(__name__)

TITLE = "title"
ABSTRACT = "abstract"
FIELD_WEIGHTS = {TITLE: 2.0, ABSTRACT: 1.0}

INDEX_MAGIC = b"ADSLIDX"
INDEX_VERSION = 1

_SPLIT_RE = re.compile(r"[\W_]+")


def tokenize(text: str) -> List[str]:
    """Fold to lowercase ASCII and split on non-word runs; keeps tokens of two or more characters."""
    if not text:
        return []
    folded = fold_text(text)
    return [t for t in _SPLIT_RE.split(folded) if len(t) >= 2]


def record_tokens(record: BibRecord) -> List[str]:
    """Title tokens followed by abstract tokens."""
    return tokenize(record.title) + tokenize(record.abstract or "")


class SynonymTable:
    """Disjoint groups of interchangeable tokens."""

    def __init__(self, groups: Iterable[Iterable[str]] = ()):
        self._groups: List[FrozenSet[str]] = []
        self._member_of: Dict[str, int] = {}
        for group in groups:
            self.add_group(group)

    def add_group(self, members: Iterable[str]) -> None:
        group = frozenset(members)
        if len(group) < 2:
            raise SynonymTableError(f"group {sorted(group)} needs at least two members")
        clash = sorted(t for t in group if t in self._member_of)
        if clash:
            raise SynonymTableError(f"tokens already in another group: {', '.join(clash)}")
        for token in group:
            if not token or any(c.isspace() for c in token):
                raise SynonymTableError(f"invalid token {token!r}")
            self._member_of[token] = len(self._groups)
        self._groups.append(group)

    @property
    def groups(self) -> List[FrozenSet[str]]:
        return list(self._groups)

    def group_of(self, token: str) -> FrozenSet[str]:
        idx = self._member_of.get(token)
        return self._groups[idx] if idx is not None else frozenset()

    def to_lines(self) -> List[str]:
        return [" ".join(sorted(g)) for g in self._groups]


def load_synonyms(path: str) -> SynonymTable:
    """One group per line, members separated by whitespace; '#' starts a comment."""
    table = SynonymTable()
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            members = []
            for word in line.split():
                members.extend(tokenize(word))
            members = sorted(set(members))
            if len(members) < 2:
                logger.warning(f"Synonym line {line_number} has fewer than two tokens, skipped")
                continue
            try:
                table.add_group(members)
            except SynonymTableError as e:
                raise SynonymTableError(f"{path}:{line_number}: {e.detail}")
    logger.info(f"Loaded {len(table.groups)} synonym groups from {path}")
    return table


def expand_term(term: str, table: SynonymTable, exact: bool = False) -> Set[str]:
    """The synonym group of a term, or just the term when exact or ungrouped."""
    if exact:
        return {term}
    group = table.group_of(term)
    return set(group) if group else {term}


@dataclass(frozen=True)
class Posting:
    ingest_seq: int
    field: str
    tf: int


@dataclass
class IndexedCorpus:
    postings: Dict[str, List[Posting]] = field(default_factory=dict)
    field_lengths: Dict[str, Dict[int, int]] = field(default_factory=lambda: {TITLE: {}, ABSTRACT: {}})
    document_count: int = 0
    synonyms: SynonymTable = field(default_factory=SynonymTable)
    # seq -> {(term, field): tf}, derived from postings
    _forward: Dict[int, Dict[Tuple[str, str], int]] = field(default_factory=dict, repr=False)
    _df: Dict[str, int] = field(default_factory=dict, repr=False)

    def _derive(self) -> None:
        self._forward = {}
        self._df = {}
        for term, plist in self.postings.items():
            self._df[term] = len({p.ingest_seq for p in plist})
            for p in plist:
                self._forward.setdefault(p.ingest_seq, {})[(term, p.field)] = p.tf

    def df(self, term: str) -> int:
        return self._df.get(term, 0)

    def tf(self, seq: int, term: str, field_id: str) -> int:
        return self._forward.get(seq, {}).get((term, field_id), 0)

    @property
    def max_seq(self) -> int:
        return max(self.field_lengths[TITLE], default=0)

    def matching_documents(self, term: str) -> Set[int]:
        """Sequence numbers of records containing the term in any field."""
        return {p.ingest_seq for p in self.postings.get(term, ())}

    def to_bytes(self) -> bytes:
        body = {
            "document_count": self.document_count,
            "field_lengths": {f: {str(k): v for k, v in sorted(lengths.items())}
                              for f, lengths in sorted(self.field_lengths.items())},
            "postings": {term: [[p.ingest_seq, p.field, p.tf] for p in plist]
                         for term, plist in sorted(self.postings.items())},
            "synonyms": sorted(self.synonyms.to_lines()),
        }
        header = INDEX_MAGIC + b" " + str(INDEX_VERSION).encode("ascii") + b"\n"
        return header + json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "IndexedCorpus":
        header, _, body = data.partition(b"\n")
        magic, _, version = header.partition(b" ")
        if magic != INDEX_MAGIC:
            raise ValueError("not a serialized adslite index")
        if int(version) != INDEX_VERSION:
            raise ValueError(f"unsupported index version {int(version)}")
        doc = json.loads(body.decode("utf-8"))
        index = cls(
            postings={term: [Posting(s, f, tf) for s, f, tf in plist] for term, plist in doc["postings"].items()},
            field_lengths={f: {int(k): v for k, v in lengths.items()} for f, lengths in doc["field_lengths"].items()},
            document_count=doc["document_count"],
            synonyms=SynonymTable(line.split() for line in doc["synonyms"]),
        )
        index._derive()
        return index


def build_index(corpus: Corpus, table: SynonymTable) -> IndexedCorpus:
    """Index title and abstract postings of every record in ingest order."""
    index = IndexedCorpus(synonyms=table)
    records = corpus.records
    for record in records:  # ascending ingest_seq
        for field_id, text in ((TITLE, record.title), (ABSTRACT, record.abstract or "")):
            tokens = tokenize(text)
            index.field_lengths[field_id][record.ingest_seq] = len(tokens)
            counts: Dict[str, int] = {}
            for token in tokens:
                counts[token] = counts.get(token, 0) + 1
            for token in sorted(counts):
                index.postings.setdefault(token, []).append(Posting(record.ingest_seq, field_id, counts[token]))
    index.document_count = len(records)
    index._derive()
    adslite_index_terms.set(len(index.postings))
    logger.info(f"Built index: {index.document_count} documents, {len(index.postings)} terms")
    return index


def score(index: IndexedCorpus, record_seq: int, weighted_terms: Mapping[str, float]) -> float:
    """tf-idf with title occurrences counted twice; terms visited in sorted order."""
    total = 0.0
    n = index.document_count
    for term in sorted(weighted_terms):
        df = index.df(term)
        if not df:
            continue
        tf = FIELD_WEIGHTS[TITLE] * index.tf(record_seq, term, TITLE) + index.tf(record_seq, term, ABSTRACT)
        if tf:
            total += weighted_terms[term] * tf * math.log(1 + n / df)
    return total
