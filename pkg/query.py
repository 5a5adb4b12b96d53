"""
Search requests: parsing raw form fields into a QueryAst and executing it
against the corpus and its index.

Field semantics follow the search tips handed out to ADS users:
  - "^Last, First" anchors an author clause to the first author
  - full first and middle names are matched, initials are compatible with names
  - "=word" disables synonym expansion for that word
  - a month of 00 is "unknown"; such records match only whole-year ranges
  - object names are searched in the object list and in the text
"""

import glob
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from corpus import DATABASES, Author, BibRecord, Corpus, PubDate, fold_text, parse_bibcode
from errors import (
    EmptyQuery,
    InvalidQuery,
    MalformedBibcode,
    MalformedDate,
    UnknownDatabase,
    UnknownGroup,
)
from index import ABSTRACT, TITLE, IndexedCorpus, SynonymTable, expand_term, score, tokenize

logger = logging.getLogger(__name__)

DEFAULT_LIMIT = 20
AND = "AND"
OR = "OR"

QUERY_FIELDS = (
    "author", "text", "object", "start_date", "end_date", "journals_include",
    "journals_exclude", "refereed", "group", "db", "combine", "limit",
)

_DATE_RE = re.compile(r"^(\d{4})(?:[-/](\d{1,2}))?$")

FieldValue = Union[str, Sequence[str], None]


@dataclass(frozen=True)
class AuthorClause:
    last_name: str
    first_name: Optional[str] = None
    middle_names: Tuple[str, ...] = ()
    first_author_only: bool = False

    def render(self) -> str:
        given = " ".join(p for p in (self.first_name, *self.middle_names) if p)
        text = f"{self.last_name}, {given}" if given else self.last_name
        return ("^" if self.first_author_only else "") + text


@dataclass(frozen=True)
class DateRange:
    start: PubDate
    end: PubDate

    @property
    def lower(self) -> Tuple[int, int]:
        return (self.start.year, self.start.month or 1)

    @property
    def upper(self) -> Tuple[int, int]:
        return (self.end.year, self.end.month or 12)


@dataclass(frozen=True)
class Filters:
    include_journals: Optional[FrozenSet[str]] = None
    exclude_journals: FrozenSet[str] = frozenset()
    refereed_only: bool = False
    group: Optional[str] = None
    databases: Optional[FrozenSet[str]] = None

    def is_empty(self) -> bool:
        return (not self.include_journals and not self.exclude_journals and not self.refereed_only
                and not self.group and not self.databases)


@dataclass(frozen=True)
class TextTerm:
    token: str
    exact: bool = False
    from_object: bool = False  # appended from the object box


@dataclass(frozen=True)
class QueryAst:
    authors: Tuple[AuthorClause, ...] = ()
    text_terms: Tuple[TextTerm, ...] = ()
    object_terms: Tuple[str, ...] = ()
    date: Optional[DateRange] = None
    filters: Filters = field(default_factory=Filters)
    combine_text: str = AND
    limit: int = DEFAULT_LIMIT

    @property
    def user_terms(self) -> Tuple[TextTerm, ...]:
        return tuple(t for t in self.text_terms if not t.from_object)


@dataclass(frozen=True)
class SearchHit:
    bibcode: str
    score: float
    record: BibRecord

    def to_dict(self) -> Dict:
        return {
            "bibcode": self.bibcode,
            "score": self.score,
            "title": self.record.title,
            "first_author": self.record.first_author.display(),
            "pubdate": str(self.record.pubdate),
        }


# Parsing

def name_parts(given: str) -> List[str]:
    """Folded given-name parts; periods and commas separate initials."""
    return [p for p in re.split(r"[\s.,]+", fold_text(given or "")) if p]


def normalize_last_name(last: str) -> str:
    return " ".join(fold_text(last).split())


def parse_author_clause(raw: str) -> AuthorClause:
    """Parse "[^]Last[, First Middle...]" into a clause with folded names.

    A leading caret restricts the clause to the first author of a record.
    """
    text = raw.strip()
    first_only = text.startswith("^")
    if first_only:
        text = text[1:].strip()
    last, _, given = text.partition(",")
    last = normalize_last_name(last)
    if not last:
        raise InvalidQuery(f"author {raw!r} has no last name")
    parts = name_parts(given)
    return AuthorClause(
        last_name=last,
        first_name=parts[0] if parts else None,
        middle_names=tuple(parts[1:]),
        first_author_only=first_only,
    )


def parse_pubdate(raw: str) -> PubDate:
    """YYYY or YYYY-MM (also YYYY/MM); month 00 means unknown."""
    match = _DATE_RE.match(raw.strip())
    if not match:
        raise MalformedDate(f"{raw!r}: expected YYYY or YYYY-MM")
    year = int(match.group(1))
    month = int(match.group(2)) if match.group(2) else 0
    if not 0 <= month <= 12:
        raise MalformedDate(f"{raw!r}: month {month} out of range")
    return PubDate(year, month)


def parse_text_terms(raw: str) -> List[TextTerm]:
    """Tokenize each word; a leading "=" marks all of its tokens exact."""
    terms = []
    for word in raw.split():
        exact = word.startswith("=")
        for token in tokenize(word.lstrip("=")):
            terms.append(TextTerm(token, exact=exact))
    return terms


def _values(fields: Mapping[str, FieldValue], key: str) -> List[str]:
    value = fields.get(key)
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    return [v for v in (str(x).strip() for x in value) if v]


def _single(fields: Mapping[str, FieldValue], key: str) -> str:
    values = _values(fields, key)
    return values[-1] if values else ""


def _code_set(raw: str) -> FrozenSet[str]:
    return frozenset(c.strip() for c in raw.split(",") if c.strip())


def parse_query(fields: Mapping[str, FieldValue]) -> QueryAst:
    """Validate raw form fields and build the query AST.

    Raises EmptyQuery when every field is blank and InvalidQuery, MalformedDate
    or UnknownDatabase for values that cannot be interpreted.
    """
    unknown = sorted(set(fields) - set(QUERY_FIELDS))
    if unknown:
        raise InvalidQuery(f"unknown query fields: {', '.join(unknown)}")

    authors = tuple(parse_author_clause(a) for a in _values(fields, "author"))
    text_terms = parse_text_terms(_single(fields, "text"))

    object_terms = []
    for raw in _values(fields, "object"):
        object_terms.extend(o.strip() for o in re.split(r"[;,\n]", raw) if o.strip())
    for name in object_terms:
        text_terms.extend(TextTerm(t, exact=False, from_object=True) for t in tokenize(name))

    date = None
    start_raw, end_raw = _single(fields, "start_date"), _single(fields, "end_date")
    if start_raw or end_raw:
        start = parse_pubdate(start_raw) if start_raw else PubDate(1000, 0)
        end = parse_pubdate(end_raw) if end_raw else PubDate(2999, 0)
        date = DateRange(start, end)
        if date.lower > date.upper:
            raise MalformedDate(f"start {start} is after end {end}")

    include = _code_set(_single(fields, "journals_include")) or None
    exclude = _code_set(_single(fields, "journals_exclude"))
    if include and include & exclude:
        raise InvalidQuery(f"journals both included and excluded: {', '.join(sorted(include & exclude))}")

    refereed = _single(fields, "refereed")
    if refereed not in ("", "0", "1"):
        raise InvalidQuery(f"refereed must be 0 or 1, got {refereed!r}")

    databases = _code_set(_single(fields, "db")) or None
    if databases:
        bad = sorted(databases - set(DATABASES))
        if bad:
            raise UnknownDatabase(", ".join(bad))

    filters = Filters(
        include_journals=include,
        exclude_journals=exclude,
        refereed_only=refereed == "1",
        group=_single(fields, "group") or None,
        databases=databases,
    )

    combine = (_single(fields, "combine") or AND).upper()
    if combine not in (AND, OR):
        raise InvalidQuery(f"combine must be and/or, got {combine!r}")

    limit_raw = _single(fields, "limit")
    try:
        limit = int(limit_raw) if limit_raw else DEFAULT_LIMIT
    except ValueError:
        raise InvalidQuery(f"limit must be an integer, got {limit_raw!r}")
    if limit < 1:
        raise InvalidQuery(f"limit must be positive, got {limit}")

    if not (authors or text_terms or object_terms or date or not filters.is_empty()):
        raise EmptyQuery("all query fields are blank")

    return QueryAst(
        authors=authors,
        text_terms=tuple(text_terms),
        object_terms=tuple(object_terms),
        date=date,
        filters=filters,
        combine_text=combine,
        limit=limit,
    )


def canonical_query(ast: QueryAst) -> str:
    """Stable, lowercase-keyed rendering used for feed titles and digest headers."""
    parts = [f"author={a.render()}" for a in ast.authors]
    words = [("=" if t.exact else "") + t.token for t in ast.user_terms]
    if words:
        parts.append(f"text={' '.join(words)}")
    if ast.object_terms:
        parts.append(f"object={', '.join(ast.object_terms)}")
    if ast.date:
        parts.append(f"start_date={ast.date.start}")
        parts.append(f"end_date={ast.date.end}")
    f = ast.filters
    if f.include_journals:
        parts.append(f"journals_include={','.join(sorted(f.include_journals))}")
    if f.exclude_journals:
        parts.append(f"journals_exclude={','.join(sorted(f.exclude_journals))}")
    if f.refereed_only:
        parts.append("refereed=1")
    if f.group:
        parts.append(f"group={f.group}")
    if f.databases:
        parts.append(f"db={','.join(sorted(f.databases))}")
    if ast.combine_text != AND:
        parts.append(f"combine={ast.combine_text.lower()}")
    parts.append(f"limit={ast.limit}")
    return "; ".join(parts)


# Matching

def names_compatible(a: str, b: str) -> bool:
    """Equal names, or an initial against a name starting with it."""
    if a == b:
        return True
    if len(a) == 1 and b.startswith(a):
        return True
    return len(b) == 1 and a.startswith(b)


def _author_matches(clause: AuthorClause, author: Author) -> bool:
    if normalize_last_name(author.last_name) != clause.last_name:
        return False
    if clause.first_name is None:
        return True
    given = name_parts(" ".join((author.first_name, *author.middle_names)))
    wanted = [clause.first_name, *clause.middle_names]
    # positions missing on either side carry no constraint
    return all(names_compatible(q, r) for q, r in zip(wanted, given))


def match_author(clause: AuthorClause, record: BibRecord) -> bool:
    """True if any eligible author of the record satisfies the clause."""
    candidates = record.authors[:1] if clause.first_author_only else record.authors
    return any(_author_matches(clause, a) for a in candidates)


def match_date(date_range: DateRange, pub: PubDate) -> bool:
    """Unknown months match only when the whole year lies in the range."""
    if pub.month == 0:
        return date_range.lower <= (pub.year, 1) and (pub.year, 12) <= date_range.upper
    return date_range.lower <= (pub.year, pub.month) <= date_range.upper


# Groups

class GroupStore:
    """Curated named bibcode sets, one text file per group."""

    def __init__(self, groups: Optional[Mapping[str, Iterable[str]]] = None):
        self._groups: Dict[str, FrozenSet[str]] = {
            name: frozenset(members) for name, members in (groups or {}).items()
        }

    @classmethod
    def load(cls, directory: str) -> "GroupStore":
        groups = {}
        for path in sorted(glob.glob(os.path.join(directory, "*.txt"))):
            name = os.path.splitext(os.path.basename(path))[0]
            members = []
            with open(path, "r", encoding="utf-8") as f:
                for line_number, line in enumerate(f, start=1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    try:
                        members.append(parse_bibcode(line).render())
                    except MalformedBibcode as e:
                        logger.warning(f"Group {name} line {line_number} skipped: {e}")
            groups[name] = members
        logger.info(f"Loaded {len(groups)} groups from {directory}")
        return cls(groups)

    def names(self) -> List[str]:
        return sorted(self._groups)

    def members(self, name: str) -> FrozenSet[str]:
        try:
            return self._groups[name]
        except KeyError:
            raise UnknownGroup(name)


# Execution

def _mentions(index: IndexedCorpus, seq: int, tokens: Iterable[str]) -> bool:
    return any(index.tf(seq, t, TITLE) or index.tf(seq, t, ABSTRACT) for t in tokens)


def query_weights(ast: QueryAst, table: SynonymTable) -> Dict[str, float]:
    """Per-token weights after synonym expansion of the user terms."""
    weights: Counter = Counter()
    for term in ast.user_terms:
        for token in expand_term(term.token, table, term.exact):
            weights[token] += 1.0
    return dict(weights)


def _candidate_seqs(index: IndexedCorpus, expansions: List[Set[str]], combine: str) -> Set[int]:
    indexed = set(index.field_lengths[TITLE])
    if not expansions:
        return indexed
    per_term = [set().union(*(index.matching_documents(t) for t in exp)) for exp in expansions]
    if combine == AND:
        return set.intersection(*per_term)
    return set.union(*per_term)


def _object_matches(ast: QueryAst, record: BibRecord, index: IndexedCorpus) -> bool:
    names = {n.lower() for n in record.object_names}
    for obj in ast.object_terms:
        if obj.lower() in names:
            return True
        tokens = tokenize(obj)
        if tokens and all(_mentions(index, record.ingest_seq, expand_term(t, index.synonyms)) for t in tokens):
            return True
    return False


def _passes_filters(filters: Filters, record: BibRecord, members: Optional[FrozenSet[str]], registry) -> bool:
    """Journal, refereed, group and database restrictions."""
    if filters.include_journals is not None and record.journal_code not in filters.include_journals:
        return False
    if record.journal_code in filters.exclude_journals:
        return False
    if filters.refereed_only and not registry.is_refereed(record.journal_code):
        return False
    if members is not None and record.bibcode.render() not in members:
        return False
    if filters.databases and not (record.databases & filters.databases):
        return False
    return True


def execute(ast: QueryAst, index: IndexedCorpus, corpus: Corpus, groups: GroupStore, registry,
            after_seq: int = 0, database: Optional[str] = None) -> List[SearchHit]:
    """Run a query; ``after_seq`` and ``database`` restrict candidates for digests."""
    members = groups.members(ast.filters.group) if ast.filters.group else None
    table = index.synonyms
    expansions = [expand_term(t.token, table, t.exact) for t in ast.user_terms]
    weights = query_weights(ast, table)

    hits = []
    for seq in sorted(_candidate_seqs(index, expansions, ast.combine_text)):
        if seq <= after_seq:
            continue
        record = corpus.by_seq(seq)
        if database is not None and database not in record.databases:
            continue
        if not all(match_author(c, record) for c in ast.authors):
            continue
        if expansions:
            mentioned = [_mentions(index, seq, exp) for exp in expansions]
            if not (all(mentioned) if ast.combine_text == AND else any(mentioned)):
                continue
        if ast.object_terms and not _object_matches(ast, record, index):
            continue
        if ast.date and not match_date(ast.date, record.pubdate):
            continue
        if not _passes_filters(ast.filters, record, members, registry):
            continue
        hits.append(SearchHit(record.bibcode.render(), score(index, seq, weights), record))

    hits.sort(key=lambda h: (-h.score, h.record.ingest_seq))
    logger.debug(f"Query [{canonical_query(ast)}] matched {len(hits)} records")
    return hits[:ast.limit]


def group_report(name: str, groups: GroupStore, corpus: Corpus, registry) -> Dict:
    """Bibliometric summary of a curated group."""
    members = groups.members(name)
    records = [corpus.get(b) for b in sorted(members)]
    present = [r for r in records if r is not None]
    per_year = Counter(r.pubdate.year for r in present)
    return {
        "group": name,
        "members": len(members),
        "records": len(present),
        "missing": len(members) - len(present),
        "refereed": sum(1 for r in present if registry.is_refereed(r.journal_code)),
        "references": sum(len(r.references) for r in present),
        "per_year": {str(year): per_year[year] for year in sorted(per_year)},
    }
