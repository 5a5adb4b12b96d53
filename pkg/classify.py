"""
Database classification and the refereed-status registry.

Each database gets a multinomial naive Bayes model (scikit-learn) fitted on its
member records; the background distribution pools the counts of all of them.
An article is scored against every database as

    sum over its tokens t of  w(t) * log(P(t|db) / P(t|background))
    + citation_weight * (number of its references into the database's core journals)

and assigned to the highest-scoring database. Articles whose abstract is
shorter than ``min_words`` tokens are not scored at all.
"""

import logging
import math
import os
import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from dotenv import dotenv_values
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.naive_bayes import MultinomialNB

from corpus import DATABASES, BibRecord, Corpus
from errors import ConfigError, EmptyDatabase, InvalidQuery, UnknownDatabase
from index import record_tokens, tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierParams:
    min_words: int = 20
    word_weights: Mapping[str, float] = field(default_factory=dict)
    citation_weight: float = 1.0
    core_journals: Mapping[str, FrozenSet[str]] = field(default_factory=dict)
    smoothing: float = 0.5
    default_word_weight: float = 1.0

    def __post_init__(self):
        if self.min_words < 1:
            raise ConfigError(f"min_words must be >= 1, got {self.min_words}")
        if self.smoothing <= 0:
            raise ConfigError(f"smoothing must be > 0, got {self.smoothing}")
        if self.citation_weight < 0:
            raise ConfigError(f"citation_weight must be >= 0, got {self.citation_weight}")
        bad = sorted(t for t, w in self.word_weights.items() if w <= 0)
        if bad:
            raise ConfigError(f"word weights must be positive: {', '.join(bad)}")

    def weight(self, token: str) -> float:
        return self.word_weights.get(token, self.default_word_weight)


def load_params(path: str) -> ClassifierParams:
    """Read a dotenv-style parameter file.

    word_weights=galaxy:2.0,quark:1.5
    core_journals=ast:ApJ,AJ,MNRAS;phy:PhRvD,PhRvL
    """
    if not os.path.exists(path):
        raise ConfigError(f"classifier parameter file not found: {path}")
    values = dotenv_values(path)
    try:
        word_weights = {}
        for pair in (values.get("word_weights") or "").split(","):
            if pair.strip():
                token, _, weight = pair.partition(":")
                word_weights[token.strip().lower()] = float(weight)
        core_journals = {}
        for chunk in (values.get("core_journals") or "").split(";"):
            if chunk.strip():
                db, _, journals = chunk.partition(":")
                db = db.strip()
                if db not in DATABASES:
                    raise ConfigError(f"unknown database in core_journals: {db!r}")
                core_journals[db] = frozenset(j.strip() for j in journals.split(",") if j.strip())
        params = ClassifierParams(
            min_words=int(values.get("min_words") or 20),
            word_weights=word_weights,
            citation_weight=float(values.get("citation_weight") or 1.0),
            core_journals=core_journals,
            smoothing=float(values.get("smoothing") or 0.5),
            default_word_weight=float(values.get("default_word_weight") or 1.0),
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}")
    logger.info(f"Loaded classifier parameters from {path}: min_words={params.min_words}, "
                f"citation_weight={params.citation_weight}, smoothing={params.smoothing}")
    return params


@dataclass(frozen=True)
class DatabaseModel:
    database: str
    term_counts: Mapping[str, int]
    total_tokens: int
    vocabulary: FrozenSet[str]

    def probability(self, token: str, smoothing: float) -> float:
        return (self.term_counts.get(token, 0) + smoothing) / (self.total_tokens + smoothing * len(self.vocabulary))


@dataclass
class ClassificationResult:
    scores: Dict[str, float]
    assigned: Optional[str]
    gated: bool

    def to_dict(self) -> Dict:
        return {"scores": dict(sorted(self.scores.items())), "assigned": self.assigned, "gated": self.gated}


def train(corpus: Corpus, params: ClassifierParams,
          databases: Sequence[str] = DATABASES) -> Dict[str, DatabaseModel]:
    """Fit one multinomial model per database over title and abstract tokens.

    A record filed in several databases is one training row per membership,
    so its tokens count toward each of them.
    """
    rows: List[BibRecord] = []
    labels: List[str] = []
    for record in corpus.records:
        for db in sorted(record.databases):
            if db in databases:
                rows.append(record)
                labels.append(db)
    empty = [db for db in databases if db not in labels]
    if empty:
        raise EmptyDatabase(", ".join(empty))

    vectorizer = CountVectorizer(analyzer=record_tokens)
    try:
        X = vectorizer.fit_transform(rows)
    except ValueError as e:
        raise EmptyDatabase(f"no tokens in training records: {e}")
    clf = MultinomialNB(alpha=params.smoothing)
    clf.fit(X, labels)

    vocabulary = frozenset(vectorizer.vocabulary_)
    classes = list(clf.classes_)
    models = {}
    for db in databases:
        counts = clf.feature_count_[classes.index(db)]
        term_counts = {term: int(counts[col]) for term, col in vectorizer.vocabulary_.items() if counts[col]}
        models[db] = DatabaseModel(db, term_counts, sum(term_counts.values()), vocabulary)
    logger.info(f"Trained {len(models)} database models over a vocabulary of {len(vocabulary)} terms")
    return models


class BackgroundModel:
    """Term counts of all databases pooled into one smoothed distribution."""

    def __init__(self, models: Sequence[DatabaseModel]):
        self.models = list(models)
        self.counts: Counter = Counter()
        for model in self.models:
            self.counts.update(model.term_counts)
        self.total = sum(model.total_tokens for model in self.models)
        self.vocabulary = frozenset().union(*(model.vocabulary for model in self.models))

    def probability(self, token: str, smoothing: float) -> float:
        return (self.counts.get(token, 0) + smoothing) / (self.total + smoothing * len(self.vocabulary))


def _background(all_models: Mapping[str, DatabaseModel]) -> BackgroundModel:
    return BackgroundModel([all_models[db] for db in sorted(all_models)])


def core_citations(record: BibRecord, journals: Iterable[str]) -> int:
    journals = set(journals)
    return sum(1 for ref in record.references if ref.journal in journals)


def score_against(record: BibRecord, model: DatabaseModel, all_models: Mapping[str, DatabaseModel],
                  params: ClassifierParams, background: Optional[BackgroundModel] = None) -> float:
    background = background or _background(all_models)
    k = params.smoothing
    total = 0.0
    for token in record_tokens(record):
        if token not in model.vocabulary:
            continue  # unseen in training, no evidence either way
        total += params.weight(token) * math.log(model.probability(token, k) / background.probability(token, k))
    total += params.citation_weight * core_citations(record, params.core_journals.get(model.database, ()))
    return total


def classify(record: BibRecord, models: Mapping[str, DatabaseModel], params: ClassifierParams,
             background: Optional[BackgroundModel] = None) -> ClassificationResult:
    if len(tokenize(record.abstract or "")) < params.min_words:
        return ClassificationResult(scores={}, assigned=None, gated=True)
    background = background or _background(models)
    scores = {db: score_against(record, m, models, params, background) for db, m in models.items()}
    assigned = min(scores, key=lambda db: (-scores[db], db))
    return ClassificationResult(scores=scores, assigned=assigned, gated=False)


@dataclass(frozen=True)
class Suggestion:
    bibcode: str
    current: Tuple[str, ...]
    suggested: str
    margin: float

    def to_dict(self) -> Dict:
        return {"bibcode": self.bibcode, "current": list(self.current),
                "suggested": self.suggested, "margin": self.margin}


def reclassification_report(corpus: Corpus, models: Mapping[str, DatabaseModel], params: ClassifierParams,
                            source_db) -> List[Suggestion]:
    """Records in ``source_db`` (one id or several) whose best database is not a current one."""
    sources = [source_db] if isinstance(source_db, str) else list(source_db)
    for db in sources:
        if db not in DATABASES:
            raise UnknownDatabase(str(db))
    background = _background(models)
    rows = []
    for record in corpus.records:
        if not record.databases & set(sources):
            continue
        result = classify(record, models, params, background)
        if result.gated or result.assigned in record.databases:
            continue
        current_best = max((result.scores[db] for db in record.databases if db in result.scores),
                           default=None)
        if current_best is None:
            continue
        margin = result.scores[result.assigned] - current_best
        rows.append((record.ingest_seq, Suggestion(record.bibcode.render(), tuple(sorted(record.databases)),
                                                   result.assigned, margin)))
    rows.sort(key=lambda row: (-row[1].margin, row[0]))
    logger.info(f"Reclassification report over {', '.join(sources)}: {len(rows)} suggestions")
    return [s for _, s in rows]


# Refereed registry

REFEREED = "refereed"
NON_REFEREED = "non-refereed"


def _utcnow() -> datetime:
    return datetime.now(tz=timezone.utc)


class RefereedRegistry:
    """One boolean per journal; every write is appended to an audit log."""

    def __init__(self, path: Optional[str] = None, clock: Callable[[], datetime] = _utcnow):
        self.path = path
        self.clock = clock
        self._status: Dict[str, bool] = {}
        self._audit: List[Tuple[str, str, str]] = []
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str, clock: Callable[[], datetime] = _utcnow) -> "RefereedRegistry":
        registry = cls(path, clock)
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                for line_number, line in enumerate(f, start=1):
                    parts = line.split()
                    if len(parts) != 3 or parts[2] not in (REFEREED, NON_REFEREED):
                        logger.warning(f"Registry line {line_number} ignored: {line.strip()!r}")
                        continue
                    timestamp, journal, status = parts
                    registry._status[journal] = status == REFEREED
                    registry._audit.append((timestamp, journal, status))
        logger.info(f"Loaded refereed registry from {path}: {len(registry._status)} journals")
        return registry

    def set_refereed_status(self, journal_code: str, status) -> None:
        """Record a status change and append it to the audit log."""
        if not isinstance(journal_code, str) or not journal_code or any(c.isspace() for c in journal_code):
            raise InvalidQuery(f"journal code must be non-empty without whitespace, got {journal_code!r}")
        if isinstance(status, str):
            if status not in (REFEREED, NON_REFEREED):
                raise InvalidQuery(f"status must be {REFEREED} or {NON_REFEREED}")
            refereed = status == REFEREED
        else:
            refereed = bool(status)
        label = REFEREED if refereed else NON_REFEREED
        with self._lock:
            timestamp = self.clock().strftime("%Y-%m-%dT%H:%M:%SZ")
            if self.path:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(f"{timestamp} {journal_code} {label}\n")
            self._status[journal_code] = refereed
            self._audit.append((timestamp, journal_code, label))
        logger.info(f"Refereed status of {journal_code} set to {label}")

    def is_refereed(self, journal_code: str) -> bool:
        return self._status.get(journal_code, False)

    def status(self, journal_code: str) -> str:
        return REFEREED if self.is_refereed(journal_code) else NON_REFEREED

    def audit(self, journal_code: Optional[str] = None) -> List[Tuple[str, str, str]]:
        with self._lock:
            return [row for row in self._audit if journal_code is None or row[1] == journal_code]

    def snapshot(self) -> Dict[str, bool]:
        with self._lock:
            return dict(self._status)
