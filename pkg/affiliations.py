"""
Two-step affiliation search.

Affiliations are stored verbatim and are noisy, so the search first lists the
distinct spellings matching a pattern, then retrieves records carrying the
spellings the user picked. Every result carries a coverage note because only
part of the corpus has affiliations at all.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

from corpus import BibRecord, Corpus
from errors import InvalidQuery

logger = logging.getLogger(__name__)

DEFAULT_BIAS_THRESHOLD = 0.9


@dataclass(frozen=True)
class AffiliationEntry:
    spelling: str
    record_count: int

    def to_dict(self) -> Dict:
        return {"spelling": self.spelling, "record_count": self.record_count}


@dataclass(frozen=True)
class CoverageNote:
    fraction: float
    biased: bool
    threshold: float

    def to_dict(self) -> Dict:
        return {"fraction": self.fraction, "biased": self.biased, "threshold": self.threshold}


def _spellings(record: BibRecord) -> set:
    return {a.affiliation for a in record.authors if a.affiliation and a.affiliation.strip()}


def list_affiliations(corpus: Corpus, pattern: str) -> List[AffiliationEntry]:
    needle = pattern.casefold()
    if not needle.strip():
        raise InvalidQuery("pattern must not be empty")
    counts: Counter = Counter()
    for record in corpus.records:
        for spelling in _spellings(record):
            if needle in spelling.casefold():
                counts[spelling] += 1
    entries = [AffiliationEntry(s, n) for s, n in counts.items()]
    entries.sort(key=lambda e: (-e.record_count, e.spelling))
    logger.debug(f"Affiliation pattern {pattern!r} matched {len(entries)} spellings")
    return entries


def coverage(corpus: Corpus, threshold: float = DEFAULT_BIAS_THRESHOLD) -> CoverageNote:
    records = corpus.records
    with_aff = sum(1 for r in records if _spellings(r))
    fraction = with_aff / len(records) if records else 0.0
    return CoverageNote(fraction=fraction, biased=fraction < threshold, threshold=threshold)


def search_by_affiliations(corpus: Corpus, spellings: Iterable[str],
                           threshold: float = DEFAULT_BIAS_THRESHOLD) -> Tuple[List[str], CoverageNote]:
    wanted = set(spellings)
    if not wanted:
        raise InvalidQuery("at least one spelling is required")
    bibcodes = [r.bibcode.render() for r in corpus.records if _spellings(r) & wanted]
    note = coverage(corpus, threshold)
    if note.biased:
        logger.info(f"Affiliation search over a corpus with {note.fraction:.0%} affiliation coverage; "
                    f"results are biased")
    return bibcodes, note
