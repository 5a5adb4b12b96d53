import json
import os
from typing import Dict, Iterable, List, Optional, Sequence

import pytest

from corpus import Bibcode, Corpus, record_from_document
from index import SynonymTable, build_index
from settings import ServiceConfig

JOURNALS = ("ApJ", "AJ", "MNRAS", "PhRvD", "Natur")


def bibcode_for(i: int, journal: str = "ApJ", year: int = 2000, initial: str = "A") -> str:
    """Distinct valid bibcode for every i < 10**7."""
    return Bibcode.build(year, journal, volume=i // 10000 + 1, page=i % 10000, initial=initial).render()


def author(last: str, first: str = "", middle: Sequence[str] = (), aff: Optional[str] = None) -> Dict:
    return {"last": last, "first": first, "middle": list(middle), "aff": aff}


def record_doc(bibcode: str, title: str = "Untitled", abstract: Optional[str] = None,
               authors: Optional[List[Dict]] = None, year: int = 2000, month: int = 0,
               journal: Optional[str] = None, databases: Sequence[str] = ("ast",),
               references: Sequence[str] = (), objects: Sequence[str] = (),
               scanned_pages: int = 0, external_links: int = 0) -> Dict:
    return {
        "bibcode": bibcode,
        "title": title,
        "abstract": abstract,
        "authors": authors if authors is not None else [author("Smith", "John")],
        "pubdate": {"year": year, "month": month},
        "journal": journal or bibcode[4:9].rstrip("."),
        "databases": list(databases),
        "references": list(references),
        "objects": list(objects),
        "scanned_pages": scanned_pages,
        "external_links": external_links,
    }


def corpus_from(docs: Iterable[Dict]) -> Corpus:
    corpus = Corpus()
    for doc in docs:
        corpus.append(record_from_document(doc))
    return corpus


def write_jsonl(path, docs: Iterable[Dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(doc, sort_keys=True) + "\n")


class FixedRegistry:
    """Stand-in registry with a fixed set of refereed journals."""

    def __init__(self, refereed: Iterable[str] = ()):
        self.refereed = set(refereed)

    def is_refereed(self, journal_code: str) -> bool:
        return journal_code in self.refereed


@pytest.fixture
def red_table() -> SynonymTable:
    return SynonymTable([["red", "reddening", "reddened"]])


@pytest.fixture
def small_corpus() -> Corpus:
    return corpus_from([
        record_doc("2006ApJ...636..891G", "Quasar Host Galaxies",
                   "We measure the reddening of quasar hosts.",
                   [author("Grant", "Carolyn", ["S."], "Harvard-Smithsonian CfA"),
                    author("Kurtz", "Michael", ["J."])],
                   year=2006, month=3, journal="ApJ"),
        record_doc("2005AJ....130.1234A", "Quasar Clustering",
                   "Red galaxies around quasars.",
                   [author("Accomazzi", "Alberto"), author("Grant", "Carolyn", ["S."])],
                   year=2005, month=0, journal="AJ", databases=("ast", "gen"),
                   references=["2006ApJ...636..891G"]),
        record_doc("1999MNRAS.302..417T", "Radio Galaxies", None,
                   [author("Thompson", "Donna")], year=1999, month=11, journal="MNRAS",
                   objects=["3C 273"]),
    ])


@pytest.fixture
def small_index(small_corpus, red_table):
    return build_index(small_corpus, red_table)


def sample_record_docs() -> List[Dict]:
    """Four-database corpus large enough to train the classifier."""
    words = {
        "ast": "galaxy star nebula redshift quasar telescope stellar cluster luminosity spectrum",
        "phy": "quark boson lattice field gauge symmetry particle collider spin coupling",
        "pre": "draft preprint submitted revised manuscript arxiv version comments pages figures",
        "gen": "climate biology genome ocean species ecology protein cell evolution carbon",
    }
    docs = []
    for i, db in enumerate(sorted(words) * 5):
        vocab = words[db].split()
        abstract = " ".join(vocab[(i + k) % len(vocab)] for k in range(25))
        docs.append(record_doc(bibcode_for(i, journal=JOURNALS[i % len(JOURNALS)]),
                               f"{vocab[i % len(vocab)].title()} study {i}", abstract,
                               [author("Grant" if i % 3 == 0 else "Kurtz", "Carolyn" if i % 3 == 0 else "Michael",
                                       aff="Harvard-Smithsonian CfA" if i % 2 == 0 else None)],
                               year=2000 + i % 5, month=i % 13, databases=(db,)))
    return docs


@pytest.fixture
def service_config(tmp_path) -> ServiceConfig:
    data = tmp_path / "data"
    groups = data / "groups"
    groups.mkdir(parents=True)
    docs = sample_record_docs()
    write_jsonl(data / "corpus.jsonl", docs)
    (data / "synonyms.txt").write_text("red reddening reddened\n", encoding="utf-8")
    (data / "classifier.env").write_text("min_words=20\ncitation_weight=1.0\ncore_journals=ast:ApJ,AJ\n",
                                         encoding="utf-8")
    (groups / "CfA.txt").write_text("\n".join(d["bibcode"] for d in docs[:6]) + "\n", encoding="utf-8")
    (data / "refereed.log").write_text("2024-01-01T00:00:00Z ApJ refereed\n", encoding="utf-8")
    return ServiceConfig(
        corpus_path=str(data / "corpus.jsonl"),
        synonyms_path=str(data / "synonyms.txt"),
        groups_dir=str(groups),
        refereed_path=str(data / "refereed.log"),
        params_path=str(data / "classifier.env"),
        profiles_path=str(data / "profiles.jsonl"),
        libraries_path=str(data / "libraries.journal"),
        listen="127.0.0.1:0",
        output_dir=str(tmp_path / "digests"),
        logs_dir=str(tmp_path / "logs"),
        base_url="http://adslite.test",
        library_seed=7,
    )


@pytest.fixture
def env_file(service_config, tmp_path) -> str:
    path = tmp_path / ".env"
    c = service_config
    path.write_text("\n".join([
        f"ADSLITE_CORPUS_PATH={c.corpus_path}",
        f"ADSLITE_SYNONYMS_PATH={c.synonyms_path}",
        f"ADSLITE_GROUPS_DIR={c.groups_dir}",
        f"ADSLITE_REFEREED_PATH={c.refereed_path}",
        f"ADSLITE_PARAMS_PATH={c.params_path}",
        f"ADSLITE_PROFILES_PATH={c.profiles_path}",
        f"ADSLITE_LIBRARIES_PATH={c.libraries_path}",
        f"ADSLITE_LISTEN={c.listen}",
        f"ADSLITE_OUTPUT_DIR={c.output_dir}",
        f"ADSLITE_LOGS_DIR={c.logs_dir}",
        f"ADSLITE_BASE_URL={c.base_url}",
        f"ADSLITE_LIBRARY_SEED={c.library_seed}",
    ]) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture(autouse=True)
def clean_adslite_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("ADSLITE_"):
            monkeypatch.delenv(key)
