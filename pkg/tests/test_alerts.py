import json
import os
from datetime import datetime, timedelta, timezone

import pytest

from alerts import (
    SubscriberProfile,
    check_feed,
    load_profiles,
    render_rss,
    run_digest,
    save_profiles,
)
from conftest import FixedRegistry, author, bibcode_for, corpus_from, record_doc
from corpus import Corpus, ingest_records
from errors import MalformedRecord, UnknownDatabase
from index import SynonymTable, build_index
from query import GroupStore, SearchHit, execute, parse_query

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")
START = datetime(2024, 3, 1, 6, 0, tzinfo=timezone.utc)


def quasar_doc(i, db="ast", title=None):
    return record_doc(bibcode_for(i), title or f"Quasar survey {i}", "Quasar hosts observed.",
                      databases=(db,))


def digest_once(profiles, corpus, now, **kwargs):
    return run_digest(profiles, corpus, build_index(corpus, SynonymTable()), now,
                      registry=FixedRegistry(), **kwargs)


def test_profile_validation():
    with pytest.raises(MalformedRecord):
        SubscriberProfile("bad id!", {"ast": {"text": "quasar"}})
    with pytest.raises(UnknownDatabase):
        SubscriberProfile("alice", {"bio": {"text": "quasar"}})
    with pytest.raises(MalformedRecord):
        SubscriberProfile("alice", {"ast": {"text": "quasar"}}, frequencies={"ast": "daily"})
    with pytest.raises(MalformedRecord):
        SubscriberProfile("alice", {"ast": {"text": "quasar"}}, frequencies={"ast": 0})
    SubscriberProfile("alice", {"pre": {"text": "quasar"}}, frequencies={"pre": "weekly"})


def test_due_follows_cycle():
    profile = SubscriberProfile("alice", {"pre": {"text": "x"}, "ast": {"text": "x"}},
                                frequencies={"pre": "daily"},
                                last_run_at={"pre": START, "ast": START})
    assert not profile.due("pre", START + timedelta(hours=23))
    assert profile.due("pre", START + timedelta(days=1))
    assert not profile.due("ast", START + timedelta(days=9))
    assert profile.due("ast", START + timedelta(days=10))
    assert profile.due("gen", START)


def test_profiles_round_trip(tmp_path):
    path = str(tmp_path / "profiles.jsonl")
    profiles = [
        SubscriberProfile("alice", {"ast": {"text": "quasar", "author": ["^Grant"]}},
                          frequencies={"ast": 7}, last_run={"ast": 12}, last_run_at={"ast": START}),
        SubscriberProfile("bob", {"pre": {"text": "lattice"}}, frequencies={"pre": "daily"}),
    ]
    save_profiles(path, profiles)
    loaded = load_profiles(path)
    assert [p.to_document() for p in loaded] == [p.to_document() for p in profiles]


def test_load_profiles_skips_bad_lines(tmp_path):
    path = tmp_path / "profiles.jsonl"
    path.write_text('{"id": "alice", "queries": {"ast": {"text": "quasar"}}}\n'
                    "{broken\n"
                    '{"id": "carol", "queries": {"bio": {"text": "x"}}}\n', encoding="utf-8")
    assert [p.subscriber_id for p in load_profiles(str(path))] == ["alice"]
    assert load_profiles(str(tmp_path / "absent.jsonl")) == []


def test_digest_delivers_each_record_exactly_once():
    corpus = corpus_from(quasar_doc(i) for i in range(3))
    profile = SubscriberProfile("alice", {"ast": {"text": "quasar", "limit": "100"}})
    delivered = []
    now = START
    next_i = 3
    for batch in range(5):
        lines = [json.dumps(quasar_doc(next_i + k, db="ast" if k % 3 else "phy")) for k in range(batch + 2)]
        next_i += batch + 2
        ingest_records(corpus, lines)
        for run in range(5):
            documents = digest_once([profile], corpus, now)
            if run:
                assert documents == []
            delivered.extend(item.bibcode for d in documents for item in d.items)
            now += timedelta(days=10)

    expected = [r.bibcode.render() for r in corpus.records if "ast" in r.databases]
    assert sorted(delivered) == sorted(expected)
    assert len(delivered) == len(set(delivered))
    assert profile.last_run["ast"] == corpus.max_seq


def test_digest_reports_only_new_records():
    corpus = corpus_from(quasar_doc(i) for i in range(4))
    profile = SubscriberProfile("alice", {"ast": {"text": "quasar"}}, last_run={"ast": corpus.max_seq})
    ingest_records(corpus, [json.dumps(quasar_doc(10)), json.dumps(quasar_doc(11))])
    documents = digest_once([profile], corpus, START)
    assert len(documents) == 1
    assert [i.bibcode for i in documents[0].items] == [bibcode_for(10), bibcode_for(11)]
    assert profile.last_run["ast"] == 6
    assert digest_once([profile], corpus, START + timedelta(days=10)) == []


def test_digest_respects_cycle():
    corpus = corpus_from([quasar_doc(0)])
    profile = SubscriberProfile("alice", {"ast": {"text": "quasar"}}, last_run_at={"ast": START})
    assert digest_once([profile], corpus, START + timedelta(days=3)) == []
    assert "ast" not in profile.last_run
    assert len(digest_once([profile], corpus, START + timedelta(days=10))) == 1


def test_malformed_stored_query_is_skipped():
    corpus = corpus_from([quasar_doc(0), quasar_doc(1, db="phy")])
    broken = SubscriberProfile("alice", {"ast": {"text": ""}, "phy": {"text": "quasar"}})
    healthy = SubscriberProfile("bob", {"ast": {"text": "quasar"}})
    documents = digest_once([broken, healthy], corpus, START)
    assert [(d.subscriber_id, d.database) for d in documents] == [("alice", "phy"), ("bob", "ast")]
    assert "ast" not in broken.last_run
    assert "ast" not in broken.last_run_at
    assert broken.last_run["phy"] == 2


def test_digest_html_is_escaped_and_written(tmp_path):
    corpus = corpus_from([record_doc(bibcode_for(0), "<b>Quasar & Jets</b>", None,
                                     [author("O'Neil", "Ann")])])
    profile = SubscriberProfile("alice", {"ast": {"text": "quasar"}})
    documents = digest_once([profile], corpus, START, output_dir=str(tmp_path), base_url="https://adslite.example")
    doc = documents[0]
    assert "&lt;b&gt;Quasar &amp; Jets&lt;/b&gt;" in doc.html
    assert "<b>Quasar" not in doc.html
    assert "O&#x27;Neil, Ann" in doc.html
    assert f'href="https://adslite.example/abs/{bibcode_for(0)}"' in doc.html
    assert doc.filename == "alice-ast-20240301T060000Z.html"
    assert (tmp_path / doc.filename).read_text(encoding="utf-8") == doc.html


def golden_corpus():
    return corpus_from([
        record_doc("2006ApJ...636..891G", "Quasar Host Galaxies", "Quasar hosts.",
                   [author("Grant", "Carolyn", ["S."])], year=2006, month=3),
        record_doc("2005AJ....130.1234A", "Quasar Clustering & Environment", "Quasar pairs.",
                   [author("Accomazzi", "Alberto")], year=2005, month=0),
        record_doc("1999MNRAS.302..417T", "Radio-loud <Quasars>", None,
                   [author("Thompson", "Donna")], year=1999, month=11),
    ])


def test_render_rss_matches_golden_file():
    corpus = golden_corpus()
    hits = [SearchHit(r.bibcode.render(), 1.0, r) for r in corpus.records]
    feed = render_rss(parse_query({"text": "quasar", "limit": "3"}), hits, "https://adslite.example")
    with open(os.path.join(GOLDEN_DIR, "three_results.xml"), "rb") as f:
        assert feed.to_bytes() == f.read()
    assert [i.guid for i in feed.items] == [h.bibcode for h in hits]
    assert check_feed(feed.xml) == []


def test_feed_is_limited_and_valid_for_real_queries(small_index, small_corpus):
    for fields in ({"text": "quasar", "limit": "1"}, {"author": "Grant"}, {"object": "3C 273"},
                   {"text": "reddening"}, {"start_date": "1990", "end_date": "2010"}):
        ast = parse_query(fields)
        hits = execute(ast, small_index, small_corpus, GroupStore(), FixedRegistry())
        feed = render_rss(ast, hits)
        assert len(feed.items) == min(len(hits), ast.limit)
        assert check_feed(feed.xml) == []


def test_empty_feed_is_valid():
    feed = render_rss(parse_query({"text": "nothing"}), [])
    assert feed.items == []
    assert check_feed(feed.xml) == []
    assert "<title>text=nothing; limit=20</title>" in feed.xml


def test_check_feed_reports_problems():
    assert check_feed("<rss") != []
    assert check_feed('<rss version="0.91"><channel><title/><link/><description/></channel></rss>') \
        == ['root must be <rss version="2.0">']
    assert check_feed('<rss version="2.0"><channel><title/><link/></channel></rss>') \
        == ["channel lacks <description>"]
    assert check_feed('<rss version="2.0"><channel><title/><link/><description/><item><guid>x</guid></item>'
                      '</channel></rss>') == ["item 1 has neither <title> nor <description>"]
    assert check_feed('<rss version="2.0"></rss>') == ["exactly one <channel> required"]


def test_corpus_without_matches_produces_no_digest():
    corpus = Corpus()
    profile = SubscriberProfile("alice", {"ast": {"text": "quasar"}})
    assert digest_once([profile], corpus, START) == []
    assert profile.last_run["ast"] == 0
