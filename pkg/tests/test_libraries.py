import json
from datetime import datetime, timedelta, timezone

import pytest

from conftest import bibcode_for
from errors import EmptyLibraryName, UnknownToken
from libraries import TOKEN_RE, LibraryStore


class StepClock:
    def __init__(self):
        self.now = datetime(2024, 5, 1, tzinfo=timezone.utc)

    def __call__(self):
        self.now += timedelta(seconds=1)
        return self.now


def test_tokens_are_unique_and_well_formed():
    store = LibraryStore(seed=3)
    tokens = [store.create_library(f"lib {i}", "alice").token for i in range(10000)]
    assert len(set(tokens)) == 10000
    assert all(TOKEN_RE.match(t) for t in tokens)
    assert len(store) == 10000


def test_unknown_token():
    store = LibraryStore(seed=1)
    with pytest.raises(UnknownToken):
        store.resolve("A" * 16)
    with pytest.raises(UnknownToken):
        store.add_records("A" * 16, [bibcode_for(1)])
    assert UnknownToken.status == 404


def test_empty_name_is_rejected():
    store = LibraryStore(seed=1)
    for name in ("", "   "):
        with pytest.raises(EmptyLibraryName):
            store.create_library(name, "alice")
    assert len(store) == 0


def test_add_is_idempotent():
    store = LibraryStore(seed=1)
    token = store.create_library("Quasars", "alice").token
    store.add_records(token, [bibcode_for(1), bibcode_for(2)])
    library, errors = store.add_records(token, [bibcode_for(2), bibcode_for(1), bibcode_for(1)])
    assert errors == []
    assert library.bibcodes == [bibcode_for(1), bibcode_for(2)]


def test_add_reports_malformed_and_keeps_valid():
    clock = StepClock()
    store = LibraryStore(seed=1, clock=clock)
    token = store.create_library("Quasars", "alice").token
    library, errors = store.add_records(token, [bibcode_for(1), "2006ApJ", bibcode_for(2)])
    assert library.bibcodes == [bibcode_for(1), bibcode_for(2)]
    assert [(e.bibcode, e.reason) for e in errors] == [("2006ApJ", "MalformedBibcode")]


def test_timestamps_move_only_on_change():
    clock = StepClock()
    store = LibraryStore(seed=1, clock=clock)
    created = store.create_library("Quasars", "alice")
    assert created.created == created.modified
    first, _ = store.add_records(created.token, [bibcode_for(1)])
    assert first.modified > created.created
    again, _ = store.add_records(created.token, [bibcode_for(1)])
    assert again.modified == first.modified
    assert again.created == created.created


def test_modified_advances_when_clock_stands_still(tmp_path):
    frozen = datetime(2024, 5, 1, tzinfo=timezone.utc)
    path = str(tmp_path / "libraries.journal")
    store = LibraryStore(path, seed=1, clock=lambda: frozen)
    created = store.create_library("Quasars", "alice")
    first, _ = store.add_records(created.token, [bibcode_for(1)])
    second, _ = store.add_records(created.token, [bibcode_for(2)])
    assert created.modified < first.modified < second.modified
    unchanged, _ = store.add_records(created.token, [bibcode_for(2)])
    assert unchanged.modified == second.modified
    assert LibraryStore(path).resolve(created.token).modified == second.modified


def test_resolve_returns_a_copy():
    store = LibraryStore(seed=1)
    token = store.create_library("Quasars", "alice").token
    store.resolve(token).bibcodes.append("junk")
    assert store.resolve(token).bibcodes == []


def test_journal_replay_rebuilds_state(tmp_path):
    path = str(tmp_path / "libraries.journal")
    store = LibraryStore(path, seed=5, clock=StepClock())
    a = store.create_library("Quasars", "alice").token
    b = store.create_library("Lattice", "bob").token
    store.add_records(a, [bibcode_for(1), bibcode_for(2)])
    store.add_records(b, [bibcode_for(3)])
    store.add_records(a, [bibcode_for(2), bibcode_for(4)])

    replayed = LibraryStore(path)
    assert [lib.to_dict() for lib in replayed.all()] == [lib.to_dict() for lib in store.all()]
    assert replayed.resolve(a).bibcodes == [bibcode_for(1), bibcode_for(2), bibcode_for(4)]

    with open(path, "r", encoding="utf-8") as f:
        ops = [json.loads(line)["op"] for line in f]
    assert ops == ["create", "create", "add", "add", "add"]


def test_torn_journal_line_is_ignored(tmp_path):
    path = tmp_path / "libraries.journal"
    store = LibraryStore(str(path), seed=5)
    token = store.create_library("Quasars", "alice").token
    store.add_records(token, [bibcode_for(1)])
    with open(path, "a", encoding="utf-8") as f:
        f.write('{"op": "add", "token": "' + token)
    replayed = LibraryStore(str(path))
    assert replayed.resolve(token).bibcodes == [bibcode_for(1)]
