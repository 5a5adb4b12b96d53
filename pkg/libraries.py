"""
Private libraries: named bibcode collections shared through unique URL tokens.

State lives in an append-only journal, one JSON mutation per line::

    {"op": "create", "token": "...", "payload": {"name": ..., "owner": ..., "at": ...}}
    {"op": "add", "token": "...", "payload": {"bibcodes": [...], "at": ...}}

and is rebuilt by replaying the journal at startup.
"""

import json
import logging
import os
import random
import re
import secrets
import string
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from corpus import parse_bibcode
from errors import EmptyLibraryName, MalformedBibcode, UnknownToken
from metrics import adslite_libraries

logger = logging.getLogger(__name__)

TOKEN_LENGTH = 16
TOKEN_ALPHABET = string.ascii_letters + string.digits
TOKEN_RE = re.compile(rf"^[A-Za-z0-9]{{{TOKEN_LENGTH}}}$")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S.%fZ"
MIN_TICK = timedelta(microseconds=1)


def _utcnow() -> datetime:
    return datetime.now(tz=timezone.utc)


@dataclass
class PrivateLibrary:
    token: str
    name: str
    owner: str
    bibcodes: List[str] = field(default_factory=list)
    created: datetime = field(default_factory=_utcnow)
    modified: datetime = field(default_factory=_utcnow)

    def copy(self) -> "PrivateLibrary":
        return PrivateLibrary(self.token, self.name, self.owner, list(self.bibcodes), self.created, self.modified)

    def to_dict(self) -> Dict:
        return {
            "token": self.token,
            "name": self.name,
            "owner": self.owner,
            "bibcodes": list(self.bibcodes),
            "created": self.created.strftime(TIMESTAMP_FORMAT),
            "modified": self.modified.strftime(TIMESTAMP_FORMAT),
        }


@dataclass(frozen=True)
class AddError:
    bibcode: str
    reason: str
    detail: str


class LibraryStore:
    def __init__(self, journal_path: Optional[str] = None, seed: Optional[int] = None,
                 clock: Callable[[], datetime] = _utcnow):
        self.journal_path = journal_path
        self.clock = clock
        self._rng = random.Random(seed) if seed is not None else secrets.SystemRandom()
        self._libraries: Dict[str, PrivateLibrary] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        if journal_path and os.path.exists(journal_path):
            self.replay()

    def __len__(self) -> int:
        return len(self._libraries)

    def _new_token(self) -> str:
        while True:
            token = "".join(self._rng.choice(TOKEN_ALPHABET) for _ in range(TOKEN_LENGTH))
            if token not in self._libraries:
                return token

    def _journal(self, op: str, token: str, payload: Dict) -> None:
        if not self.journal_path:
            return
        line = json.dumps({"op": op, "token": token, "payload": payload}, sort_keys=True)
        with open(self.journal_path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def replay(self) -> None:
        self._libraries.clear()
        self._locks.clear()
        with open(self.journal_path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    op, token, payload = entry["op"], entry["token"], entry["payload"]
                    at = datetime.strptime(payload["at"], TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
                    if op == "create":
                        self._libraries[token] = PrivateLibrary(token, payload["name"], payload["owner"], [], at, at)
                        self._locks[token] = threading.Lock()
                    elif op == "add":
                        library = self._libraries[token]
                        library.bibcodes.extend(b for b in payload["bibcodes"] if b not in library.bibcodes)
                        library.modified = at
                    else:
                        raise ValueError(f"unknown op {op!r}")
                except (json.JSONDecodeError, KeyError, ValueError) as e:
                    # a torn final line after a crash lands here
                    logger.error(f"Library journal line {line_number} ignored: {e}")
        adslite_libraries.set(len(self._libraries))
        logger.info(f"Replayed {len(self._libraries)} libraries from {self.journal_path}")

    def create_library(self, name: str, owner: str) -> PrivateLibrary:
        if not name or not name.strip():
            raise EmptyLibraryName("library name must not be empty")
        with self._store_lock:
            token = self._new_token()
            now = self.clock()
            library = PrivateLibrary(token, name.strip(), owner, [], now, now)
            self._journal("create", token, {"name": library.name, "owner": owner,
                                            "at": now.strftime(TIMESTAMP_FORMAT)})
            self._libraries[token] = library
            self._locks[token] = threading.Lock()
        adslite_libraries.set(len(self._libraries))
        logger.info(f"Created library {token} ({library.name!r}) for {owner}")
        return library.copy()

    def add_records(self, token: str, bibcodes: Iterable[str]) -> Tuple[PrivateLibrary, List[AddError]]:
        library = self._libraries.get(token)
        if library is None:
            raise UnknownToken(token)
        errors = []
        valid = []
        for raw in bibcodes:
            try:
                valid.append(parse_bibcode(raw).render())
            except MalformedBibcode as e:
                errors.append(AddError(str(raw), e.reason, e.detail))
        with self._locks[token]:
            new = []
            for bibcode in valid:
                if bibcode not in library.bibcodes and bibcode not in new:
                    new.append(bibcode)
            if new:
                now = self.clock()
                if now <= library.modified:
                    # modified strictly advances on every membership change
                    now = library.modified + MIN_TICK
                self._journal("add", token, {"bibcodes": new, "at": now.strftime(TIMESTAMP_FORMAT)})
                library.bibcodes.extend(new)
                library.modified = now
                logger.info(f"Library {token}: added {len(new)} records")
            return library.copy(), errors

    def resolve(self, token: str) -> PrivateLibrary:
        library = self._libraries.get(token)
        if library is None:
            raise UnknownToken(token)
        with self._locks[token]:
            return library.copy()

    def all(self) -> List[PrivateLibrary]:
        return [lib.copy() for _, lib in sorted(self._libraries.items())]
