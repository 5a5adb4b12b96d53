#!/usr/bin/python3
"""
adslite - command line front end.

Every subcommand goes through the same AdsService payloads as the HTTP
routes. Read subcommands accept --remote URL and then ask a running service
over HTTP instead of loading the local files.
"""

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from typing import Dict, List, Optional

import requests

from alerts import TIMESTAMP_FORMAT
from errors import AdsLiteError, MalformedDate, MalformedRecord
from log_setup import LoggerSetup
from query import QUERY_FIELDS
from service import AdsService, serve
from settings import ConfigLoader

logger = logging.getLogger(__name__)

REMOTE_TIMEOUT = 30


def print_usage():
    """Print script usage information"""
    print("""
adslite - Usage Guide
=====================

Corpus:
    python3 adslite.py ingest records.jsonl               # Append interchange records
    python3 adslite.py stats                              # Corpus statistics

Search:
    python3 adslite.py search --author "^Grant, C" --text "=reddening"
    python3 adslite.py rss --text quasar --limit 3        # Same fields, RSS 2.0 output
    python3 adslite.py group-report CfA                   # Per-year summary of a group

Classification:
    python3 adslite.py classify record.json               # Score one record document
    python3 adslite.py reclass-report --db phy --db gen   # Records better placed elsewhere
    python3 adslite.py referee-set ApJ refereed           # Registry write
    python3 adslite.py referee-show ApJ

Notifications:
    python3 adslite.py digest --now 2024-01-10T00:00:00Z  # Run due myADS digests

Affiliations:
    python3 adslite.py affil-list "harvard"               # Step 1: spellings
    python3 adslite.py affil-search --spelling "Harvard-Smithsonian CfA"

Private libraries:
    python3 adslite.py lib-create --name "Quasars" --owner alice
    python3 adslite.py lib-add <token> 2006ApJ...636..891G
    python3 adslite.py lib-show <token>

Service:
    python3 adslite.py serve                              # HTTP API plus /metrics

Read commands (search, rss, stats, affil-list, affil-search, lib-show, group-report)
take --remote http://host:port to query a running service.
""")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adslite",
        description="adslite - bibliographic search service",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('--env-file', default='.env', help='dotenv configuration file')
    parser.add_argument('--help-usage', action='store_true', help='Show detailed usage guide')
    sub = parser.add_subparsers(dest='command')

    def remote(p):
        p.add_argument('--remote', metavar='URL', help='Query a running adslite service')
        return p

    def query_fields(p):
        p.add_argument('--author', action='append', help='Author clause, repeatable ("^" anchors first author)')
        p.add_argument('--text', help='Title/abstract words ("=" disables synonyms)')
        p.add_argument('--object', help='Object names, separated by ; or ,')
        p.add_argument('--start-date', dest='start_date', help='YYYY or YYYY-MM')
        p.add_argument('--end-date', dest='end_date', help='YYYY or YYYY-MM')
        p.add_argument('--journals-include', dest='journals_include', help='Comma-separated journal codes')
        p.add_argument('--journals-exclude', dest='journals_exclude', help='Comma-separated journal codes')
        p.add_argument('--refereed', choices=['0', '1'], help='Refereed journals only')
        p.add_argument('--group', help='Curated group name')
        p.add_argument('--db', help='Comma-separated database ids')
        p.add_argument('--combine', choices=['and', 'or'], help='How text terms combine')
        p.add_argument('--limit', help='Maximum number of results')
        return p

    p = sub.add_parser('ingest', help='Ingest an interchange file')
    p.add_argument('path')

    query_fields(remote(sub.add_parser('search', help='Run a query')))
    query_fields(remote(sub.add_parser('rss', help='Run a query and print an RSS feed')))

    p = sub.add_parser('classify', help='Classify one record document')
    p.add_argument('path', help='JSON file with one interchange document')

    p = sub.add_parser('reclass-report', help='Suggest database changes')
    p.add_argument('--db', action='append', required=True, help='Source database, repeatable')

    p = sub.add_parser('digest', help='Run due digests')
    p.add_argument('--now', help=f'Run time ({TIMESTAMP_FORMAT}), default current UTC time')

    remote(sub.add_parser('stats', help='Corpus statistics'))

    p = remote(sub.add_parser('affil-list', help='List affiliation spellings matching a pattern'))
    p.add_argument('pattern')

    p = remote(sub.add_parser('affil-search', help='Records carrying selected spellings'))
    p.add_argument('--spelling', action='append', required=True, help='Exact spelling, repeatable')

    p = sub.add_parser('lib-create', help='Create a private library')
    p.add_argument('--name', required=True)
    p.add_argument('--owner', default='')

    p = sub.add_parser('lib-add', help='Add bibcodes to a library')
    p.add_argument('token')
    p.add_argument('bibcodes', nargs='+')

    p = remote(sub.add_parser('lib-show', help='Show a library'))
    p.add_argument('token')

    sub.add_parser('serve', help='Run the HTTP service')

    p = sub.add_parser('referee-set', help='Set the refereed status of a journal')
    p.add_argument('journal')
    p.add_argument('status', choices=['refereed', 'non-refereed'])

    p = sub.add_parser('referee-show', help='Show the refereed status and audit trail of a journal')
    p.add_argument('journal')

    p = remote(sub.add_parser('group-report', help='Bibliometric summary of a group'))
    p.add_argument('name')

    return parser


def query_fields_from_args(args) -> Dict:
    fields = {}
    for key in QUERY_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            fields[key] = value
    return fields


class RemoteClient:
    """Thin requests wrapper returning the same payloads AdsService does."""

    def __init__(self, base_url: str):
        self.base_url = base_url.rstrip('/')
        self.session = requests.Session()

    def _get(self, path: str, params=None) -> requests.Response:
        response = self.session.get(f"{self.base_url}{path}", params=params, timeout=REMOTE_TIMEOUT)
        if response.headers.get("Content-Type", "").startswith("application/json"):
            body = response.json()
            if body.get("status") == "error":
                raise RemoteError(body.get("reason", "Error"), body.get("detail", ""))
        response.raise_for_status()
        return response

    def search(self, fields: Dict) -> Dict:
        return self._get("/search", fields).json()

    def rss(self, fields: Dict) -> bytes:
        return self._get("/rss", fields).content

    def stats(self) -> Dict:
        return self._get("/stats").json()

    def affil_list(self, pattern: str) -> Dict:
        return self._get("/affil/list", {"pattern": pattern}).json()

    def affil_search(self, spellings: List[str]) -> Dict:
        return self._get("/affil/search", {"spelling": spellings}).json()

    def lib_show(self, token: str) -> Dict:
        return self._get(f"/lib/{token}").json()

    def group_report(self, name: str) -> Dict:
        return self._get(f"/groups/{name}/report").json()


class RemoteError(Exception):
    def __init__(self, reason: str, detail: str):
        super().__init__(f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail


# Output formatting, one line per item

def format_search(payload: Dict) -> List[str]:
    return [f"{r['bibcode']}\t{r['score']:.6f}\t{r['first_author']}\t{r['title']}" for r in payload["results"]]


def format_stats(payload: Dict) -> List[str]:
    lines = []
    for key, value in sorted(payload["stats"].items()):
        if isinstance(value, dict):
            lines.extend(f"{key}.{k}\t{v}" for k, v in sorted(value.items()))
        else:
            lines.append(f"{key}\t{value}")
    return lines


def format_coverage(coverage: Dict) -> str:
    flag = "biased" if coverage["biased"] else "ok"
    return f"coverage\t{coverage['fraction']:.4f}\t{flag}"


def format_library(library: Dict) -> List[str]:
    lines = [f"token\t{library['token']}", f"name\t{library['name']}", f"owner\t{library['owner']}",
             f"created\t{library['created']}", f"modified\t{library['modified']}"]
    lines.extend(f"bibcode\t{b}" for b in library["bibcodes"])
    return lines


def parse_now(value: Optional[str]) -> datetime:
    if not value:
        return datetime.now(tz=timezone.utc).replace(microsecond=0)
    try:
        return datetime.strptime(value, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        raise MalformedDate(f"{value!r}: expected {TIMESTAMP_FORMAT}")


def run_command(args, out) -> None:
    remote_url = getattr(args, 'remote', None)
    if remote_url:
        backend = RemoteClient(remote_url)
    else:
        config = ConfigLoader.validate_config(ConfigLoader.load_config(args.env_file))
        if args.command == 'serve':
            LoggerSetup.setup_logger(config.logs_dir)
            serve(config)
            return
        LoggerSetup.setup_logger(config.logs_dir, level=logging.WARNING)
        backend = AdsService(config)

    def emit(lines):
        for line in lines:
            print(line, file=out)

    command = args.command
    if command == 'search':
        emit(format_search(backend.search(query_fields_from_args(args))))
    elif command == 'rss':
        out.write(backend.rss(query_fields_from_args(args)).decode('utf-8') + "\n")
    elif command == 'stats':
        emit(format_stats(backend.stats()))
    elif command == 'affil-list':
        payload = backend.affil_list(args.pattern)
        emit(f"{a['record_count']}\t{a['spelling']}" for a in payload["affiliations"])
        emit([format_coverage(payload["coverage"])])
    elif command == 'affil-search':
        payload = backend.affil_search(args.spelling)
        emit(payload["bibcodes"])
        emit([format_coverage(payload["coverage"])])
    elif command == 'lib-show':
        emit(format_library(backend.lib_show(args.token)["library"]))
    elif command == 'group-report':
        report = backend.group_report(args.name)["report"]
        emit(format_stats({"stats": report}))
    elif command == 'ingest':
        with open(args.path, 'rb') as f:
            payload = backend.ingest(f.read().splitlines())
        emit(f"rejected\tline {r['line']}\t{r['reason']}\t{r['detail']}" for r in payload["rejections"])
        emit([f"accepted {payload['accepted']}, rejected {payload['rejected']}"])
    elif command == 'classify':
        with open(args.path, 'r', encoding='utf-8') as f:
            try:
                document = json.load(f)
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"{args.path}: {e}")
        result = backend.classify(document)["result"]
        if result["gated"]:
            emit(["gated\tabstract shorter than min_words"])
        else:
            emit(f"{db}\t{score:.6f}" for db, score in sorted(result["scores"].items()))
            emit([f"assigned\t{result['assigned']}"])
    elif command == 'reclass-report':
        payload = backend.reclass_report(args.db)
        emit(f"{s['bibcode']}\t{','.join(s['current'])}\t{s['suggested']}\t{s['margin']:.6f}"
             for s in payload["suggestions"])
    elif command == 'digest':
        documents = backend.digest(parse_now(args.now))["documents"]
        emit(f"{d['file']}\t{len(d['bibcodes'])}" for d in documents)
        emit([f"{len(documents)} digests"])
    elif command == 'lib-create':
        emit([backend.lib_create(args.name, args.owner)["library"]["token"]])
    elif command == 'lib-add':
        payload = backend.lib_add(args.token, args.bibcodes)
        emit(f"error\t{e['bibcode']}\t{e['reason']}" for e in payload["errors"])
        emit([f"{payload['library']['token']}\t{len(payload['library']['bibcodes'])} records"])
    elif command == 'referee-set' or command == 'referee-show':
        payload = (backend.referee_set(args.journal, args.status) if command == 'referee-set'
                   else backend.referee_show(args.journal))
        emit([f"{payload['journal']}\t{payload['refereed']}"])
        emit("\t".join(row) for row in payload["audit"])


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    if args.help_usage:
        print_usage()
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2

    try:
        run_command(args, out)
    except AdsLiteError as e:
        print(f"error: {e.reason}: {e.detail}", file=sys.stderr)
        return 1
    except RemoteError as e:
        print(f"error: {e.reason}: {e.detail}", file=sys.stderr)
        return 1
    except (requests.RequestException, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
