"""
HTTP facade over the adslite modules.

``AdsService`` owns the loaded state and exposes one payload method per
operation; the WSGI routes and the CLI both call those methods, so a route
and its subcommand cannot drift apart. Every JSON body is rendered with
sorted keys and carries ``"status": "ok"`` or the error triple.
"""

import json
import logging
import re
import threading
from datetime import datetime
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union
from urllib.parse import parse_qs
from wsgiref.simple_server import WSGIRequestHandler, make_server

from prometheus_client import make_wsgi_app
from prometheus_client.exposition import ThreadingWSGIServer

from affiliations import coverage, list_affiliations, search_by_affiliations
from alerts import load_profiles, render_rss, run_digest, save_profiles
from classify import RefereedRegistry, classify, load_params, reclassification_report, train
from corpus import DATABASES, compute_stats, ingest_records, load_corpus, record_from_document
from errors import AdsLiteError, EmptyDatabase, MalformedRecord
from index import build_index, load_synonyms
from libraries import LibraryStore
from metrics import adslite_requests
from query import FieldValue, GroupStore, canonical_query, execute, group_report, parse_query
from settings import ServiceConfig

logger = logging.getLogger(__name__)

JSON_TYPE = "application/json; charset=utf-8"
RSS_TYPE = "application/rss+xml; charset=utf-8"
MAX_BODY = 64 * 1024 * 1024

_STATUS_TEXT = {200: "200 OK", 400: "400 Bad Request", 404: "404 Not Found",
                405: "405 Method Not Allowed", 500: "500 Internal Server Error"}


class NotFound(AdsLiteError):
    status = 404


class MethodNotAllowed(AdsLiteError):
    status = 405


class AdsService:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self._write_lock = threading.Lock()

        self.corpus = load_corpus(config.corpus_path)
        self.synonyms = load_synonyms(config.synonyms_path)
        self.index = build_index(self.corpus, self.synonyms)
        self.groups = GroupStore.load(config.groups_dir)
        self.registry = RefereedRegistry.load(config.refereed_path)
        self.params = load_params(config.params_path)
        self.libraries = LibraryStore(config.libraries_path, seed=config.library_seed)
        self.profiles = load_profiles(config.profiles_path)
        self.models = None
        self._retrain()
        logger.info(f"Service state loaded: {len(self.corpus)} records, {len(self.groups.names())} groups, "
                    f"{len(self.libraries)} libraries, {len(self.profiles)} subscribers")

    def _retrain(self) -> None:
        try:
            self.models = train(self.corpus, self.params)
        except EmptyDatabase as e:
            # classification stays unavailable until every database has members
            logger.warning(f"Classifier not trained: {e}")
            self.models = None

    # Payloads shared by the routes and the CLI

    def search(self, fields: Dict[str, FieldValue]) -> Dict:
        ast = parse_query(fields)
        hits = execute(ast, self.index, self.corpus, self.groups, self.registry)
        return {"status": "ok", "query": canonical_query(ast), "results": [h.to_dict() for h in hits]}

    def rss(self, fields: Dict[str, FieldValue]) -> bytes:
        ast = parse_query(fields)
        hits = execute(ast, self.index, self.corpus, self.groups, self.registry)
        return render_rss(ast, hits, self.config.base_url).to_bytes()

    def stats(self) -> Dict:
        return {"status": "ok", "stats": compute_stats(self.corpus).to_dict()}

    def classify(self, document: Dict) -> Dict:
        record = record_from_document(document)
        if self.models is None:
            raise EmptyDatabase("classifier is not trained")
        result = classify(record, self.models, self.params)
        return {"status": "ok", "bibcode": record.bibcode.render(), "result": result.to_dict()}

    def reclass_report(self, databases: Sequence[str]) -> Dict:
        if self.models is None:
            raise EmptyDatabase("classifier is not trained")
        suggestions = reclassification_report(self.corpus, self.models, self.params, list(databases))
        return {"status": "ok", "source": list(databases), "suggestions": [s.to_dict() for s in suggestions]}

    def affil_list(self, pattern: str) -> Dict:
        entries = list_affiliations(self.corpus, pattern)
        note = coverage(self.corpus, self.config.affiliation_bias_threshold)
        return {"status": "ok", "affiliations": [e.to_dict() for e in entries], "coverage": note.to_dict()}

    def affil_search(self, spellings: Iterable[str]) -> Dict:
        bibcodes, note = search_by_affiliations(self.corpus, spellings, self.config.affiliation_bias_threshold)
        return {"status": "ok", "bibcodes": bibcodes, "coverage": note.to_dict()}

    def lib_create(self, name: str, owner: str) -> Dict:
        return {"status": "ok", "library": self.libraries.create_library(name, owner).to_dict()}

    def lib_add(self, token: str, bibcodes: Iterable[str]) -> Dict:
        library, errors = self.libraries.add_records(token, bibcodes)
        return {
            "status": "ok",
            "library": library.to_dict(),
            "errors": [{"bibcode": e.bibcode, "reason": e.reason, "detail": e.detail} for e in errors],
        }

    def lib_show(self, token: str) -> Dict:
        return {"status": "ok", "library": self.libraries.resolve(token).to_dict()}

    def group_report(self, name: str) -> Dict:
        return {"status": "ok", "report": group_report(name, self.groups, self.corpus, self.registry)}

    def ingest(self, lines: Iterable[Union[str, bytes]]) -> Dict:
        """Append a batch, persist accepted lines, then swap in a rebuilt index."""
        with self._write_lock:
            report = ingest_records(self.corpus, lines)
            if report.accepted_lines:
                with open(self.config.corpus_path, "a", encoding="utf-8") as f:
                    for line in report.accepted_lines:
                        f.write(line + "\n")
                index = build_index(self.corpus, self.synonyms)
                self.index = index
                self._retrain()
        return {
            "status": "ok",
            "accepted": report.accepted,
            "rejected": report.rejected,
            "rejections": [{"line": r.line_number, "reason": r.reason, "detail": r.detail}
                           for r in report.rejections],
        }

    def digest(self, now: datetime) -> Dict:
        with self._write_lock:
            documents = run_digest(self.profiles, self.corpus, self.index, now, groups=self.groups,
                                   registry=self.registry, output_dir=self.config.output_dir,
                                   default_days=self.config.default_digest_days, base_url=self.config.base_url)
            save_profiles(self.config.profiles_path, self.profiles)
        return {
            "status": "ok",
            "documents": [{"file": d.filename, "subscriber": d.subscriber_id, "database": d.database,
                           "bibcodes": [i.bibcode for i in d.items]} for d in documents],
        }

    def referee_set(self, journal: str, status: str) -> Dict:
        self.registry.set_refereed_status(journal, status)
        return self.referee_show(journal)

    def referee_show(self, journal: str) -> Dict:
        return {
            "status": "ok",
            "journal": journal,
            "refereed": self.registry.status(journal),
            "audit": [list(row) for row in self.registry.audit(journal)],
        }

    # WSGI

    def routes(self) -> List[Tuple[str, "re.Pattern", Callable]]:
        return [
            ("GET", re.compile(r"^/search$"), self._get_search),
            ("GET", re.compile(r"^/rss$"), self._get_rss),
            ("GET", re.compile(r"^/stats$"), self._get_stats),
            ("GET", re.compile(r"^/affil/list$"), self._get_affil_list),
            ("GET", re.compile(r"^/affil/search$"), self._get_affil_search),
            ("GET", re.compile(r"^/lib/(?P<token>[^/]+)$"), self._get_lib),
            ("POST", re.compile(r"^/lib$"), self._post_lib),
            ("POST", re.compile(r"^/lib/(?P<token>[^/]+)/add$"), self._post_lib_add),
            ("POST", re.compile(r"^/classify$"), self._post_classify),
            ("POST", re.compile(r"^/ingest$"), self._post_ingest),
            ("GET", re.compile(r"^/groups/(?P<name>[^/]+)/report$"), self._get_group_report),
        ]

    def __call__(self, environ, start_response):
        path = environ.get("PATH_INFO", "") or "/"
        method = environ.get("REQUEST_METHOD", "GET").upper()
        if path == "/metrics":
            return make_wsgi_app()(environ, start_response)

        route_name = "unknown"
        try:
            handler, params, route_name = self._dispatch(method, path)
            status, content_type, body = handler(environ, **params)
        except AdsLiteError as e:
            status, content_type, body = e.status, JSON_TYPE, _dumps(e.to_dict())
            logger.debug(f"{method} {path} -> {e}")
        except Exception as e:
            logger.error(f"Unhandled error on {method} {path}: {e}", exc_info=True)
            status, content_type = 500, JSON_TYPE
            body = _dumps({"status": "error", "reason": "InternalError", "detail": str(e)})

        adslite_requests.labels(route=route_name, status=str(status)).inc()
        start_response(_STATUS_TEXT.get(status, f"{status} Error"),
                       [("Content-Type", content_type), ("Content-Length", str(len(body)))])
        return [body]

    def _dispatch(self, method: str, path: str):
        allowed = False
        for route_method, pattern, handler in self.routes():
            match = pattern.match(path)
            if not match:
                continue
            if route_method == method:
                return handler, match.groupdict(), pattern.pattern
            allowed = True
        if allowed:
            raise MethodNotAllowed(f"{method} not allowed on {path}")
        raise NotFound(path)

    def _get_search(self, environ):
        return 200, JSON_TYPE, _dumps(self.search(_query_fields(environ)))

    def _get_rss(self, environ):
        return 200, RSS_TYPE, self.rss(_query_fields(environ))

    def _get_stats(self, environ):
        return 200, JSON_TYPE, _dumps(self.stats())

    def _get_affil_list(self, environ):
        pattern = _query_fields(environ).get("pattern") or [""]
        return 200, JSON_TYPE, _dumps(self.affil_list(pattern[-1]))

    def _get_affil_search(self, environ):
        return 200, JSON_TYPE, _dumps(self.affil_search(_query_fields(environ).get("spelling") or []))

    def _get_lib(self, environ, token: str):
        return 200, JSON_TYPE, _dumps(self.lib_show(token))

    def _post_lib(self, environ):
        body = _json_body(environ)
        return 200, JSON_TYPE, _dumps(self.lib_create(str(body.get("name") or ""), str(body.get("owner") or "")))

    def _post_lib_add(self, environ, token: str):
        bibcodes = _json_body(environ).get("bibcodes")
        if not isinstance(bibcodes, list):
            raise MalformedRecord("field 'bibcodes' must be a list")
        return 200, JSON_TYPE, _dumps(self.lib_add(token, bibcodes))

    def _post_classify(self, environ):
        return 200, JSON_TYPE, _dumps(self.classify(_json_body(environ)))

    def _post_ingest(self, environ):
        return 200, JSON_TYPE, _dumps(self.ingest(_read_body(environ).splitlines()))

    def _get_group_report(self, environ, name: str):
        return 200, JSON_TYPE, _dumps(self.group_report(name))


def _dumps(payload: Dict) -> bytes:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")


def _query_fields(environ) -> Dict[str, List[str]]:
    return parse_qs(environ.get("QUERY_STRING", ""), keep_blank_values=True)


def _read_body(environ) -> bytes:
    try:
        length = int(environ.get("CONTENT_LENGTH") or 0)
    except ValueError:
        length = 0
    if length > MAX_BODY:
        raise MalformedRecord(f"request body larger than {MAX_BODY} bytes")
    return environ["wsgi.input"].read(length) if length > 0 else b""


def _json_body(environ) -> Dict:
    try:
        body = json.loads(_read_body(environ).decode("utf-8") or "{}")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise MalformedRecord(f"request body is not valid JSON: {e}")
    if not isinstance(body, dict):
        raise MalformedRecord("request body must be a JSON object")
    return body


class _QuietHandler(WSGIRequestHandler):
    def log_message(self, format, *args):
        logger.debug(f"{self.address_string()} - {format % args}")


def create_server(service: AdsService, host: str, port: int):
    return make_server(host, port, service, server_class=ThreadingWSGIServer, handler_class=_QuietHandler)


def serve(config: ServiceConfig, service: Optional[AdsService] = None) -> None:
    service = service or AdsService(config)
    host, port = config.listen_address
    httpd = create_server(service, host, port)
    logger.info(f"adslite listening on http://{host}:{httpd.server_port} "
                f"(databases: {', '.join(DATABASES)})")
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()
