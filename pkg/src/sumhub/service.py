"""HTTP service: the wire API over store, projections, rules, and sync.

Request bodies and responses are JSON. Authentication is a static
token-to-principal table; send "Authorization: Bearer <token>" or, for
event-stream clients that cannot set headers, "?token=<token>". The
authenticated principal is passed to every repository operation, so access
rules apply uniformly no matter which endpoint is used.

The event stream at GET /events?since=N is a server-sent-event stream that
replays one event per committed revision after N, then stays live. Each
subscriber has a bounded queue; a subscriber that falls too far behind is
sent a terminal "dropped" event and must reconnect with the last revision
it saw. Reconnecting with ?since= resumes exactly-once-per-revision
delivery.
"""

from __future__ import annotations

import json
import queue
import re
import threading
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .errors import BindFailure, InvalidChangeSet, PermissionDenied, SumHubError
from .projections import ViewEdit, apply_view_edit, project, to_jsonable
from .rules import RuleConfig, run_rules, traceability_matrix
from .schema import serialize_metamodel
from .store import (
    AccessControl,
    ChangeEvent,
    ChangeSet,
    ItemWithLinks,
    Repository,
    WorkItem,
    record_to_op,
    touched_ids_of,
    touched_relations_of,
)
from .sync import DEFAULT_LOCK_EXPIRY, PushRequest, SyncCoordinator

EVENT_QUEUE_LIMIT = 256
KEEPALIVE_SECONDS = 15.0

_CLOSE = object()     # hub shutdown sentinel

_STATUS_BY_CODE = {
    "PermissionDenied": 403,
    "NotFound": 404,
    "UnknownItem": 404,
    "RevisionOutOfRange": 400,
    "InvalidChangeSet": 400,
    "FormatMismatch": 400,
    "UnsupportedVerbForView": 400,
    "UnresolvedReference": 422,
    "ConformanceRejected": 422,
    "DanglingDelete": 409,
    "LockHeldByOther": 423,
    "UnknownSession": 400,
    "SyntaxError": 400,
    "SchemaError": 400,
    "CorruptLog": 500,
}


class _Subscriber:
    def __init__(self):
        self.queue: queue.Queue = queue.Queue(maxsize=EVENT_QUEUE_LIMIT)
        self.dropped = threading.Event()


class EventHub:
    """Fans committed ChangeEvents out to subscriber queues without blocking."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers: list[_Subscriber] = []

    def attach(self) -> _Subscriber:
        subscriber = _Subscriber()
        with self._lock:
            self._subscribers.append(subscriber)
        return subscriber

    def detach(self, subscriber: _Subscriber) -> None:
        with self._lock:
            if subscriber in self._subscribers:
                self._subscribers.remove(subscriber)

    def publish(self, event: ChangeEvent) -> None:
        # Runs on the committing thread; must never block on a slow reader.
        with self._lock:
            subscribers = list(self._subscribers)
        for subscriber in subscribers:
            try:
                subscriber.queue.put_nowait(event)
            except queue.Full:
                subscriber.dropped.set()

    def close(self) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
            self._subscribers.clear()
        for subscriber in subscribers:
            try:
                subscriber.queue.put_nowait(_CLOSE)
            except queue.Full:
                subscriber.dropped.set()


def event_json(event: ChangeEvent) -> dict:
    return {
        "revision": event.revision,
        "author": event.author,
        "item_ids": list(event.item_ids),
        "relations": list(event.relations),
        "emitted_at": event.emitted_at,
    }


def replay_event(record: dict) -> ChangeEvent:
    """Synthesize the ChangeEvent for an already-committed record."""
    return ChangeEvent(
        revision=record["rev"],
        author=record["author"],
        item_ids=touched_ids_of(record),
        relations=touched_relations_of(record),
        emitted_at=record["timestamp"],
    )


def item_json(item: WorkItem) -> dict:
    return {
        "id": item.id,
        "type": item.type,
        "attributes": dict(sorted(item.attributes.items())),
        "created_rev": item.created_rev,
        "modified_rev": item.modified_rev,
    }


def item_with_links_json(found: ItemWithLinks) -> dict:
    return {
        "item": item_json(found.item),
        "outgoing": [
            {"relation": l.relation, "source": l.source, "target": l.target}
            for l in found.outgoing
        ],
        "incoming": [
            {"relation": l.relation, "source": l.source, "target": l.target}
            for l in found.incoming
        ],
    }


def _as_int(value, default: int, name: str) -> int:
    if value is None:
        return default
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InvalidChangeSet(f"{name} must be an integer")


def changeset_from_wire(payload) -> ChangeSet:
    if not isinstance(payload, dict) or not isinstance(payload.get("ops"), list):
        raise InvalidChangeSet("a changeset is an object with an ops array")
    try:
        ops = tuple(record_to_op(entry) for entry in payload["ops"])
    except (KeyError, TypeError, AttributeError) as error:
        raise InvalidChangeSet(f"malformed op: {error}") from error
    return ChangeSet(ops=ops, author=payload.get("author"),
                     timestamp=payload.get("timestamp"))


@dataclass
class ServiceConfig:
    data_dir: str
    host: str = "127.0.0.1"
    port: int = 8458
    auth_table: dict | None = None       # token -> principal
    snapshot_interval: int = 100
    access: AccessControl | None = None  # None trusts every principal


class SumHubService:
    """Owns the HTTP server, the sync coordinator, and the event hub."""

    def __init__(self, repo: Repository, auth_table: dict, host: str = "127.0.0.1",
                 port: int = 0):
        self.repo = repo
        self.auth_table = dict(auth_table)
        self.coordinator = SyncCoordinator(repo)
        self.hub = EventHub()
        repo.add_listener(self.hub.publish)
        handler = _make_handler(self)
        try:
            self.server = ThreadingHTTPServer((host, port), handler)
        except OSError as error:
            raise BindFailure(f"cannot bind {host}:{port}: {error}") from error
        self.server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "SumHubService":
        # short poll so stop() returns promptly; the blocking serve_forever
        # path keeps the stdlib default
        self._thread = threading.Thread(
            target=lambda: self.server.serve_forever(poll_interval=0.05),
            name="sumhub-service", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.server.serve_forever()

    def stop(self, close_repo: bool = True) -> None:
        self.hub.close()
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        if close_repo:
            self.repo.close()


def _make_handler(service: SumHubService):
    repo = service.repo
    coordinator = service.coordinator

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "sumhub"

        def log_message(self, fmt, *args):     # keep test output quiet
            pass

        # --- plumbing ---------------------------------------------------

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_error_payload(self, error: SumHubError) -> None:
            payload = {"code": error.code, "message": error.message,
                       "subject": error.subject}
            holder = getattr(error, "holder", None)
            if holder is not None:
                payload["holder"] = holder
            violations = getattr(error, "violations", None)
            if violations is not None:
                payload["violations"] = [
                    {"kind": v.kind, "subject": v.subject, "message": v.message}
                    for v in violations
                ]
            self._send_json(_STATUS_BY_CODE.get(error.code, 500), payload)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            try:
                parsed = json.loads(raw.decode("utf-8"))
            except (ValueError, UnicodeDecodeError) as error:
                raise InvalidChangeSet(f"request body is not valid JSON: {error}")
            if not isinstance(parsed, dict):
                raise InvalidChangeSet("request body must be a JSON object")
            return parsed

        def _principal(self, query: dict) -> str:
            header = self.headers.get("Authorization") or ""
            token = None
            if header.startswith("Bearer "):
                token = header[len("Bearer "):].strip()
            elif query.get("token"):
                token = query["token"][0]
            if token is None:
                raise PermissionDenied("missing bearer token")
            principal = service.auth_table.get(token)
            if principal is None:
                raise PermissionDenied("unknown token")
            return principal

        def _rev_param(self, query: dict, name: str = "rev") -> int | None:
            if name not in query:
                return None
            try:
                return int(query[name][0])
            except ValueError:
                raise InvalidChangeSet(f"{name} must be an integer")

        def _dispatch(self, method: str) -> None:
            parts = urlsplit(self.path)
            path = parts.path.rstrip("/") or "/"
            query = parse_qs(parts.query)
            try:
                principal = self._principal(query)
                handler = self._route(method, path)
                if handler is None:
                    self._send_json(404, {"code": "NotFound",
                                          "message": f"no route {method} {path}",
                                          "subject": path})
                    return
                handler(principal, path, query)
            except SumHubError as error:
                unauth = error.code == "PermissionDenied" and \
                    error.message in ("missing bearer token", "unknown token")
                if unauth:
                    self._send_json(401, {"code": error.code, "message": error.message,
                                          "subject": None})
                else:
                    self._send_error_payload(error)
            except (BrokenPipeError, ConnectionResetError):
                pass

        def _route(self, method: str, path: str):
            table = [
                ("GET", r"^/meta$", self._get_meta),
                ("GET", r"^/items$", self._get_items),
                ("GET", r"^/items/[^/]+$", self._get_item),
                ("GET", r"^/changesets$", self._get_changesets),
                ("POST", r"^/changesets$", self._post_changesets),
                ("GET", r"^/projections/[^/]+$", self._get_projection),
                ("POST", r"^/view-edits$", self._post_view_edit),
                ("POST", r"^/locks/[^/]+$", self._post_lock),
                ("DELETE", r"^/locks/[^/]+$", self._delete_lock),
                ("GET", r"^/checks$", self._get_checks),
                ("GET", r"^/trace-matrix$", self._get_trace_matrix),
                ("GET", r"^/events$", self._get_events),
            ]
            for verb, pattern, handler in table:
                if verb == method and re.match(pattern, path):
                    return handler
            return None

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_DELETE(self):
            self._dispatch("DELETE")

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        # --- endpoints ----------------------------------------------------

        def _get_meta(self, principal, path, query):
            self._send_json(200, {
                "name": repo.meta.name,
                "metamodel": serialize_metamodel(repo.meta),
                "head": repo.head,
            })

        def _get_item(self, principal, path, query):
            item_id = path.rsplit("/", 1)[1]
            found = repo.get_item(item_id, at=self._rev_param(query), principal=principal)
            self._send_json(200, item_with_links_json(found))

        def _get_items(self, principal, path, query):
            at = self._rev_param(query)
            type_name = query.get("type", ["*"])[0]
            predicate = {
                key: values[0]
                for key, values in query.items()
                if key not in ("type", "rev", "token") and values
            }
            items = repo.query(type_name, predicate, at=at, principal=principal)
            rev = at if at is not None else repo.head
            self._send_json(200, {"items": [item_json(i) for i in items], "rev": rev})

        def _require_global_read(self, principal):
            # The raw log and the event stream span every type.
            if repo.access is None:
                return
            for type_def in repo.meta.types:
                if not repo.access.can(principal, "read", type_def.name):
                    raise PermissionDenied(
                        f"{principal} lacks read on {type_def.name}",
                        subject=type_def.name)

        def _get_changesets(self, principal, path, query):
            self._require_global_read(principal)
            since = self._rev_param(query, "since") or 0
            records = repo.records_since(since)
            self._send_json(200, {"changesets": records, "head": since + len(records)})

        def _post_changesets(self, principal, path, query):
            body = self._body()
            changesets = body.get("changesets")
            op_ids = body.get("client_op_ids")
            if not isinstance(changesets, list) or not isinstance(op_ids, list):
                raise InvalidChangeSet("push needs changesets and client_op_ids arrays")
            request = PushRequest(
                session_id=str(body.get("session", "")),
                base_rev=_as_int(body.get("base_rev"), repo.head, "base_rev"),
                changesets=tuple(changeset_from_wire(c) for c in changesets),
                client_op_ids=tuple(str(op_id) for op_id in op_ids),
            )
            result = coordinator.push(request, principal)
            self._send_json(200, {
                "accepted": [[op_id, rev] for op_id, rev in result.accepted],
                "rejected": [
                    {"client_op_id": r.client_op_id, "code": r.code,
                     "message": r.message, "subject": r.subject, "holder": r.holder}
                    for r in result.rejected
                ],
                "overridden": [[item_id, rev] for item_id, rev in result.overridden],
                "new_head": result.new_head,
            })

        def _get_projection(self, principal, path, query):
            kind = path.rsplit("/", 1)[1]
            at = self._rev_param(query)
            view = repo.state_at(at)
            self._require_projection_read(principal, view)
            projection = project(view, kind)
            self._send_json(200, {"rev": view.revision, **to_jsonable(projection)})

        def _require_projection_read(self, principal, view):
            # Projections draw from every type; require read on the drawn ones.
            if repo.access is None:
                return
            for type_name in sorted({item.type for item in view.items.values()}):
                if not repo.access.can(principal, "read", type_name):
                    raise PermissionDenied(
                        f"{principal} lacks read on {type_name}", subject=type_name)

        def _post_view_edit(self, principal, path, query):
            body = self._body()
            for key in ("session", "view", "verb"):
                if not body.get(key):
                    raise InvalidChangeSet(f"view edit needs {key!r}")
            base_rev = body.get("base_rev")
            edit = ViewEdit(view=str(body["view"]), verb=str(body["verb"]),
                            payload=dict(body.get("payload") or {}))
            changeset = apply_view_edit(repo, edit, base_rev)
            op_id = str(body.get("client_op_id") or f"view-edit-{uuid.uuid4().hex}")
            request = PushRequest(
                session_id=str(body["session"]),
                base_rev=_as_int(base_rev, repo.head, "base_rev"),
                changesets=(changeset,),
                client_op_ids=(op_id,),
            )
            result = coordinator.push(request, principal)
            if result.rejected:
                rejection = result.rejected[0]
                payload = {"code": rejection.code, "message": rejection.message,
                           "subject": rejection.subject}
                if rejection.holder is not None:
                    payload["holder"] = rejection.holder
                self._send_json(_STATUS_BY_CODE.get(rejection.code, 400), payload)
                return
            self._send_json(200, {
                "revision": result.accepted[0][1],
                "new_head": result.new_head,
                "overridden": [[item_id, rev] for item_id, rev in result.overridden],
            })

        def _post_lock(self, principal, path, query):
            item_id = path.rsplit("/", 1)[1]
            body = self._body()
            session_id = str(body.get("session") or (query.get("session") or [""])[0])
            try:
                expiry = float(body.get("expiry", DEFAULT_LOCK_EXPIRY))
            except (TypeError, ValueError):
                raise InvalidChangeSet("expiry must be a number of seconds")
            lock = coordinator.acquire_lock(session_id, principal, item_id, expiry)
            self._send_json(200, {
                "item": lock.item_id,
                "holder": lock.holder,
                "acquired_rev": lock.acquired_rev,
                "expires_in": max(0.0, lock.expires_at - coordinator.now_fn()),
            })

        def _delete_lock(self, principal, path, query):
            item_id = path.rsplit("/", 1)[1]
            body = self._body()
            session_id = str(body.get("session") or (query.get("session") or [""])[0])
            coordinator.release_lock(session_id, principal, item_id)
            self._send_json(200, {"released": item_id})

        def _get_checks(self, principal, path, query):
            at = self._rev_param(query)
            view = repo.state_at(at)
            self._require_projection_read(principal, view)
            codes = None
            if "rules" in query and query["rules"][0]:
                codes = [code.strip() for code in query["rules"][0].split(",") if code.strip()]
            try:
                findings = run_rules(view, codes, config=RuleConfig())
            except KeyError as error:
                raise InvalidChangeSet(str(error))
            self._send_json(200, {
                "rev": view.revision,
                "findings": [
                    {"rule": f.rule, "subject": f.subject,
                     "message": f.message, "severity": f.severity}
                    for f in findings
                ],
            })

        def _get_trace_matrix(self, principal, path, query):
            at = self._rev_param(query)
            view = repo.state_at(at)
            self._require_projection_read(principal, view)
            matrix = traceability_matrix(view)
            self._send_json(200, {
                "rev": view.revision,
                "rows": list(matrix.rows),
                "columns": list(matrix.columns),
                "matrix": [
                    [1 if matrix.cell(row, column) else 0 for column in matrix.columns]
                    for row in matrix.rows
                ],
            })

        # --- event stream -------------------------------------------------

        def _write_sse(self, event: ChangeEvent) -> None:
            data = json.dumps(event_json(event), sort_keys=True)
            chunk = f"id: {event.revision}\nevent: change\ndata: {data}\n\n"
            self.wfile.write(chunk.encode("utf-8"))
            self.wfile.flush()

        def _get_events(self, principal, path, query):
            self._require_global_read(principal)
            since = self._rev_param(query, "since")
            if since is None:
                since = repo.head
            subscriber = service.hub.attach()
            try:
                records = repo.records_since(since)   # validates the revision
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Connection", "close")
                self.end_headers()
                last_sent = since
                for record in records:
                    self._write_sse(replay_event(record))
                    last_sent = record["rev"]
                while True:
                    if subscriber.dropped.is_set() and subscriber.queue.empty():
                        chunk = ("event: dropped\ndata: "
                                 + json.dumps({"reason": "slow-subscriber",
                                               "resume_from": last_sent})
                                 + "\n\n")
                        self.wfile.write(chunk.encode("utf-8"))
                        self.wfile.flush()
                        return
                    try:
                        event = subscriber.queue.get(timeout=KEEPALIVE_SECONDS)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    if event is _CLOSE:
                        return
                    if event.revision <= last_sent:
                        continue
                    self._write_sse(event)
                    last_sent = event.revision
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                service.hub.detach(subscriber)

    return Handler


def serve(config: ServiceConfig) -> SumHubService:
    """Open the repository and return a ready (not yet started) service."""
    repo = Repository.open(config.data_dir, snapshot_interval=config.snapshot_interval,
                           access=config.access)
    auth = config.auth_table or {}
    return SumHubService(repo, auth, config.host, config.port)
