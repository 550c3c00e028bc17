"""Central versioned repository of work items and links.

State is an instance graph conforming to one immutable MetaModel. Every
mutation travels as a ChangeSet applied atomically: either all ops commit as
one new revision or nothing changes. Commits are serialized (single-writer),
revision numbers are gapless from 1, and the append-only record log replays
deterministically to any historical state, which is what get_item/query time
travel and client replicas rely on.

Conflict policy is item-atomic last-writer-wins: a stale base revision never
rejects a commit, the later-committed value simply becomes head while every
earlier value stays retrievable through history(). Ordering authority is the
revision number, never the clock.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Union

from . import logfile
from .errors import (
    ConformanceRejected,
    CorruptLog,
    DanglingDelete,
    InvalidChangeSet,
    MetamodelSchemaError,
    NotFound,
    PermissionDenied,
    RevisionOutOfRange,
    UnknownItem,
)
from .metamodel import (
    MetaModel,
    check_cardinality,
    check_conformance,
    check_item,
    check_link,
)
from .schema import parse_metamodel, serialize_metamodel

READ = "read"
WRITE = "write"

_ID_PATTERN = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)-([0-9]+)$")

EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"


def parse_item_id(item_id: str) -> tuple[str, int]:
    match = _ID_PATTERN.match(item_id)
    if not match:
        raise InvalidChangeSet(f"malformed item id {item_id!r} (expected PREFIX-NUMBER)")
    return match.group(1), int(match.group(2))


def id_sort_key(item_id: str) -> tuple[str, int]:
    match = _ID_PATTERN.match(item_id)
    if match:
        return (match.group(1), int(match.group(2)))
    return (item_id, -1)


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class WorkItem:
    id: str
    type: str
    attributes: dict
    created_rev: int
    modified_rev: int


@dataclass(frozen=True)
class Link:
    relation: str
    source: str
    target: str

    def key(self) -> tuple[str, str, str]:
        return (self.relation, self.source, self.target)


@dataclass(frozen=True)
class CreateItem:
    type: str
    attrs: dict = field(default_factory=dict)
    id: str | None = None       # requested id; allocated from the default prefix when None


@dataclass(frozen=True)
class UpdateItem:
    id: str
    attrs: dict = field(default_factory=dict)   # whole-attribute deltas; None clears


@dataclass(frozen=True)
class DeleteItem:
    id: str
    cascade: bool = False       # remove incident links in the same revision


@dataclass(frozen=True)
class AddLink:
    relation: str
    source: str
    target: str


@dataclass(frozen=True)
class RemoveLink:
    relation: str
    source: str
    target: str


ChangeOp = Union[CreateItem, UpdateItem, DeleteItem, AddLink, RemoveLink]


@dataclass(frozen=True)
class ChangeSet:
    ops: tuple[ChangeOp, ...]
    author: str | None = None       # defaults to the applying principal
    timestamp: str | None = None    # defaults to commit time

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))


@dataclass(frozen=True)
class Revision:
    number: int
    changeset: ChangeSet     # normalized: concrete ids, cascades expanded
    parent: int


@dataclass(frozen=True)
class ItemWithLinks:
    item: WorkItem
    outgoing: tuple[Link, ...]
    incoming: tuple[Link, ...]


@dataclass(frozen=True)
class ChangeEvent:
    revision: int
    author: str
    item_ids: tuple[str, ...]
    relations: tuple[str, ...]
    emitted_at: str


@dataclass(frozen=True)
class AccessRule:
    principal: str               # principal name or "*"
    scope: str                   # entity-type name or "*"
    rights: frozenset = frozenset()

    def __post_init__(self):
        rights = frozenset(self.rights)
        if WRITE in rights:
            rights = rights | {READ}   # write implies read
        object.__setattr__(self, "rights", rights)


class AccessControl:
    """Deny-by-default rule table. A right exists only if some rule grants it."""

    def __init__(self, rules: Iterable[AccessRule] = ()):
        self.rules = list(rules)

    @classmethod
    def allow_all(cls) -> "AccessControl":
        return cls([AccessRule("*", "*", frozenset({READ, WRITE}))])

    def can(self, principal: str, right: str, type_name: str) -> bool:
        for rule in self.rules:
            if rule.principal not in ("*", principal):
                continue
            if rule.scope not in ("*", type_name):
                continue
            if right in rule.rights:
                return True
        return False


# --- record encoding ----------------------------------------------------

def op_to_record(op: ChangeOp) -> dict:
    if isinstance(op, CreateItem):
        return {"op": "create", "id": op.id, "type": op.type, "attrs": op.attrs}
    if isinstance(op, UpdateItem):
        return {"op": "update", "id": op.id, "attrs": op.attrs}
    if isinstance(op, DeleteItem):
        return {"op": "delete", "id": op.id}
    if isinstance(op, AddLink):
        return {"op": "link", "relation": op.relation, "source": op.source, "target": op.target}
    if isinstance(op, RemoveLink):
        return {"op": "unlink", "relation": op.relation, "source": op.source, "target": op.target}
    raise InvalidChangeSet(f"unknown op {op!r}")


def record_to_op(entry: dict) -> ChangeOp:
    kind = entry.get("op")
    if kind == "create":
        return CreateItem(entry["type"], dict(entry.get("attrs", {})), entry.get("id"))
    if kind == "update":
        return UpdateItem(entry["id"], dict(entry.get("attrs", {})))
    if kind == "delete":
        return DeleteItem(entry["id"], cascade=bool(entry.get("cascade", False)))
    if kind == "link":
        return AddLink(entry["relation"], entry["source"], entry["target"])
    if kind == "unlink":
        return RemoveLink(entry["relation"], entry["source"], entry["target"])
    raise InvalidChangeSet(f"unknown op record {entry!r}")


def changeset_from_record(record: dict) -> ChangeSet:
    return ChangeSet(
        ops=tuple(record_to_op(entry) for entry in record["ops"]),
        author=record["author"],
        timestamp=record["timestamp"],
    )


def fold_record(items: dict, links: set, record: dict) -> None:
    """The documented replay semantics; mutates items/links in place.

    create: id -> (type, attrs) with created_rev = modified_rev = rev
    update: apply whole-attribute deltas, null deleting; modified_rev = rev
    delete: drop the item (incident unlinks precede it in normalized records)
    link/unlink: set add / set discard of the (relation, source, target) triple
    """
    rev = record["rev"]
    for entry in record["ops"]:
        kind = entry["op"]
        if kind == "create":
            items[entry["id"]] = WorkItem(entry["id"], entry["type"], dict(entry["attrs"]), rev, rev)
        elif kind == "update":
            old = items[entry["id"]]
            attrs = dict(old.attributes)
            for key, value in entry["attrs"].items():
                if value is None:
                    attrs.pop(key, None)
                else:
                    attrs[key] = value
            items[entry["id"]] = WorkItem(old.id, old.type, attrs, old.created_rev, rev)
        elif kind == "delete":
            items.pop(entry["id"], None)
        elif kind == "link":
            links.add((entry["relation"], entry["source"], entry["target"]))
        elif kind == "unlink":
            links.discard((entry["relation"], entry["source"], entry["target"]))
        else:
            raise CorruptLog(f"unknown op {kind!r} in record {rev}", rev - 1)


def state_hash_of(items: dict, links: set) -> str:
    canonical = {
        "items": {
            item.id: [item.type, dict(sorted(item.attributes.items())), item.created_rev, item.modified_rev]
            for item in sorted(items.values(), key=lambda it: id_sort_key(it.id))
        },
        "links": sorted(links),
    }
    return hashlib.sha256(logfile.dumps_canonical(canonical).encode("utf-8")).hexdigest()


class StateView:
    """Read-only view of the instance graph at one revision."""

    def __init__(self, meta: MetaModel, items: dict, links: set, revision: int):
        self.meta = meta
        self.items = items
        self.links = links
        self.revision = revision

    def item(self, item_id: str) -> WorkItem | None:
        return self.items.get(item_id)

    def items_of_type(self, type_name: str) -> list[WorkItem]:
        selected = [it for it in self.items.values() if it.type == type_name]
        return sorted(selected, key=lambda it: id_sort_key(it.id))

    def items_of_category(self, category: str) -> list[WorkItem]:
        members = self.meta.category_members(category)
        selected = [it for it in self.items.values() if it.type in members]
        return sorted(selected, key=lambda it: id_sort_key(it.id))

    def out(self, relation: str, source: str) -> list[str]:
        targets = [t for (r, s, t) in self.links if r == relation and s == source]
        return sorted(targets, key=id_sort_key)

    def incoming(self, relation: str, target: str) -> list[str]:
        sources = [s for (r, s, t) in self.links if r == relation and t == target]
        return sorted(sources, key=id_sort_key)

    def incident(self, item_id: str) -> list[tuple[str, str, str]]:
        return sorted(key for key in self.links if key[1] == item_id or key[2] == item_id)

    def state_hash(self) -> str:
        return state_hash_of(self.items, self.links)


class Repository:
    """The versioned store. Thread-safe under a single-writer commit lock."""

    def __init__(self, meta: MetaModel, data_dir: str | Path | None = None, *,
                 snapshot_interval: int = 100, default_prefix: str = "ITEM",
                 deep_verify: bool = False, fsync: bool = True,
                 access: AccessControl | None = None,
                 now_fn: Callable[[], str] = utc_now_iso):
        problems = meta.validate()
        if problems:
            raise MetamodelSchemaError(problems)
        self.meta = meta
        self.snapshot_interval = max(1, snapshot_interval)
        self.default_prefix = default_prefix
        self.deep_verify = deep_verify
        self.fsync = fsync
        self.access = access
        self.now_fn = now_fn

        self._lock = threading.RLock()
        self._items: dict[str, WorkItem] = {}
        self._links: set[tuple[str, str, str]] = set()
        self._records: list[dict] = []
        self._id_counters: dict[str, int] = {}
        self._listeners: list[Callable[[ChangeEvent], None]] = []
        self._mem_snapshots: dict[int, tuple[dict, set]] = {}

        self._data_dir = Path(data_dir) if data_dir is not None else None
        self._log_handle = None
        if self._data_dir is not None:
            self._open_data_dir()

    # --- persistence ----------------------------------------------------

    @property
    def data_dir(self) -> Path | None:
        return self._data_dir

    @classmethod
    def initialize(cls, meta_or_text: MetaModel | str, data_dir: str | Path, **config) -> "Repository":
        """Create a fresh repository directory bound to the given meta model."""
        meta = parse_metamodel(meta_or_text) if isinstance(meta_or_text, str) else meta_or_text
        directory = Path(data_dir)
        if (directory / "metamodel.smm").exists():
            raise FileExistsError(f"repository already initialized at {directory}")
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "metamodel.smm").write_text(serialize_metamodel(meta), encoding="utf-8")
        return cls(meta, directory, **config)

    @classmethod
    def open(cls, data_dir: str | Path, **config) -> "Repository":
        directory = Path(data_dir)
        meta_path = directory / "metamodel.smm"
        if not meta_path.exists():
            raise FileNotFoundError(f"no repository at {directory} (missing metamodel.smm)")
        meta = parse_metamodel(meta_path.read_text(encoding="utf-8"))
        return cls(meta, directory, **config)

    def _open_data_dir(self) -> None:
        directory = self._data_dir
        directory.mkdir(parents=True, exist_ok=True)
        meta_path = directory / "metamodel.smm"
        if not meta_path.exists():
            meta_path.write_text(serialize_metamodel(self.meta), encoding="utf-8")
        log_path = directory / "changes.log"
        records, good_bytes = logfile.read_log(log_path)
        if log_path.exists() and good_bytes < log_path.stat().st_size:
            # torn final append from a crash; drop it before appending again
            with open(log_path, "r+b") as handle:
                handle.truncate(good_bytes)
        for record in records:
            self._load_record(record)
        self._log_handle = open(log_path, "ab")

    def _load_record(self, record: dict) -> None:
        expected = len(self._records) + 1
        if record.get("rev") != expected:
            raise CorruptLog(f"revision {record.get('rev')} where {expected} expected", expected - 1)
        fold_record(self._items, self._links, record)
        self._records.append(record)
        self._bump_counters(record)
        self._maybe_mem_snapshot(expected)

    def _bump_counters(self, record: dict) -> None:
        for entry in record["ops"]:
            if entry["op"] == "create":
                match = _ID_PATTERN.match(entry["id"])
                if match:
                    prefix, number = match.group(1), int(match.group(2))
                    if number > self._id_counters.get(prefix, 0):
                        self._id_counters[prefix] = number

    def _maybe_mem_snapshot(self, rev: int) -> None:
        if rev % self.snapshot_interval == 0:
            self._mem_snapshots[rev] = (dict(self._items), set(self._links))

    def close(self) -> None:
        with self._lock:
            if self._log_handle is not None:
                self._log_handle.flush()
                self._log_handle.close()
                self._log_handle = None

    # --- core accessors --------------------------------------------------

    @property
    def head(self) -> int:
        with self._lock:
            return len(self._records)

    def record(self, rev: int) -> dict:
        with self._lock:
            if rev < 1 or rev > len(self._records):
                raise RevisionOutOfRange(f"revision {rev} not in 1..{len(self._records)}")
            return self._records[rev - 1]

    def records_since(self, since: int) -> list[dict]:
        with self._lock:
            if since < 0 or since > len(self._records):
                raise RevisionOutOfRange(f"revision {since} not in 0..{len(self._records)}")
            return list(self._records[since:])

    def revision(self, rev: int) -> Revision:
        record = self.record(rev)
        return Revision(number=rev, changeset=changeset_from_record(record), parent=rev - 1)

    def _resolve_rev(self, at: int | None) -> int:
        head = len(self._records)
        if at is None:
            return head
        if at < 0 or at > head:
            raise RevisionOutOfRange(f"revision {at} not in 0..{head}")
        return at

    def state_at(self, at: int | None = None) -> StateView:
        """Immutable state view at a revision (None = head)."""
        with self._lock:
            rev = self._resolve_rev(at)
            if rev == len(self._records):
                return StateView(self.meta, dict(self._items), set(self._links), rev)
            base = 0
            items: dict[str, WorkItem] = {}
            links: set[tuple[str, str, str]] = set()
            for snap_rev in sorted(self._mem_snapshots):
                if snap_rev <= rev:
                    base = snap_rev
            if base:
                snap_items, snap_links = self._mem_snapshots[base]
                items, links = dict(snap_items), set(snap_links)
            for record in self._records[base:rev]:
                fold_record(items, links, record)
            return StateView(self.meta, items, links, rev)

    def state_hash(self, at: int | None = None) -> str:
        return self.state_at(at).state_hash()

    # --- permissions ------------------------------------------------------

    def _can(self, principal: str | None, right: str, type_name: str) -> bool:
        if principal is None or self.access is None:
            return True   # trusted embedder; the service always names a principal
        return self.access.can(principal, right, type_name)

    def _require(self, principal: str | None, right: str, type_name: str) -> None:
        if not self._can(principal, right, type_name):
            raise PermissionDenied(
                f"{principal} lacks {right} on {type_name}", subject=type_name
            )

    # --- reads ------------------------------------------------------------

    def get_item(self, item_id: str, at: int | None = None,
                 principal: str | None = None) -> ItemWithLinks:
        view = self.state_at(at)
        item = view.item(item_id)
        if item is None:
            raise NotFound(f"{item_id} does not exist at revision {view.revision}", subject=item_id)
        self._require(principal, READ, item.type)

        def other_readable(key: tuple) -> bool:
            # A link names its far endpoint; hide it if that item is unreadable.
            other = key[2] if key[1] == item_id else key[1]
            found = view.item(other)
            return found is not None and self._can(principal, READ, found.type)

        outgoing = tuple(Link(*key) for key in view.incident(item_id)
                         if key[1] == item_id and other_readable(key))
        incoming = tuple(Link(*key) for key in view.incident(item_id)
                         if key[2] == item_id and key[1] != item_id and other_readable(key))
        return ItemWithLinks(item, outgoing, incoming)

    def query(self, type_name: str = "*", predicate: dict | None = None,
              at: int | None = None, principal: str | None = None) -> list[WorkItem]:
        view = self.state_at(at)
        predicate = predicate or {}
        selected = []
        for item in view.items.values():
            if type_name != "*" and item.type != type_name:
                continue
            if not self._can(principal, READ, item.type):
                continue
            if all(item.attributes.get(k) == v for k, v in predicate.items()):
                selected.append(item)
        return sorted(selected, key=lambda it: id_sort_key(it.id))

    def history(self, item_id: str, principal: str | None = None) -> list[tuple[int, ChangeOp]]:
        """Every committed op that ever touched the item, in revision order."""
        with self._lock:
            entries: list[tuple[int, ChangeOp]] = []
            types_seen: set[str] = set()
            endpoint_types: dict[str, set[str]] = {}
            for record in self._records:
                for entry in record["ops"]:
                    if entry["op"] == "create":
                        endpoint_types.setdefault(entry["id"], set()).add(entry["type"])
                    if entry["op"] in ("create", "update", "delete"):
                        if entry["id"] != item_id:
                            continue
                        if entry["op"] == "create":
                            types_seen.add(entry["type"])
                    elif item_id not in (entry["source"], entry["target"]):
                        continue
                    entries.append((record["rev"], record_to_op(entry)))
        if not entries:
            raise NotFound(f"{item_id} never existed", subject=item_id)
        for type_name in sorted(types_seen):
            self._require(principal, READ, type_name)

        def entry_readable(op: ChangeOp) -> bool:
            # Link entries name their far endpoint; hide those the caller
            # cannot read (an id may have carried several types over time).
            if not isinstance(op, (AddLink, RemoveLink)):
                return True
            other = op.target if op.source == item_id else op.source
            return all(self._can(principal, READ, type_name)
                       for type_name in endpoint_types.get(other, ()))

        return [(rev, op) for rev, op in entries if entry_readable(op)]

    def allocate_id(self, prefix: str | None = None) -> str:
        prefix = prefix or self.default_prefix
        with self._lock:
            number = self._id_counters.get(prefix, 0) + 1
            self._id_counters[prefix] = number
            return f"{prefix}-{number}"

    # --- events -----------------------------------------------------------

    def add_listener(self, listener: Callable[[ChangeEvent], None]) -> None:
        """Listeners run after commit durability, in commit order.

        They execute under the commit lock and must return quickly without
        calling back into the repository.
        """
        with self._lock:
            self._listeners.append(listener)

    def remove_listener(self, listener) -> None:
        with self._lock:
            if listener in self._listeners:
                self._listeners.remove(listener)

    # --- commit -----------------------------------------------------------

    def apply_changeset(self, principal: str | None, base_rev: int | None,
                        changeset: ChangeSet) -> Revision:
        """Apply atomically; returns the new head revision.

        A stale base_rev never rejects the commit: the later commit wins per
        item (LWW), with superseded values preserved in history.
        """
        with self._lock:
            head = len(self._records)
            if base_rev is not None and (base_rev < 0 or base_rev > head):
                raise RevisionOutOfRange(f"base revision {base_rev} not in 0..{head}")
            if not changeset.ops:
                raise InvalidChangeSet("changeset has no ops")

            rev = head + 1
            staged_items = dict(self._items)
            staged_links = set(self._links)
            norm_ops: list[dict] = []
            touched_items: set[str] = set()
            touched_link_keys: set[tuple[str, str, str]] = set()
            touched_types: set[str] = set()
            counters = dict(self._id_counters)

            def touch_type(item_id: str) -> None:
                item = staged_items.get(item_id)
                if item is not None:
                    touched_types.add(item.type)

            for op in changeset.ops:
                if isinstance(op, CreateItem):
                    item_id = op.id
                    if item_id is None:
                        prefix = self.default_prefix
                        counters[prefix] = counters.get(prefix, 0) + 1
                        item_id = f"{prefix}-{counters[prefix]}"
                    else:
                        prefix, number = parse_item_id(item_id)
                        if item_id in staged_items:
                            raise InvalidChangeSet(f"item id {item_id} already exists")
                        if number > counters.get(prefix, 0):
                            counters[prefix] = number
                    staged_items[item_id] = WorkItem(item_id, op.type, dict(op.attrs), rev, rev)
                    touched_items.add(item_id)
                    touched_types.add(op.type)
                    norm_ops.append({"op": "create", "id": item_id, "type": op.type,
                                     "attrs": dict(op.attrs)})
                elif isinstance(op, UpdateItem):
                    old = staged_items.get(op.id)
                    if old is None:
                        raise UnknownItem(f"update of nonexistent {op.id}", subject=op.id)
                    attrs = dict(old.attributes)
                    for key, value in op.attrs.items():
                        if value is None:
                            attrs.pop(key, None)
                        else:
                            attrs[key] = value
                    staged_items[op.id] = WorkItem(old.id, old.type, attrs, old.created_rev, rev)
                    touched_items.add(op.id)
                    touched_types.add(old.type)
                    norm_ops.append({"op": "update", "id": op.id, "attrs": dict(op.attrs)})
                elif isinstance(op, DeleteItem):
                    old = staged_items.get(op.id)
                    if old is None:
                        raise UnknownItem(f"delete of nonexistent {op.id}", subject=op.id)
                    incident = sorted(k for k in staged_links
                                      if k[1] == op.id or k[2] == op.id)
                    if incident and not op.cascade:
                        raise DanglingDelete(
                            f"{op.id} still has {len(incident)} incident link(s); "
                            f"pass cascade to remove them", subject=op.id)
                    for key in incident:
                        staged_links.discard(key)
                        touched_link_keys.add(key)
                        touch_type(key[1])
                        touch_type(key[2])
                        norm_ops.append({"op": "unlink", "relation": key[0],
                                         "source": key[1], "target": key[2]})
                    del staged_items[op.id]
                    touched_items.discard(op.id)
                    touched_types.add(old.type)
                    norm_ops.append({"op": "delete", "id": op.id})
                elif isinstance(op, (AddLink, RemoveLink)):
                    key = (op.relation, op.source, op.target)
                    for endpoint in (op.source, op.target):
                        if endpoint not in staged_items:
                            raise UnknownItem(
                                f"link endpoint {endpoint} does not exist", subject=endpoint)
                        touch_type(endpoint)
                    if isinstance(op, AddLink):
                        staged_links.add(key)
                        verb = "link"
                    else:
                        staged_links.discard(key)   # set semantics; absent is a no-op
                        verb = "unlink"
                    touched_link_keys.add(key)
                    norm_ops.append({"op": verb, "relation": op.relation,
                                     "source": op.source, "target": op.target})
                else:
                    raise InvalidChangeSet(f"unknown op {op!r}")

            for type_name in sorted(touched_types):
                self._require(principal, WRITE, type_name)

            violations = self._gate(staged_items, staged_links, touched_items, touched_link_keys)
            if violations:
                raise ConformanceRejected(violations)
            if self.deep_verify:
                full = check_conformance(
                    self.meta,
                    [(it.id, it.type, it.attributes) for it in staged_items.values()],
                    staged_links,
                )
                if full:
                    raise ConformanceRejected(full)

            record = {
                "rev": rev,
                "author": changeset.author if changeset.author is not None else (principal or "local"),
                "timestamp": changeset.timestamp if changeset.timestamp is not None else self.now_fn(),
                "ops": norm_ops,
            }
            if self._log_handle is not None:
                logfile.append_record(self._log_handle, record, fsync=self.fsync)
            self._items = staged_items
            self._links = staged_links
            self._records.append(record)
            self._id_counters = counters
            self._maybe_mem_snapshot(rev)
            if self._data_dir is not None and rev % self.snapshot_interval == 0:
                logfile.write_snapshot(self._data_dir / "snapshots", rev, self._snapshot_state())

            event = ChangeEvent(
                revision=rev,
                author=record["author"],
                item_ids=touched_ids_of(record),
                relations=touched_relations_of(record),
                emitted_at=self.now_fn(),
            )
            for listener in list(self._listeners):
                listener(event)
            return Revision(number=rev, changeset=changeset_from_record(record), parent=rev - 1)

    def _gate(self, items: dict, links: set, touched_items: set,
              touched_link_keys: set) -> list:
        """Incremental conformance check over everything the changeset touched."""
        item_types = {item_id: item.type for item_id, item in items.items()}
        violations = []
        for item_id in sorted(touched_items):
            item = items[item_id]
            violations.extend(check_item(self.meta, item.id, item.type, item.attributes))
        for key in sorted(touched_link_keys):
            if key in links:
                violations.extend(check_link(self.meta, item_types, *key))
        # Cardinality can shift for touched items and for the surviving source
        # of any added or removed link; recount those items completely.
        checkable = {item_id: item_types[item_id] for item_id in touched_items}
        for key in touched_link_keys:
            if key[1] in item_types:
                checkable[key[1]] = item_types[key[1]]
        if checkable:
            out_counts: dict[tuple[str, str], int] = {}
            for relation, source, _target in links:
                if source in checkable:
                    pair = (relation, source)
                    out_counts[pair] = out_counts.get(pair, 0) + 1
            violations.extend(check_cardinality(self.meta, checkable, out_counts))
        return violations

    def _snapshot_state(self) -> dict:
        return {
            "items": {
                item.id: {"type": item.type, "attrs": dict(sorted(item.attributes.items())),
                          "created_rev": item.created_rev, "modified_rev": item.modified_rev}
                for item in self._items.values()
            },
            "links": sorted(self._links),
            "id_counters": dict(self._id_counters),
            "state_hash": state_hash_of(self._items, self._links),
        }


def touched_ids_of(record: dict) -> tuple[str, ...]:
    ids: set[str] = set()
    for entry in record["ops"]:
        if entry["op"] in ("create", "update", "delete"):
            ids.add(entry["id"])
        else:
            ids.add(entry["source"])
            ids.add(entry["target"])
    return tuple(sorted(ids, key=id_sort_key))


def touched_relations_of(record: dict) -> tuple[str, ...]:
    return tuple(sorted({entry["relation"] for entry in record["ops"]
                         if entry["op"] in ("link", "unlink")}))
