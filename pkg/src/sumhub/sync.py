"""Client-server synchronization: pull, push, and advisory locks.

Conflict policy is the store's item-atomic last-writer-wins; this layer adds
what the wire needs around it: sessions bound to principals, idempotency
tokens so at-least-once delivery never double-commits, per-changeset lock
enforcement, and override reporting so clients can tell when their push
superseded someone else's concurrent write.

Locks are leases. They are advisory at the API level but enforced at push
time: while a lease is live, changesets from other principals touching the
locked item are rejected (that changeset alone; the rest of the request
proceeds). Leases expire on a clock that tests can inject and step.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    InvalidChangeSet,
    LockHeldByOther,
    RevisionOutOfRange,
    SumHubError,
    UnknownItem,
    UnknownSession,
)
from .store import (
    AddLink,
    ChangeSet,
    CreateItem,
    DeleteItem,
    RemoveLink,
    Repository,
    UpdateItem,
)

DEFAULT_LOCK_EXPIRY = 600.0     # seconds; the paper's lock sketch has no figure


@dataclass
class ClientSession:
    session_id: str
    principal: str
    last_synced_rev: int = 0
    # client_op_id -> accepted outcome, for idempotent replay of pushes
    accepted_ops: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PushRequest:
    session_id: str
    base_rev: int
    changesets: tuple[ChangeSet, ...]
    client_op_ids: tuple[str, ...]


@dataclass(frozen=True)
class PushRejection:
    client_op_id: str
    code: str
    message: str
    subject: str | None = None
    holder: str | None = None


@dataclass(frozen=True)
class PushResult:
    accepted: tuple[tuple[str, int], ...]       # (client_op_id, revision)
    rejected: tuple[PushRejection, ...]
    overridden: tuple[tuple[str, int], ...]     # (item id, revision it lost to)
    new_head: int


@dataclass
class Lock:
    item_id: str
    holder: str
    acquired_rev: int
    expires_at: float

    def live(self, now: float) -> bool:
        return now < self.expires_at


def touched_item_ids(changeset: ChangeSet) -> set[str]:
    """Item ids a changeset touches; ids to be allocated are not included."""
    ids: set[str] = set()
    for op in changeset.ops:
        if isinstance(op, CreateItem):
            if op.id is not None:
                ids.add(op.id)
        elif isinstance(op, (UpdateItem, DeleteItem)):
            ids.add(op.id)
        elif isinstance(op, (AddLink, RemoveLink)):
            ids.add(op.source)
            ids.add(op.target)
    return ids


class SyncCoordinator:
    """Serializes pushes and lock operations over one repository."""

    def __init__(self, repo: Repository, now_fn: Callable[[], float] = time.monotonic):
        self.repo = repo
        self.now_fn = now_fn
        self._lock = threading.Lock()
        self._sessions: dict[str, ClientSession] = {}
        self._locks: dict[str, Lock] = {}

    # --- sessions --------------------------------------------------------

    def session(self, session_id: str, principal: str) -> ClientSession:
        """Look up or lazily create the session; ids are client-generated.

        A session id stays bound to the principal that first used it; reuse
        by another principal is rejected.
        """
        with self._lock:
            return self._session_locked(session_id, principal)

    def _session_locked(self, session_id: str, principal: str) -> ClientSession:
        if not session_id:
            raise UnknownSession("empty session id")
        existing = self._sessions.get(session_id)
        if existing is None:
            existing = ClientSession(session_id, principal)
            self._sessions[session_id] = existing
        elif existing.principal != principal:
            raise UnknownSession(
                f"session {session_id} belongs to {existing.principal}", subject=session_id)
        return existing

    # --- pull ------------------------------------------------------------

    def pull(self, session_id: str, principal: str, since: int) -> tuple[list[dict], int]:
        """Changesets with revision > since, as wire records, plus new head."""
        session = self.session(session_id, principal)
        records = self.repo.records_since(since)
        head = since + len(records)
        with self._lock:
            if head > session.last_synced_rev:
                session.last_synced_rev = head
        return records, head

    # --- push ------------------------------------------------------------

    def push(self, request: PushRequest, principal: str) -> PushResult:
        if len(request.changesets) != len(request.client_op_ids):
            raise InvalidChangeSet("one client_op_id per changeset is required")
        if len(set(request.client_op_ids)) != len(request.client_op_ids):
            raise InvalidChangeSet("client_op_ids must be unique within a request")

        accepted: list[tuple[str, int]] = []
        rejected: list[PushRejection] = []
        overridden: list[tuple[str, int]] = []

        with self._lock:
            session = self._session_locked(request.session_id, principal)
            if request.base_rev < 0 or request.base_rev > self.repo.head:
                raise RevisionOutOfRange(
                    f"base revision {request.base_rev} not in 0..{self.repo.head}")
            own_revs: set[int] = set()
            for changeset, op_id in zip(request.changesets, request.client_op_ids):
                replay = session.accepted_ops.get(op_id)
                if replay is not None:
                    accepted.append(replay[0])
                    overridden.extend(replay[1])
                    continue
                try:
                    self._check_locks(changeset, principal)
                    contended = self._contended_items(changeset, request.base_rev, own_revs)
                    revision = self.repo.apply_changeset(principal, request.base_rev, changeset)
                except SumHubError as error:
                    rejected.append(PushRejection(
                        client_op_id=op_id,
                        code=error.code,
                        message=error.message,
                        subject=error.subject,
                        holder=getattr(error, "holder", None),
                    ))
                    continue
                own_revs.add(revision.number)
                entry = (op_id, revision.number)
                lost = [(item_id, revision.number) for item_id in contended]
                session.accepted_ops[op_id] = (entry, lost)
                accepted.append(entry)
                overridden.extend(lost)
            new_head = self.repo.head
        return PushResult(tuple(accepted), tuple(rejected), tuple(overridden), new_head)

    def _check_locks(self, changeset: ChangeSet, principal: str) -> None:
        now = self.now_fn()
        for item_id in sorted(touched_item_ids(changeset)):
            lock = self._locks.get(item_id)
            if lock is None:
                continue
            if not lock.live(now):
                del self._locks[item_id]
                continue
            if lock.holder != principal:
                raise LockHeldByOther(
                    f"{item_id} is locked by {lock.holder}", holder=lock.holder,
                    subject=item_id)

    def _contended_items(self, changeset: ChangeSet, base_rev: int,
                         own_revs: set[int]) -> list[str]:
        """Items this changeset writes whose head moved past the client's base.

        Revisions committed earlier in the same request are the client's own
        work, not contention.
        """
        view = self.repo.state_at()
        contended = []
        for op in changeset.ops:
            if isinstance(op, (UpdateItem, DeleteItem)):
                item = view.item(op.id)
                if item is not None and item.modified_rev > base_rev \
                        and item.modified_rev not in own_revs:
                    contended.append(op.id)
        return contended

    # --- locks -----------------------------------------------------------

    def acquire_lock(self, session_id: str, principal: str, item_id: str,
                     expiry: float = DEFAULT_LOCK_EXPIRY) -> Lock:
        with self._lock:
            self._session_locked(session_id, principal)
            if self.repo.state_at().item(item_id) is None:
                raise UnknownItem(f"cannot lock nonexistent {item_id}", subject=item_id)
            now = self.now_fn()
            lock = self._locks.get(item_id)
            if lock is not None and lock.live(now) and lock.holder != principal:
                raise LockHeldByOther(
                    f"{item_id} is locked by {lock.holder}", holder=lock.holder,
                    subject=item_id)
            fresh = Lock(item_id, principal, self.repo.head, now + expiry)
            self._locks[item_id] = fresh
            return fresh

    def release_lock(self, session_id: str, principal: str, item_id: str) -> None:
        """Idempotent for the holder; releasing another's live lock fails."""
        with self._lock:
            self._session_locked(session_id, principal)
            lock = self._locks.get(item_id)
            if lock is None or not lock.live(self.now_fn()):
                self._locks.pop(item_id, None)
                return
            if lock.holder != principal:
                raise LockHeldByOther(
                    f"{item_id} is locked by {lock.holder}", holder=lock.holder,
                    subject=item_id)
            del self._locks[item_id]

    def live_locks(self) -> list[Lock]:
        now = self.now_fn()
        with self._lock:
            return [lock for lock in self._locks.values() if lock.live(now)]
