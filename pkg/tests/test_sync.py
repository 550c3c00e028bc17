"""Sync protocol: pull, push idempotency, LWW conflicts, and lease locks."""

import random

import pytest

from helpers import replay_hash
from sumhub.errors import (
    InvalidChangeSet,
    LockHeldByOther,
    RevisionOutOfRange,
    UnknownItem,
    UnknownSession,
)
from sumhub.store import (
    AddLink,
    ChangeSet,
    CreateItem,
    DeleteItem,
    RemoveLink,
    UpdateItem,
)
from sumhub.sync import PushRequest, SyncCoordinator, touched_item_ids


class SteppableClock:
    """Injectable monotonic clock so lease expiry is testable without sleeping."""

    def __init__(self, start: float = 1_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def step(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def coordinator(demo_repo):
    return SyncCoordinator(demo_repo)


def update(item_id, **attrs):
    return ChangeSet(ops=(UpdateItem(item_id, attrs),))


def push_one(coordinator, session, principal, changeset, op_id, base_rev=None):
    base = coordinator.repo.head if base_rev is None else base_rev
    return coordinator.push(
        PushRequest(session, base, (changeset,), (op_id,)), principal)


def history_values(repo, item_id, key):
    return [op.attrs[key] for _, op in repo.history(item_id)
            if isinstance(op, UpdateItem) and key in op.attrs]


# --- pull --------------------------------------------------------------------

def test_pull_at_head_returns_nothing(coordinator):
    head = coordinator.repo.head
    records, new_head = coordinator.pull("s-a", "alice", since=head)
    assert records == []
    assert new_head == head


def test_pull_since_zero_replays_to_server_state(coordinator):
    records, head = coordinator.pull("s-a", "alice", since=0)
    assert head == coordinator.repo.head
    assert len(records) == head
    assert replay_hash(records) == coordinator.repo.state_hash()


def test_repeated_pull_without_commits_is_identical(coordinator):
    first = coordinator.pull("s-a", "alice", since=2)
    second = coordinator.pull("s-a", "alice", since=2)
    assert first == second


def test_pull_tracks_last_synced_rev(coordinator):
    session = coordinator.session("s-a", "alice")
    assert session.last_synced_rev == 0
    coordinator.pull("s-a", "alice", since=0)
    assert session.last_synced_rev == coordinator.repo.head
    # a narrower pull later never moves the cursor backwards
    coordinator.pull("s-a", "alice", since=coordinator.repo.head)
    assert session.last_synced_rev == coordinator.repo.head
    assert session.last_synced_rev <= coordinator.repo.head


def test_pull_beyond_head_is_out_of_range(coordinator):
    with pytest.raises(RevisionOutOfRange):
        coordinator.pull("s-a", "alice", since=coordinator.repo.head + 1)


# --- push: last writer wins ---------------------------------------------------

def test_contended_update_latest_push_wins_earlier_kept_in_history(coordinator):
    repo = coordinator.repo
    base = repo.head
    first = push_one(coordinator, "s-a", "alice",
                     update("INES-2686", description="first text"), "a-1", base)
    assert first.accepted == (("a-1", base + 1),)
    assert first.overridden == ()

    # same base: B did not see A's commit, yet the push lands and wins the head
    second = push_one(coordinator, "s-b", "bob",
                      update("INES-2686", description="second text"), "b-1", base)
    assert second.accepted == (("b-1", base + 2),)
    assert second.overridden == (("INES-2686", base + 2),)

    assert repo.get_item("INES-2686").item.attributes["description"] == "second text"
    assert history_values(repo, "INES-2686", "description") == ["first text", "second text"]


def test_disjoint_updates_report_no_override(coordinator):
    base = coordinator.repo.head
    first = push_one(coordinator, "s-a", "alice",
                     update("INES-2686", description="mode note"), "a-1", base)
    second = push_one(coordinator, "s-b", "bob",
                      update("INES-2402", description="detector note"), "b-1", base)
    assert first.overridden == ()
    assert second.overridden == ()
    assert second.new_head == base + 2


def test_delete_after_concurrent_update_wins_and_keeps_history(coordinator):
    repo = coordinator.repo
    base = repo.head
    push_one(coordinator, "s-b", "bob",
             update("INES-2656", description="still useful"), "b-1", base)
    result = push_one(
        coordinator, "s-a", "alice",
        ChangeSet(ops=(DeleteItem("INES-2656", cascade=True),)), "a-1", base)
    assert result.overridden == (("INES-2656", base + 2),)
    assert repo.state_at().item("INES-2656") is None
    assert "still useful" in history_values(repo, "INES-2656", "description")


def test_own_request_revisions_are_not_contention(coordinator):
    base = coordinator.repo.head
    request = PushRequest("s-a", base,
                          (update("INES-2686", description="one"),
                           update("INES-2686", description="two")),
                          ("a-1", "a-2"))
    result = coordinator.push(request, "alice")
    assert result.accepted == (("a-1", base + 1), ("a-2", base + 2))
    assert result.overridden == ()


def test_randomized_contention_head_is_greatest_revision(coordinator):
    rng = random.Random(2026)
    repo = coordinator.repo
    items = ["INES-2686", "INES-2682", "INES-2685"]
    principals = ["alice", "bob", "carol"]
    latest: dict[str, tuple[int, str]] = {}
    pushed: dict[str, list[str]] = {item: [] for item in items}
    for i in range(40):
        who = rng.choice(principals)
        item = rng.choice(items)
        value = f"text {i}"
        base = rng.randint(0, repo.head)
        result = push_one(coordinator, f"s-{who}", who,
                          update(item, description=value), f"{who}-{i}", base)
        (_, rev), = result.accepted
        latest[item] = max(latest.get(item, (0, "")), (rev, value))
        pushed[item].append(value)
    for item in items:
        rev, value = latest[item]
        assert repo.get_item(item).item.attributes["description"] == value
        seen = history_values(repo, item, "description")
        assert seen == pushed[item]  # nothing lost, in commit order


# --- push: idempotency ---------------------------------------------------------

def test_duplicate_push_returns_identical_result_without_recommit(coordinator):
    request = PushRequest("s-a", coordinator.repo.head,
                          (update("INES-2686", description="once"),), ("a-1",))
    first = coordinator.push(request, "alice")
    head_after = coordinator.repo.head
    second = coordinator.push(request, "alice")
    assert second == first
    assert coordinator.repo.head == head_after
    assert history_values(coordinator.repo, "INES-2686", "description") == ["once"]


def test_replay_keeps_original_revision_after_later_commits(coordinator):
    request = PushRequest("s-a", coordinator.repo.head,
                          (update("INES-2686", description="mine"),), ("a-1",))
    first = coordinator.push(request, "alice")
    push_one(coordinator, "s-b", "bob", update("INES-2402", description="other"), "b-1")
    replayed = coordinator.push(request, "alice")
    assert replayed.accepted == first.accepted
    assert replayed.new_head == coordinator.repo.head  # advanced by bob only


def test_rejected_changeset_is_retried_on_replay(coordinator):
    coordinator.acquire_lock("s-b", "bob", "INES-2686")
    request = PushRequest("s-a", coordinator.repo.head,
                          (update("INES-2686", description="late"),), ("a-1",))
    blocked = coordinator.push(request, "alice")
    assert blocked.accepted == ()
    assert blocked.rejected[0].code == "LockHeldByOther"
    coordinator.release_lock("s-b", "bob", "INES-2686")
    retried = coordinator.push(request, "alice")
    assert retried.accepted == (("a-1", coordinator.repo.head),)
    assert retried.rejected == ()


# --- push: request validation ---------------------------------------------------

def test_op_id_count_must_match_changesets(coordinator):
    with pytest.raises(InvalidChangeSet):
        coordinator.push(PushRequest("s-a", 0, (update("INES-2686", name="x"),), ()),
                         "alice")


def test_op_ids_must_be_unique(coordinator):
    sets = (update("INES-2686", description="x"),
            update("INES-2686", description="y"))
    with pytest.raises(InvalidChangeSet):
        coordinator.push(PushRequest("s-a", 0, sets, ("dup", "dup")), "alice")


def test_base_rev_out_of_range(coordinator):
    head = coordinator.repo.head
    for bad in (-1, head + 1):
        with pytest.raises(RevisionOutOfRange):
            coordinator.push(
                PushRequest("s-a", bad, (update("INES-2686", description="x"),),
                            ("a-1",)), "alice")


def test_conformance_failure_rejects_that_changeset_alone(coordinator):
    base = coordinator.repo.head
    bad = update("INES-2686", mode_failure_rate="not a number")
    good = update("INES-2402", description="fine")
    result = coordinator.push(
        PushRequest("s-a", base, (bad, good), ("a-bad", "a-good")), "alice")
    assert [r.client_op_id for r in result.rejected] == ["a-bad"]
    assert result.rejected[0].code == "ConformanceRejected"
    assert result.accepted == (("a-good", base + 1),)
    assert result.new_head == base + 1
    # accepted and rejected op ids partition the request
    assert {"a-bad", "a-good"} == {op for op, _ in result.accepted} | {
        r.client_op_id for r in result.rejected}


# --- sessions -------------------------------------------------------------------

def test_session_stays_bound_to_first_principal(coordinator):
    coordinator.pull("shared", "alice", since=0)
    with pytest.raises(UnknownSession):
        coordinator.pull("shared", "bob", since=0)
    with pytest.raises(UnknownSession):
        coordinator.push(PushRequest("shared", 0, (), ()), "bob")


def test_empty_session_id_rejected(coordinator):
    with pytest.raises(UnknownSession):
        coordinator.session("", "alice")


# --- locks ----------------------------------------------------------------------

def test_lock_blocks_only_other_principals_touching_changesets(coordinator):
    base = coordinator.repo.head
    lock = coordinator.acquire_lock("s-b", "bob", "INES-2686")
    assert lock.holder == "bob"
    result = coordinator.push(
        PushRequest("s-a", base,
                    (update("INES-2686", description="blocked"),
                     update("INES-2402", description="fine")),
                    ("a-1", "a-2")), "alice")
    rejection, = result.rejected
    assert rejection.client_op_id == "a-1"
    assert rejection.code == "LockHeldByOther"
    assert rejection.holder == "bob"
    assert rejection.subject == "INES-2686"
    assert result.accepted == (("a-2", base + 1),)
    # the holder itself can still write the locked item
    own = push_one(coordinator, "s-b", "bob",
                   update("INES-2686", description="by holder"), "b-1")
    assert own.accepted != ()


def test_lock_guards_link_endpoints(coordinator):
    coordinator.acquire_lock("s-b", "bob", "INES-2685")
    changeset = ChangeSet(ops=(AddLink("connection", "INES-2679", "INES-2685"),))
    result = push_one(coordinator, "s-a", "alice", changeset, "a-1")
    assert result.rejected[0].code == "LockHeldByOther"
    assert result.rejected[0].subject == "INES-2685"


def test_expired_lock_no_longer_blocks(demo_repo):
    clock = SteppableClock()
    coordinator = SyncCoordinator(demo_repo, now_fn=clock)
    coordinator.acquire_lock("s-b", "bob", "INES-2686", expiry=60.0)
    blocked = push_one(coordinator, "s-a", "alice",
                       update("INES-2686", description="early"), "a-1")
    assert blocked.rejected[0].code == "LockHeldByOther"
    clock.step(61.0)
    allowed = push_one(coordinator, "s-a", "alice",
                       update("INES-2686", description="after expiry"), "a-2")
    assert allowed.accepted != ()
    assert coordinator.live_locks() == []


def test_acquire_requires_existing_item(coordinator):
    with pytest.raises(UnknownItem):
        coordinator.acquire_lock("s-a", "alice", "INES-9999")


def test_acquire_conflicts_with_live_lock(coordinator):
    coordinator.acquire_lock("s-b", "bob", "INES-2686")
    with pytest.raises(LockHeldByOther) as err:
        coordinator.acquire_lock("s-a", "alice", "INES-2686")
    assert err.value.holder == "bob"


def test_holder_refresh_keeps_single_live_lock(demo_repo):
    clock = SteppableClock()
    coordinator = SyncCoordinator(demo_repo, now_fn=clock)
    first = coordinator.acquire_lock("s-b", "bob", "INES-2686", expiry=60.0)
    clock.step(30.0)
    refreshed = coordinator.acquire_lock("s-b", "bob", "INES-2686", expiry=60.0)
    assert refreshed.expires_at > first.expires_at
    live = coordinator.live_locks()
    assert [lock.item_id for lock in live] == ["INES-2686"]


def test_expired_lock_can_change_hands(demo_repo):
    clock = SteppableClock()
    coordinator = SyncCoordinator(demo_repo, now_fn=clock)
    coordinator.acquire_lock("s-b", "bob", "INES-2686", expiry=60.0)
    clock.step(61.0)
    taken = coordinator.acquire_lock("s-a", "alice", "INES-2686")
    assert taken.holder == "alice"
    assert [lock.holder for lock in coordinator.live_locks()] == ["alice"]


def test_release_is_idempotent_for_holder_and_guarded_otherwise(demo_repo):
    clock = SteppableClock()
    coordinator = SyncCoordinator(demo_repo, now_fn=clock)
    coordinator.acquire_lock("s-b", "bob", "INES-2686", expiry=60.0)
    with pytest.raises(LockHeldByOther):
        coordinator.release_lock("s-a", "alice", "INES-2686")
    coordinator.release_lock("s-b", "bob", "INES-2686")
    coordinator.release_lock("s-b", "bob", "INES-2686")
    assert coordinator.live_locks() == []
    # releasing someone's expired lock is a harmless cleanup
    coordinator.acquire_lock("s-b", "bob", "INES-2686", expiry=60.0)
    clock.step(61.0)
    coordinator.release_lock("s-a", "alice", "INES-2686")
    assert coordinator.live_locks() == []


# --- replica convergence ----------------------------------------------------------

def test_pull_fold_converges_all_replicas(coordinator):
    base = coordinator.repo.head
    for i, who in enumerate(("alice", "bob", "carol")):
        changeset = ChangeSet(ops=(
            CreateItem("Part", {"name": f"replica part {i}"}, id=f"INES-90{i}"),))
        push_one(coordinator, f"s-{who}", who, changeset, f"{who}-create", base)
    server = coordinator.repo.state_hash()
    for who in ("alice", "bob", "carol"):
        records, head = coordinator.pull(f"s-{who}", who, since=0)
        assert head == coordinator.repo.head
        assert replay_hash(records) == server


# --- touched items -----------------------------------------------------------------

def test_touched_item_ids_covers_every_op_kind():
    changeset = ChangeSet(ops=(
        CreateItem("Part", {"name": "n"}, id="INES-1"),
        CreateItem("Part", {"name": "anon"}),
        UpdateItem("INES-2", {"name": "m"}),
        DeleteItem("INES-3"),
        AddLink("subpart", "INES-4", "INES-5"),
        RemoveLink("subpart", "INES-6", "INES-7"),
    ))
    assert touched_item_ids(changeset) == {
        "INES-1", "INES-2", "INES-3", "INES-4", "INES-5", "INES-6", "INES-7"}
