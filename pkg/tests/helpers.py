"""Shared test machinery: replay folding, random edit streams, SSE parsing."""

import json
import random
import time

from sumhub.metamodel import avionics_metamodel
from sumhub.store import (
    AddLink,
    ChangeSet,
    CreateItem,
    DeleteItem,
    RemoveLink,
    StateView,
    UpdateItem,
    WorkItem,
    fold_record,
    state_hash_of,
)

PHASES = ("Taxi", "TakeOff", "Climb", "Cruise", "Descent", "Landing")

RELATION_ENDPOINTS = {
    "subpart": (("Part",), ("Part",)),
    "connection": (("Part",), ("Part",)),
    "fails_as": (("Part", "Function"), ("FailureMode",)),
    "leads_to": (("FailureMode",), ("FailureEffect",)),
    "assessed_as": (("FailureEffect",), ("FhaEffect",)),
    "detected_by": (("FailureMode",), ("DetectionMethod",)),
    "derives": (("DetectionMethod",), ("SafetyRequirement",)),
    "supported_by": (("GsnGoal",), ("GsnStrategy",)),
    "subgoal": (("GsnStrategy",), ("GsnGoal",)),
    "evidenced_by": (("GsnGoal",), ("GsnEvidence",)),
    "cites": (("GsnEvidence",), ("SafetyAnalysis",)),
    "addresses": (("GsnGoal",), ("SafetyRequirement",)),
    "analyzes": (("SafetyAnalysis",), ("Part", "Function")),
}

TYPE_POOL = ("Part", "Function", "FailureMode", "FailureEffect", "FhaEffect",
             "DetectionMethod", "SafetyRequirement", "GsnGoal", "GsnStrategy",
             "GsnEvidence", "SafetyAnalysis")


def make_view(items, links, revision=1) -> StateView:
    """StateView straight from plain data, bypassing the store."""
    work_items = {
        item_id: WorkItem(item_id, type_name, dict(attrs), 1, 1)
        for item_id, (type_name, attrs) in items.items()
    }
    return StateView(avionics_metamodel(), work_items, set(links), revision)


def random_sum(rng: random.Random, max_items: int = 50):
    """A random instance graph over the full safety vocabulary."""
    count = rng.randint(0, max_items)
    items = {}
    for i in range(count):
        type_name = rng.choice(TYPE_POOL)
        name = f"{type_name} {i}"
        if type_name == "FhaEffect" and rng.random() < 0.4:
            name = "No impact"
        attrs = {"name": name}
        if type_name == "SafetyAnalysis":
            attrs["kind"] = "FMEA"
        if type_name == "FailureMode" and rng.random() < 0.5:
            attrs["flight_phase"] = rng.choice(PHASES)
        items[f"X-{i}"] = (type_name, attrs)
    by_type = {}
    for item_id, (type_name, _) in items.items():
        by_type.setdefault(type_name, []).append(item_id)
    links = set()
    for _ in range(rng.randint(0, max(1, count * 2))):
        relation = rng.choice(sorted(RELATION_ENDPOINTS))
        sources, targets = RELATION_ENDPOINTS[relation]
        src_pool = [i for t in sources for i in by_type.get(t, [])]
        tgt_pool = [i for t in targets for i in by_type.get(t, [])]
        if src_pool and tgt_pool:
            links.add((relation, rng.choice(src_pool), rng.choice(tgt_pool)))
    return items, links


def replay_state(records):
    items: dict = {}
    links: set = set()
    for record in records:
        fold_record(items, links, record)
    return items, links


def replay_hash(records) -> str:
    return state_hash_of(*replay_state(records))


class RandomEditor:
    """Generates schema-valid ops against a repository's current state.

    Restricted to a small type/relation palette so generated sets stay valid
    without consulting the conformance checker.
    """

    _CREATE_TYPES = ("Part", "Function", "FailureMode", "FailureEffect",
                     "SafetyRequirement")
    _LINK_CHOICES = (
        ("subpart", ("Part",), ("Part",)),
        ("connection", ("Part",), ("Part",)),
        ("fails_as", ("Part", "Function"), ("FailureMode",)),
        ("leads_to", ("FailureMode",), ("FailureEffect",)),
    )

    def __init__(self, rng: random.Random, prefix: str = "GEN"):
        self.rng = rng
        self.prefix = prefix
        self.serial = 0

    def _of_type(self, view, names):
        return [item for item in view.items.values() if item.type in names]

    def next_ops(self, view, allow_delete: bool = True):
        """One small list of ops valid against the given state view."""
        self.serial += 1
        roll = self.rng.random()
        items = list(view.items.values())
        if roll < 0.35 or not items:
            type_name = self.rng.choice(self._CREATE_TYPES)
            attrs = {"name": f"{type_name} {self.serial}"}
            if type_name == "FailureMode" and self.rng.random() < 0.5:
                attrs["flight_phase"] = self.rng.choice(PHASES)
            return [CreateItem(type_name, attrs,
                               id=f"{self.prefix}-{self.serial}")]
        if roll < 0.65:
            item = self.rng.choice(items)
            which = self.rng.random()
            if which < 0.5:
                attrs = {"name": f"renamed {self.serial}"}
            elif which < 0.8:
                attrs = {"description": f"note {self.serial}"}
            elif item.type == "FailureMode":
                attrs = {"flight_phase": self.rng.choice(PHASES)}
            else:
                attrs = {"description": None}
            return [UpdateItem(item.id, attrs)]
        if roll < 0.85:
            relation, sources, targets = self.rng.choice(self._LINK_CHOICES)
            src = self._of_type(view, sources)
            tgt = self._of_type(view, targets)
            if src and tgt:
                source = self.rng.choice(src).id
                target = self.rng.choice(tgt).id
                key = (relation, source, target)
                if key not in view.links:
                    return [AddLink(relation, source, target)]
            return self.next_ops(view, allow_delete)
        if roll < 0.93 and view.links:
            link = self.rng.choice(sorted(view.links))
            return [RemoveLink(*link)]
        if allow_delete and items:
            item = self.rng.choice(items)
            return [DeleteItem(item.id, cascade=True)]
        return self.next_ops(view, allow_delete)

    def next_changeset(self, view, allow_delete: bool = True) -> ChangeSet:
        return ChangeSet(ops=tuple(self.next_ops(view, allow_delete)))


def invalid_changeset(rng: random.Random, view) -> ChangeSet:
    """One changeset the repository must reject without changing state."""
    items = list(view.items.values())
    choices = ["unknown-type", "missing-name", "bad-kind", "ghost-update",
               "bad-endpoint"]
    if any(view.incident(item.id) for item in items):
        choices.append("dangling-delete")
    kind = rng.choice(choices)
    if kind == "unknown-type":
        return ChangeSet(ops=(CreateItem("Gadget", {"name": "g"}),))
    if kind == "missing-name":
        return ChangeSet(ops=(CreateItem("Part", {}),))
    if kind == "bad-kind":
        return ChangeSet(ops=(CreateItem("FailureMode",
                                         {"name": "m", "mode_failure_rate": "x"}),))
    if kind == "ghost-update":
        return ChangeSet(ops=(UpdateItem("NOPE-1", {"name": "n"}),))
    if kind == "dangling-delete":
        linked = [item for item in items if view.incident(item.id)]
        return ChangeSet(ops=(DeleteItem(rng.choice(linked).id),))
    source = rng.choice(items).id if items else "NOPE-1"
    return ChangeSet(ops=(
        CreateItem("SafetyRequirement", {"name": "r"}, id="BAD-REQ"),
        AddLink("leads_to", "BAD-REQ", source),
    ))


def sse_events(response, count, deadline=10.0):
    """Read SSE frames off a live response until `count` named events arrived.

    Comment-only frames (keepalives) are skipped. Reads byte-wise so frames
    are seen as they arrive instead of waiting for end of stream.
    """
    events = []
    buffer = b""
    start = time.monotonic()
    iterator = response.iter_content(chunk_size=1)
    while len(events) < count:
        assert time.monotonic() - start < deadline, \
            f"saw {len(events)} of {count} events: {events}"
        buffer += next(iterator)
        while b"\n\n" in buffer:
            block, buffer = buffer.split(b"\n\n", 1)
            name, event_id, data = None, None, []
            for line in block.decode("utf-8").split("\n"):
                if line.startswith("event:"):
                    name = line[len("event:"):].strip()
                elif line.startswith("id:"):
                    event_id = int(line[len("id:"):].strip())
                elif line.startswith("data:"):
                    data.append(line[len("data:"):].strip())
            if name is not None:
                events.append((name, event_id, json.loads("\n".join(data))))
    return events


def parse_sse(chunks):
    """Fold an iterator of text lines into (event, id, data-dict) frames."""
    frames = []
    event, event_id, data = "message", None, []
    for line in chunks:
        line = line.rstrip("\r\n") if isinstance(line, str) else line
        if line == "":
            if data:
                frames.append((event, event_id, json.loads("\n".join(data))))
            event, event_id, data = "message", None, []
            continue
        if line.startswith(":"):
            continue
        field, _, value = line.partition(":")
        value = value.lstrip(" ")
        if field == "event":
            event = value
        elif field == "id":
            event_id = int(value)
        elif field == "data":
            data.append(value)
    return frames
