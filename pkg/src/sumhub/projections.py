"""Projections of the repository and the view edits that map back into it.

Each projection is a pure function of (kind, revision): tables for FMEA and
FHA, a tiered failure tree, the system block diagram, and the safety
argument graph. Nothing here caches state; every call projects from the
committed revision, so views can never drift from the store.

View edits travel the other way. A small verb vocabulary (add-node, rename,
set-attr, add-edge, remove) is translated into an ordinary ChangeSet, which
the caller then commits through the store like any other write.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Union

from .errors import FormatMismatch, NotFound, UnresolvedReference, UnsupportedVerbForView
from .store import (
    AddLink,
    ChangeSet,
    CreateItem,
    DeleteItem,
    RemoveLink,
    Repository,
    StateView,
    UpdateItem,
    id_sort_key,
)

PROJECTION_KINDS = ("fmea-table", "fmea-tree", "system", "gsn", "fha")

FMEA_CSV_HEADER = [
    "Object", "Failure Mode", "Flight Phase", "Mode Failure Rate",
    "Failure Effect", "FHA Effect", "Detection Method",
]
FHA_CSV_HEADER = ["Function", "Failure Mode", "FHA Effect"]

# Cell syntax shared by exports and importers: "INES-2685 - FCS & pilot
# interface 2"; lists of such cells are joined with "; ".
ID_NAME_SEPARATOR = " - "
LIST_SEPARATOR = "; "

_WORD_RE = re.compile(r"[A-Z][a-z0-9]*|[a-z0-9]+")


def display_enum_value(value: str) -> str:
    """Render an enum identifier for humans: TakeOff -> "Take off"."""
    words = _WORD_RE.findall(value)
    if not words:
        return value
    return " ".join([words[0]] + [w.lower() for w in words[1:]])


def match_enum_value(values, text: str) -> str | None:
    """Find the enum identifier whose display form matches the text."""
    wanted = re.sub(r"\s+", "", text).casefold()
    for value in values:
        if re.sub(r"\s+", "", value).casefold() == wanted:
            return value
    return None


@dataclass(frozen=True)
class Ref:
    id: str
    name: str

    def cell(self) -> str:
        return f"{self.id}{ID_NAME_SEPARATOR}{self.name}"


def _ref(view: StateView, item_id: str) -> Ref:
    item = view.item(item_id)
    name = str(item.attributes.get("name", "")) if item is not None else ""
    return Ref(item_id, name)


@dataclass(frozen=True)
class FmeaRow:
    objects: tuple[Ref, ...]
    failure_mode: Ref
    flight_phase: str | None
    mode_failure_rate: float | None
    failure_effect: Ref | None
    fha_effect: Ref | None
    detection_methods: tuple[Ref, ...]


@dataclass(frozen=True)
class FmeaTable:
    kind: str
    rows: tuple[FmeaRow, ...]


@dataclass(frozen=True)
class FhaRow:
    function: Ref
    failure_mode: Ref
    fha_effect: Ref | None


@dataclass(frozen=True)
class FhaTable:
    kind: str
    rows: tuple[FhaRow, ...]


@dataclass(frozen=True)
class TreeNode:
    id: str
    name: str
    tier: int            # 1 system element, 2 failure mode, 3 effect, 4 detection
    role: str            # entity type name
    children: tuple["TreeNode", ...] = ()


@dataclass(frozen=True)
class FmeaTree:
    kind: str
    roots: tuple[TreeNode, ...]


@dataclass(frozen=True)
class PartNode:
    id: str
    name: str
    badges: tuple[Ref, ...]              # failure modes via fails_as
    subparts: tuple["PartNode", ...] = ()


@dataclass(frozen=True)
class SystemDiagram:
    kind: str
    parts: tuple[PartNode, ...]
    connections: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class GsnNode:
    id: str
    name: str
    role: str                            # goal | strategy | evidence
    fmea: tuple[Ref, ...] = ()           # cited safety analyses (evidence only)


@dataclass(frozen=True)
class GsnGraph:
    kind: str
    nodes: tuple[GsnNode, ...]
    edges: tuple[tuple[str, str, str], ...]   # (relation, source, target)


Projection = Union[FmeaTable, FhaTable, FmeaTree, SystemDiagram, GsnGraph]


@dataclass(frozen=True)
class ViewEdit:
    view: str
    verb: str                            # add-node | rename | set-attr | add-edge | remove
    payload: dict = field(default_factory=dict)


# --- projection construction ---------------------------------------------


def project(view: StateView, kind: str) -> Projection:
    if kind == "fmea-table":
        return _project_fmea_table(view)
    if kind == "fmea-tree":
        return _project_fmea_tree(view)
    if kind == "system":
        return _project_system(view)
    if kind == "gsn":
        return _project_gsn(view)
    if kind == "fha":
        return _project_fha(view)
    raise NotFound(f"unknown projection kind {kind!r}", subject=kind)


def _mode_objects(view: StateView, mode_id: str) -> list[str]:
    """Owning objects for the FMEA table: parts if any, other owners else."""
    owners = view.incoming("fails_as", mode_id)
    parts = [o for o in owners if (item := view.item(o)) is not None and item.type == "Part"]
    return parts if parts else owners


def _project_fmea_table(view: StateView) -> FmeaTable:
    rows = []
    for mode in view.items_of_type("FailureMode"):
        objects = tuple(_ref(view, o) for o in _mode_objects(view, mode.id))
        effects = view.out("leads_to", mode.id) or [None]
        methods = tuple(_ref(view, m) for m in view.out("detected_by", mode.id))
        for effect_id in effects:
            fha_ids = view.out("assessed_as", effect_id) if effect_id else []
            rows.append(FmeaRow(
                objects=objects,
                failure_mode=_ref(view, mode.id),
                flight_phase=mode.attributes.get("flight_phase"),
                mode_failure_rate=mode.attributes.get("mode_failure_rate"),
                failure_effect=_ref(view, effect_id) if effect_id else None,
                fha_effect=_ref(view, fha_ids[0]) if fha_ids else None,
                detection_methods=methods,
            ))
    rows.sort(key=lambda r: (
        id_sort_key(r.objects[0].id) if r.objects else ("", -1),
        id_sort_key(r.failure_mode.id),
        id_sort_key(r.failure_effect.id) if r.failure_effect else ("", -1),
    ))
    return FmeaTable("fmea-table", tuple(rows))


def _project_fha(view: StateView) -> FhaTable:
    rows = []
    for function in view.items_of_type("Function"):
        for mode_id in view.out("fails_as", function.id):
            fha_ids = [
                fha_id
                for effect_id in view.out("leads_to", mode_id)
                for fha_id in view.out("assessed_as", effect_id)
            ]
            for fha_id in sorted(set(fha_ids), key=id_sort_key) or [None]:
                rows.append(FhaRow(
                    function=_ref(view, function.id),
                    failure_mode=_ref(view, mode_id),
                    fha_effect=_ref(view, fha_id) if fha_id else None,
                ))
    rows.sort(key=lambda r: (
        id_sort_key(r.function.id),
        id_sort_key(r.failure_mode.id),
        id_sort_key(r.fha_effect.id) if r.fha_effect else ("", -1),
    ))
    return FhaTable("fha", tuple(rows))


def _project_fmea_tree(view: StateView) -> FmeaTree:
    def mode_node(mode_id: str) -> TreeNode:
        children = [
            TreeNode(e, _ref(view, e).name, 3, "FailureEffect")
            for e in view.out("leads_to", mode_id)
        ] + [
            TreeNode(d, _ref(view, d).name, 4, "DetectionMethod")
            for d in view.out("detected_by", mode_id)
        ]
        return TreeNode(mode_id, _ref(view, mode_id).name, 2, "FailureMode", tuple(children))

    roots = []
    for element in view.items_of_category("SystemElement"):
        children = tuple(mode_node(m) for m in view.out("fails_as", element.id))
        roots.append(TreeNode(element.id, _ref(view, element.id).name, 1,
                              element.type, children))
    return FmeaTree("fmea-tree", tuple(roots))


def _project_system(view: StateView) -> SystemDiagram:
    subparts: dict[str, list[str]] = {}
    child_ids: set[str] = set()
    for relation, source, target in sorted(view.links):
        if relation == "subpart":
            subparts.setdefault(source, []).append(target)
            child_ids.add(target)

    def node(part_id: str, seen: frozenset) -> PartNode:
        badges = tuple(_ref(view, m) for m in view.out("fails_as", part_id))
        nested = tuple(
            node(child, seen | {part_id})
            for child in sorted(subparts.get(part_id, []), key=id_sort_key)
            if child not in seen and child != part_id
        )
        return PartNode(part_id, _ref(view, part_id).name, badges, nested)

    parts = view.items_of_type("Part")
    roots = tuple(node(p.id, frozenset()) for p in parts if p.id not in child_ids)
    connections = tuple(sorted(
        (source, target)
        for relation, source, target in view.links
        if relation == "connection"
    ))
    return SystemDiagram("system", roots, connections)


_GSN_ROLES = {"GsnGoal": "goal", "GsnStrategy": "strategy", "GsnEvidence": "evidence"}
_GSN_EDGE_RELATIONS = ("supported_by", "subgoal", "evidenced_by")


def _project_gsn(view: StateView) -> GsnGraph:
    nodes = []
    for type_name, role in _GSN_ROLES.items():
        for item in view.items_of_type(type_name):
            fmea = ()
            if role == "evidence":
                fmea = tuple(_ref(view, a) for a in view.out("cites", item.id))
            nodes.append(GsnNode(item.id, str(item.attributes.get("name", "")), role, fmea))
    nodes.sort(key=lambda n: id_sort_key(n.id))
    edges = tuple(sorted(
        (relation, source, target)
        for relation, source, target in view.links
        if relation in _GSN_EDGE_RELATIONS
    ))
    return GsnGraph("gsn", tuple(nodes), edges)


# --- view edits ------------------------------------------------------------

# Relations each view is allowed to edit directly.
_VIEW_RELATIONS = {
    "system": ("connection", "subpart", "fails_as"),
    "fmea-table": ("fails_as", "leads_to", "assessed_as", "detected_by", "derives"),
    "fmea-tree": ("fails_as", "leads_to", "assessed_as", "detected_by", "derives"),
    "fha": ("fails_as", "leads_to", "assessed_as"),
    "gsn": ("supported_by", "subgoal", "evidenced_by", "cites", "addresses"),
}

# add-node child types per view, keyed by the parent's resolved type.
_CHILD_RULES = {
    "system": {None: ("Part", None), "Part": ("Part", "subpart")},
    "gsn": {
        None: ("GsnGoal", None),
        "GsnGoal": ("GsnStrategy", "supported_by"),
        "GsnStrategy": ("GsnGoal", "subgoal"),
    },
}
_FMEA_MODE_CHILDREN = {
    "FailureEffect": "leads_to",
    "DetectionMethod": "detected_by",
}


def apply_view_edit(repo: Repository, edit: ViewEdit,
                    base_rev: int | None = None, prefix: str | None = None) -> ChangeSet:
    """Translate a view-level edit into a ChangeSet against base_rev.

    The result is not committed here; pass it to apply_changeset (or push it
    through a session) like any other write.
    """
    if edit.view not in PROJECTION_KINDS:
        raise UnsupportedVerbForView(f"unknown view {edit.view!r}", subject=edit.view)
    view = repo.state_at(base_rev)
    payload = edit.payload
    if edit.verb == "add-node":
        return _edit_add_node(repo, view, edit.view, payload, prefix)
    if edit.verb == "rename":
        item = _resolve(view, payload, "id")
        return ChangeSet(ops=(UpdateItem(item.id, {"name": _required(payload, "name")}),))
    if edit.verb == "set-attr":
        item = _resolve(view, payload, "id")
        attrs = _required(payload, "attrs")
        if not isinstance(attrs, dict) or not attrs:
            raise UnresolvedReference("set-attr needs a non-empty attrs object")
        return ChangeSet(ops=(UpdateItem(item.id, dict(attrs)),))
    if edit.verb == "add-edge":
        relation = _required(payload, "relation")
        if relation not in _VIEW_RELATIONS[edit.view]:
            raise UnsupportedVerbForView(
                f"view {edit.view} cannot edit relation {relation}", subject=relation)
        source = _resolve(view, payload, "source").id
        target = _resolve(view, payload, "target").id
        return ChangeSet(ops=(AddLink(relation, source, target),))
    if edit.verb == "remove":
        if "relation" in payload:
            relation = payload["relation"]
            if relation not in _VIEW_RELATIONS[edit.view]:
                raise UnsupportedVerbForView(
                    f"view {edit.view} cannot edit relation {relation}", subject=relation)
            source = _resolve(view, payload, "source").id
            target = _resolve(view, payload, "target").id
            return ChangeSet(ops=(RemoveLink(relation, source, target),))
        item = _resolve(view, payload, "id")
        return ChangeSet(ops=(DeleteItem(item.id, cascade=True),))
    raise UnsupportedVerbForView(f"unknown verb {edit.verb!r}", subject=edit.verb)


def _required(payload: dict, key: str):
    if key not in payload or payload[key] in (None, ""):
        raise UnresolvedReference(f"view edit payload is missing {key!r}")
    return payload[key]


def _resolve(view: StateView, payload: dict, key: str):
    item_id = _required(payload, key)
    item = view.item(item_id)
    if item is None:
        raise UnresolvedReference(f"{item_id} does not exist at revision {view.revision}",
                                  subject=item_id)
    return item


def _edit_add_node(repo: Repository, view: StateView, view_kind: str,
                   payload: dict, prefix: str | None) -> ChangeSet:
    name = _required(payload, "name")
    attrs = {"name": name, **payload.get("attrs", {})}
    parent = None
    if payload.get("under"):
        parent = _resolve(view, payload, "under")

    if view_kind in ("fmea-table", "fmea-tree", "fha"):
        type_name, relation = _fmea_child(view, view_kind, payload, parent)
    else:
        rules = _CHILD_RULES[view_kind]
        parent_type = parent.type if parent is not None else None
        if parent_type not in rules:
            raise UnsupportedVerbForView(
                f"view {view_kind} cannot add a node under a {parent_type}",
                subject=parent_type or view_kind)
        type_name, relation = rules[parent_type]
        requested = payload.get("type")
        if requested:
            type_name, relation = _gsn_requested_child(view_kind, parent_type, requested,
                                                       type_name, relation)

    new_id = payload.get("id") or repo.allocate_id(prefix)
    ops: list = [CreateItem(type_name, attrs, new_id)]
    if parent is not None and relation is not None:
        ops.append(AddLink(relation, parent.id, new_id))
    return ChangeSet(ops=tuple(ops))


def _fmea_child(view: StateView, view_kind: str, payload: dict, parent):
    if parent is None:
        raise UnsupportedVerbForView(
            f"view {view_kind} adds nodes under an existing item", subject=view_kind)
    members = view.meta.category_members("SystemElement")
    if parent.type in members:
        return "FailureMode", "fails_as"
    if parent.type == "FailureMode":
        requested = payload.get("type")
        if requested not in _FMEA_MODE_CHILDREN:
            raise UnsupportedVerbForView(
                "adding under a failure mode needs type FailureEffect or DetectionMethod",
                subject=str(requested))
        return requested, _FMEA_MODE_CHILDREN[requested]
    if parent.type == "FailureEffect" and view_kind in ("fmea-table", "fha"):
        return "FhaEffect", "assessed_as"
    raise UnsupportedVerbForView(
        f"view {view_kind} cannot add a node under a {parent.type}", subject=parent.type)


def _gsn_requested_child(view_kind: str, parent_type, requested: str,
                         default_type: str, default_relation):
    if view_kind != "gsn":
        return default_type, default_relation
    if requested == "GsnEvidence" and parent_type == "GsnGoal":
        return "GsnEvidence", "evidenced_by"
    if requested in ("GsnGoal", "GsnStrategy", "GsnEvidence"):
        if requested == default_type:
            return default_type, default_relation
        raise UnsupportedVerbForView(
            f"a {requested} cannot be added under a {parent_type}", subject=requested)
    raise UnsupportedVerbForView(f"unknown gsn node type {requested}", subject=requested)


# --- export ----------------------------------------------------------------


def export(projection: Projection, fmt: str) -> str:
    """Render a projection for files and pipes; byte-stable per projection."""
    if fmt == "structured-text":
        return json.dumps(to_jsonable(projection), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        if isinstance(projection, FmeaTable):
            return _fmea_table_csv(projection)
        if isinstance(projection, FhaTable):
            return _fha_table_csv(projection)
        raise FormatMismatch(f"csv export is for tables, not {projection.kind}",
                             subject=projection.kind)
    if fmt == "graph-description":
        if isinstance(projection, SystemDiagram):
            return _system_dot(projection)
        if isinstance(projection, GsnGraph):
            return _gsn_dot(projection)
        if isinstance(projection, FmeaTree):
            return _tree_dot(projection)
        raise FormatMismatch(
            f"graph-description export is for diagrams, not {projection.kind}",
            subject=projection.kind)
    raise FormatMismatch(f"unknown export format {fmt!r}", subject=fmt)


def _csv_text(rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, quoting=csv.QUOTE_ALL, lineterminator="\n")
    writer.writerows(rows)
    return buffer.getvalue()


def _rate_cell(rate) -> str:
    if rate is None:
        return ""
    return format(rate, "g")


def _fmea_table_csv(table: FmeaTable) -> str:
    rows = [FMEA_CSV_HEADER]
    for row in table.rows:
        rows.append([
            LIST_SEPARATOR.join(o.cell() for o in row.objects),
            row.failure_mode.cell(),
            display_enum_value(row.flight_phase) if row.flight_phase else "",
            _rate_cell(row.mode_failure_rate),
            row.failure_effect.cell() if row.failure_effect else "",
            row.fha_effect.cell() if row.fha_effect else "",
            LIST_SEPARATOR.join(d.cell() for d in row.detection_methods),
        ])
    return _csv_text(rows)


def _fha_table_csv(table: FhaTable) -> str:
    rows = [FHA_CSV_HEADER]
    for row in table.rows:
        rows.append([
            row.function.cell(),
            row.failure_mode.cell(),
            row.fha_effect.cell() if row.fha_effect else "",
        ])
    return _csv_text(rows)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _system_dot(diagram: SystemDiagram) -> str:
    lines = ["digraph system {"]

    def emit(node: PartNode, depth: int) -> None:
        indent = "  " * (depth + 1)
        badges = LIST_SEPARATOR.join(b.id for b in node.badges)
        lines.append(
            f"{indent}{_dot_quote(node.id)} [label={_dot_quote(node.name)} "
            f"role=\"part\" badges={_dot_quote(badges)}];"
        )
        for child in node.subparts:
            emit(child, depth + 1)
            lines.append(
                f"{indent}{_dot_quote(node.id)} -> {_dot_quote(child.id)} "
                f"[relation=\"subpart\"];"
            )

    for part in diagram.parts:
        emit(part, 0)
    for source, target in diagram.connections:
        lines.append(
            f"  {_dot_quote(source)} -> {_dot_quote(target)} [relation=\"connection\"];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _gsn_dot(graph: GsnGraph) -> str:
    lines = ["digraph gsn {"]
    for node in graph.nodes:
        extra = ""
        if node.role == "evidence":
            extra = f" Fmea={_dot_quote(LIST_SEPARATOR.join(r.id for r in node.fmea))}"
        lines.append(
            f"  {_dot_quote(node.id)} [label={_dot_quote(node.name)} "
            f"role={_dot_quote(node.role)}{extra}];"
        )
    for relation, source, target in graph.edges:
        lines.append(
            f"  {_dot_quote(source)} -> {_dot_quote(target)} "
            f"[relation={_dot_quote(relation)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _tree_dot(tree: FmeaTree) -> str:
    lines = ["digraph fmea_tree {"]

    def emit(node: TreeNode) -> None:
        lines.append(
            f"  {_dot_quote(node.id)} [label={_dot_quote(node.name)} "
            f"tier=\"{node.tier}\" role={_dot_quote(node.role)}];"
        )
        for child in node.children:
            emit(child)
            lines.append(f"  {_dot_quote(node.id)} -> {_dot_quote(child.id)};")

    for root in tree.roots:
        emit(root)
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- structured rendering ----------------------------------------------------


def to_jsonable(projection: Projection) -> dict:
    if isinstance(projection, FmeaTable):
        return {
            "kind": projection.kind,
            "rows": [
                {
                    "objects": [_ref_json(o) for o in row.objects],
                    "failure_mode": _ref_json(row.failure_mode),
                    "flight_phase": row.flight_phase,
                    "mode_failure_rate": row.mode_failure_rate,
                    "failure_effect": _ref_json(row.failure_effect),
                    "fha_effect": _ref_json(row.fha_effect),
                    "detection_methods": [_ref_json(d) for d in row.detection_methods],
                }
                for row in projection.rows
            ],
        }
    if isinstance(projection, FhaTable):
        return {
            "kind": projection.kind,
            "rows": [
                {
                    "function": _ref_json(row.function),
                    "failure_mode": _ref_json(row.failure_mode),
                    "fha_effect": _ref_json(row.fha_effect),
                }
                for row in projection.rows
            ],
        }
    if isinstance(projection, FmeaTree):
        return {"kind": projection.kind,
                "roots": [_tree_json(root) for root in projection.roots]}
    if isinstance(projection, SystemDiagram):
        return {
            "kind": projection.kind,
            "parts": [_part_json(part) for part in projection.parts],
            "connections": [list(edge) for edge in projection.connections],
        }
    if isinstance(projection, GsnGraph):
        return {
            "kind": projection.kind,
            "nodes": [
                {"id": n.id, "name": n.name, "role": n.role,
                 "fmea": [_ref_json(r) for r in n.fmea]}
                for n in projection.nodes
            ],
            "edges": [list(edge) for edge in projection.edges],
        }
    raise FormatMismatch(f"unknown projection {projection!r}")


def _ref_json(ref: Ref | None):
    if ref is None:
        return None
    return {"id": ref.id, "name": ref.name}


def _tree_json(node: TreeNode) -> dict:
    return {
        "id": node.id, "name": node.name, "tier": node.tier, "role": node.role,
        "children": [_tree_json(child) for child in node.children],
    }


def _part_json(node: PartNode) -> dict:
    return {
        "id": node.id, "name": node.name,
        "badges": [_ref_json(b) for b in node.badges],
        "subparts": [_part_json(child) for child in node.subparts],
    }
