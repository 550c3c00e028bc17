"""Projections: table/tree/diagram construction, exports, view edits."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN_DIR
from helpers import make_view, random_sum
from sumhub.errors import (
    FormatMismatch,
    NotFound,
    UnresolvedReference,
    UnsupportedVerbForView,
)
from sumhub.projections import (
    FMEA_CSV_HEADER,
    PROJECTION_KINDS,
    ViewEdit,
    apply_view_edit,
    display_enum_value,
    export,
    match_enum_value,
    project,
)
from sumhub.store import AddLink, ChangeSet, CreateItem, UpdateItem

GOLDENS = {
    "fmea-table": (GOLDEN_DIR / "fig2-fmea-table.csv", "csv"),
    "fha": (GOLDEN_DIR / "demo-fha.csv", "csv"),
    "system": (GOLDEN_DIR / "demo-system.dot", "graph-description"),
    "gsn": (GOLDEN_DIR / "demo-gsn.dot", "graph-description"),
    "fmea-tree": (GOLDEN_DIR / "demo-fmea-tree.dot", "graph-description"),
}


def commit(repo, changeset):
    return repo.apply_changeset(None, repo.head, changeset)


# --- projection shapes ------------------------------------------------------

def test_fmea_table_fixture_shape(demo_repo):
    table = project(demo_repo.state_at(), "fmea-table")
    assert len(table.rows) == 6
    objects = {ref.id for row in table.rows for ref in row.objects}
    assert objects == {"INES-2679", "INES-2682", "INES-2685"}
    takeoff = [row for row in table.rows if row.flight_phase == "TakeOff"]
    assert len(takeoff) == 3
    for row in takeoff:
        assert [m.id for m in row.detection_methods] == ["INES-2402", "INES-2403"]
    taxi = [row for row in table.rows if row.flight_phase == "Taxi"]
    for row in taxi:
        assert row.failure_effect.id == "INES-2656"
        assert row.fha_effect.id == "INES-2405"
        assert row.fha_effect.name == "No impact"


def test_fmea_rows_grouped_by_object_then_mode(demo_repo):
    table = project(demo_repo.state_at(), "fmea-table")
    keys = [(row.objects[0].id if row.objects else "",
             row.failure_mode.id) for row in table.rows]
    assert keys == sorted(keys)


def test_system_fixture_shape(demo_repo):
    diagram = project(demo_repo.state_at(), "system")
    assert len(diagram.parts) == 3
    for part in diagram.parts:
        assert len(part.badges) == 2
    assert diagram.connections == (("INES-2679", "INES-2685"),
                                   ("INES-2682", "INES-2685"))


def test_gsn_empty_at_rev_zero(demo_repo):
    graph = project(demo_repo.state_at(0), "gsn")
    assert graph.nodes == () and graph.edges == ()


def test_gsn_fixture_shape(demo_repo):
    graph = project(demo_repo.state_at(), "gsn")
    roles = {node.id: node.role for node in graph.nodes}
    assert roles == {"INES-2420": "goal", "INES-2421": "strategy",
                     "INES-2422": "goal", "INES-2423": "evidence"}
    evidence = next(n for n in graph.nodes if n.role == "evidence")
    assert [ref.id for ref in evidence.fmea] == ["INES-2424"]


def test_fha_is_function_rooted(demo_repo):
    table = project(demo_repo.state_at(), "fha")
    assert {row.function.id for row in table.rows} == {"INES-2660"}
    assert len(table.rows) == 2


def test_fmea_tree_tiers(demo_repo):
    tree = project(demo_repo.state_at(), "fmea-tree")
    assert all(root.tier == 1 for root in tree.roots)
    part_root = next(r for r in tree.roots if r.id == "INES-2679")
    assert {child.tier for child in part_root.children} == {2}
    mode = part_root.children[0]
    assert {child.tier for child in mode.children} <= {3, 4}


def test_unknown_kind_rejected(demo_repo):
    with pytest.raises(NotFound):
        project(demo_repo.state_at(), "pie-chart")


def test_subpart_nesting(fresh_repo):
    commit(fresh_repo, ChangeSet(ops=(
        CreateItem("Part", {"name": "assembly"}, id="INES-1"),
        CreateItem("Part", {"name": "detail"}, id="INES-2"),
        AddLink("subpart", "INES-1", "INES-2"),
    )))
    diagram = project(fresh_repo.state_at(), "system")
    assert [part.id for part in diagram.parts] == ["INES-1"]
    assert [sub.id for sub in diagram.parts[0].subparts] == ["INES-2"]


# --- enum display mapping ------------------------------------------------------

def test_display_enum_value_splits_camel_case():
    assert display_enum_value("TakeOff") == "Take off"
    assert display_enum_value("Taxi") == "Taxi"


def test_match_enum_value_is_lenient():
    values = ("Taxi", "TakeOff", "Landing")
    assert match_enum_value(values, "Take off") == "TakeOff"
    assert match_enum_value(values, "takeoff") == "TakeOff"
    assert match_enum_value(values, " TAXI ") == "Taxi"
    assert match_enum_value(values, "Hover") is None


# --- exports ----------------------------------------------------------------------

def test_fmea_csv_header_is_fig2_names(demo_repo):
    assert FMEA_CSV_HEADER == ["Object", "Failure Mode", "Flight Phase",
                               "Mode Failure Rate", "Failure Effect",
                               "FHA Effect", "Detection Method"]
    text = export(project(demo_repo.state_at(), "fmea-table"), "csv")
    header = text.splitlines()[0]
    assert header == '"Object","Failure Mode","Flight Phase","Mode Failure Rate",' \
                     '"Failure Effect","FHA Effect","Detection Method"'


def test_empty_table_exports_header_only(fresh_repo):
    text = export(project(fresh_repo.state_at(), "fmea-table"), "csv")
    assert text == '"Object","Failure Mode","Flight Phase","Mode Failure Rate",' \
                   '"Failure Effect","FHA Effect","Detection Method"\n'


@pytest.mark.parametrize("kind", sorted(GOLDENS))
def test_exports_match_goldens(demo_repo, kind):
    path, fmt = GOLDENS[kind]
    golden = open(path, encoding="utf-8").read()
    assert export(project(demo_repo.state_at(), kind), fmt) == golden


def test_export_format_mismatches(demo_repo):
    view = demo_repo.state_at()
    with pytest.raises(FormatMismatch):
        export(project(view, "system"), "csv")
    with pytest.raises(FormatMismatch):
        export(project(view, "fmea-table"), "graph-description")


def test_structured_text_export_is_json(demo_repo):
    for kind in PROJECTION_KINDS:
        payload = json.loads(export(project(demo_repo.state_at(), kind),
                                    "structured-text"))
        assert isinstance(payload, dict)


def test_projection_purity(demo_repo):
    view = demo_repo.state_at()
    for kind, (path, fmt) in GOLDENS.items():
        assert project(view, kind) == project(view, kind)
        assert export(project(view, kind), fmt) == export(project(view, kind), fmt)


# --- view edits --------------------------------------------------------------------

def test_add_failure_mode_under_part(demo_repo):
    edit = ViewEdit(view="fmea-tree", verb="add-node",
                    payload={"under": "INES-2679", "type": "FailureMode",
                             "name": "sensor drift"})
    changeset = apply_view_edit(demo_repo, edit)
    assert len(changeset.ops) == 2
    create, link = changeset.ops
    assert isinstance(create, CreateItem) and create.type == "FailureMode"
    assert isinstance(link, AddLink) and link.relation == "fails_as"
    assert link.source == "INES-2679" and link.target == create.id
    commit(demo_repo, changeset)
    diagram = project(demo_repo.state_at(), "system")
    part = next(p for p in diagram.parts if p.id == "INES-2679")
    assert "sensor drift" in {badge.name for badge in part.badges}


def test_rename_part_is_update_only(demo_repo):
    edit = ViewEdit(view="system", verb="rename",
                    payload={"id": "INES-2679", "name": "FCS interface A"})
    changeset = apply_view_edit(demo_repo, edit)
    assert len(changeset.ops) == 1
    assert isinstance(changeset.ops[0], UpdateItem)
    commit(demo_repo, changeset)
    table = project(demo_repo.state_at(), "fmea-table")
    renamed = [row for row in table.rows
               if row.objects and row.objects[0].id == "INES-2679"]
    assert all(row.objects[0].name == "FCS interface A" for row in renamed)


def test_self_loop_connection_is_valid(demo_repo):
    edit = ViewEdit(view="system", verb="add-edge",
                    payload={"relation": "connection",
                             "source": "INES-2679", "target": "INES-2679"})
    changeset = apply_view_edit(demo_repo, edit)
    assert changeset.ops == (AddLink("connection", "INES-2679", "INES-2679"),)
    commit(demo_repo, changeset)
    diagram = project(demo_repo.state_at(), "system")
    assert ("INES-2679", "INES-2679") in diagram.connections


def test_set_attr_maps_to_update(demo_repo):
    edit = ViewEdit(view="fmea-table", verb="set-attr",
                    payload={"id": "INES-2680", "attrs": {"mode_failure_rate": 1e-6}})
    changeset = apply_view_edit(demo_repo, edit)
    assert changeset.ops == (UpdateItem("INES-2680", {"mode_failure_rate": 1e-6}),)
    commit(demo_repo, changeset)
    table = project(demo_repo.state_at(), "fmea-table")
    row = next(r for r in table.rows if r.failure_mode.id == "INES-2680")
    assert row.mode_failure_rate == 1e-6


def test_unresolved_reference(demo_repo):
    edit = ViewEdit(view="fmea-tree", verb="add-node",
                    payload={"under": "INES-9999", "type": "FailureMode",
                             "name": "x"})
    with pytest.raises(UnresolvedReference):
        apply_view_edit(demo_repo, edit)


def test_unsupported_verb_for_view(demo_repo):
    edit = ViewEdit(view="system", verb="add-edge",
                    payload={"relation": "derives",
                             "source": "INES-2402", "target": "INES-2410"})
    with pytest.raises(UnsupportedVerbForView):
        apply_view_edit(demo_repo, edit)
    with pytest.raises(UnsupportedVerbForView):
        apply_view_edit(demo_repo, ViewEdit(view="system", verb="explode",
                                            payload={"id": "INES-2679"}))


def test_cross_view_coherence_after_edit(demo_repo):
    edit = ViewEdit(view="fmea-tree", verb="add-node",
                    payload={"under": "INES-2682", "type": "FailureMode",
                             "name": "sticky value",
                             "attrs": {"flight_phase": "Cruise"}})
    commit(demo_repo, apply_view_edit(demo_repo, edit))
    from helpers import replay_state
    items, links = replay_state(demo_repo.records_since(0))
    from sumhub.store import StateView
    rebuilt = StateView(demo_repo.meta, items, links, demo_repo.head)
    for kind in PROJECTION_KINDS:
        assert project(demo_repo.state_at(), kind) == project(rebuilt, kind)


def test_add_remove_round_trip_modulo_new_id(demo_repo):
    before = {kind: project(demo_repo.state_at(), kind)
              for kind in PROJECTION_KINDS}
    add = ViewEdit(view="fmea-tree", verb="add-node",
                   payload={"under": "INES-2679", "type": "FailureMode",
                            "name": "transient"})
    changeset = apply_view_edit(demo_repo, add)
    commit(demo_repo, changeset)
    new_id = changeset.ops[0].id
    assert before["system"] != project(demo_repo.state_at(), "system")
    remove = ViewEdit(view="fmea-tree", verb="remove", payload={"id": new_id})
    commit(demo_repo, apply_view_edit(demo_repo, remove))
    after = {kind: project(demo_repo.state_at(), kind)
             for kind in PROJECTION_KINDS}
    assert after == before


# --- row-count law -------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_row_count_law(seed):
    rng = random.Random(seed)
    items, links = random_sum(rng, max_items=40)
    view = make_view(items, links)
    table = project(view, "fmea-table")
    modes = [item_id for item_id, (t, _) in items.items() if t == "FailureMode"]
    expected = sum(
        max(1, len([1 for l in links if l[0] == "leads_to" and l[1] == mode]))
        for mode in modes)
    assert len(table.rows) == expected
