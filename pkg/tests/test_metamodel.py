"""Conformance checking against the built-in avionics meta model."""

from hypothesis import given, settings
from hypothesis import strategies as st

from sumhub.metamodel import (
    avionics_fixture_text,
    avionics_metamodel,
    check_conformance,
    value_conforms,
)
from sumhub.schema import parse_metamodel


def test_builtin_contains_paper_relations(meta):
    subpart = meta.relation("subpart")
    assert (subpart.source, subpart.target) == ("Part", "Part")
    detected_by = meta.relation("detected_by")
    assert (detected_by.source, detected_by.target) == ("FailureMode", "DetectionMethod")
    derives = meta.relation("derives")
    assert (derives.source, derives.target) == ("DetectionMethod", "SafetyRequirement")


def test_builtin_equals_parsed_fixture(meta):
    assert meta == parse_metamodel(avionics_fixture_text())


def test_fixture_sum_conforms(demo_repo):
    view = demo_repo.state_at()
    assert check_conformance(demo_repo.meta, view.items.values(), view.links) == []


def test_empty_instance_set_conforms(meta):
    assert check_conformance(meta, [], []) == []


def test_unknown_type_violation(meta):
    violations = check_conformance(
        meta, [("X-1", "Gadget", {"name": "g"})], [])
    assert [v.kind for v in violations] == ["UnknownType"]
    assert violations[0].subject == "X-1"


def test_endpoint_mismatch_violation(meta):
    items = [
        ("R-1", "SafetyRequirement", {"name": "r"}),
        ("E-1", "FailureEffect", {"name": "e"}),
    ]
    violations = check_conformance(meta, items, [("leads_to", "R-1", "E-1")])
    assert [v.kind for v in violations] == ["EndpointMismatch"]
    assert violations[0].subject == "leads_to R-1->E-1"


def test_missing_required_attribute(meta):
    violations = check_conformance(meta, [("P-1", "Part", {})], [])
    assert [v.kind for v in violations] == ["MissingRequiredAttribute"]
    violations = check_conformance(
        meta, [("A-1", "SafetyAnalysis", {"name": "fmea"})], [])
    assert [v.kind for v in violations] == ["MissingRequiredAttribute"]
    assert "kind" in violations[0].message


def test_bad_attribute_kind(meta):
    cases = [
        {"name": 7},
        {"name": "m", "mode_failure_rate": "often"},
        {"name": "m", "mode_failure_rate": True},
        {"name": "m", "flight_phase": "Hover"},
    ]
    for attrs in cases:
        violations = check_conformance(meta, [("F-1", "FailureMode", attrs)], [])
        assert [v.kind for v in violations] == ["BadAttributeKind"], attrs


def test_unknown_attribute(meta):
    violations = check_conformance(
        meta, [("P-1", "Part", {"name": "p", "mass": 3})], [])
    assert [v.kind for v in violations] == ["UnknownAttribute"]


def test_unknown_relation_and_dangling_endpoint(meta):
    items = [("P-1", "Part", {"name": "p"})]
    violations = check_conformance(meta, items, [("powers", "P-1", "P-1")])
    assert [v.kind for v in violations] == ["UnknownRelation"]
    violations = check_conformance(meta, items, [("subpart", "P-1", "P-2")])
    assert [v.kind for v in violations] == ["DanglingEndpoint"]


def test_category_endpoint_accepts_members(meta):
    items = [
        ("P-1", "Part", {"name": "p"}),
        ("FN-1", "Function", {"name": "f"}),
        ("F-1", "FailureMode", {"name": "m"}),
    ]
    links = [("fails_as", "P-1", "F-1"), ("fails_as", "FN-1", "F-1")]
    assert check_conformance(meta, items, links) == []


def test_cardinality_violation():
    meta = parse_metamodel(
        "metamodel m { type A { attr name: text } relation r: A -> A (0..1) }")
    items = [("A-1", "A", {"name": "a"}), ("A-2", "A", {"name": "b"}),
             ("A-3", "A", {"name": "c"})]
    links = [("r", "A-1", "A-2"), ("r", "A-1", "A-3")]
    violations = check_conformance(meta, items, links)
    assert [v.kind for v in violations] == ["CardinalityViolation"]
    assert violations[0].subject == "A-1"


def test_violation_string_format(meta):
    violation = check_conformance(meta, [("X-1", "Gadget", {"name": "g"})], [])[0]
    assert str(violation).startswith("UnknownType[X-1]: ")


def test_value_conforms_bool_is_not_number(meta):
    rate = meta.entity_type("FailureMode").attribute("mode_failure_rate")
    assert value_conforms(meta, rate, 0.5)
    assert value_conforms(meta, rate, 2)
    assert not value_conforms(meta, rate, True)
    name = meta.entity_type("Part").attribute("name")
    assert value_conforms(meta, name, "x")
    assert not value_conforms(meta, name, 3.2)


# --- monotonicity: adding a bad item never erases a violation ---------------

_TYPES = ("Part", "Function", "FailureMode", "Gadget", "Widget")
_ATTRS = st.fixed_dictionaries(
    {},
    optional={
        "name": st.one_of(st.text(max_size=5), st.integers()),
        "flight_phase": st.sampled_from(["Taxi", "Hover", "TakeOff"]),
        "bogus": st.integers(),
    },
)


@st.composite
def instance_sets(draw):
    count = draw(st.integers(min_value=0, max_value=6))
    items = [
        (f"I-{i}", draw(st.sampled_from(_TYPES)), draw(_ATTRS))
        for i in range(count)
    ]
    ids = [item[0] for item in items] or ["I-0"]
    links = draw(st.lists(
        st.tuples(st.sampled_from(["fails_as", "leads_to", "powers"]),
                  st.sampled_from(ids), st.sampled_from(ids)),
        max_size=4, unique=True))
    return items, links


@settings(max_examples=80, deadline=None)
@given(instance_sets(), st.sampled_from(_TYPES), _ATTRS)
def test_adding_item_never_removes_violations(base, extra_type, extra_attrs):
    meta = avionics_metamodel()
    items, links = base
    before = {str(v) for v in check_conformance(meta, items, links)}
    grown = items + [("I-extra", extra_type, extra_attrs)]
    after = {str(v) for v in check_conformance(meta, grown, links)}
    assert before <= after
