"""Consistency rules and the traceability matrix.

Rules are data: each one couples a stable code and severity with a pure
check over a committed revision. The registry is extensible and every rule
can be suppressed per run, so a partial data set can still be checked for
the obligations that apply to it.

Severity is two-valued. An error means a trace obligation is broken; a
warning flags gaps that are legitimate mid-analysis (for example a failure
mode whose effect is classified as having no impact).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .store import StateView, id_sort_key

ERROR = "error"
WARNING = "warning"

# Physical wiring is not a trace obligation; every other relation carries trace.
TRACE_EXCLUDED_RELATIONS = frozenset({"connection"})

# FhaEffect names that exempt a failure mode from needing a detection method.
DEFAULT_EXEMPT_FHA_NAMES = frozenset({"No impact"})


@dataclass(frozen=True)
class Finding:
    rule: str
    subject: str
    message: str
    severity: str

    def sort_key(self) -> tuple:
        return (self.rule, id_sort_key(self.subject))


@dataclass(frozen=True)
class Rule:
    code: str
    description: str
    severity: str
    check: Callable[[StateView, "RuleConfig"], list[Finding]] = field(compare=False)

    def finding(self, subject: str, message: str) -> Finding:
        return Finding(self.code, subject, message, self.severity)


@dataclass(frozen=True)
class RuleConfig:
    exempt_fha_names: frozenset = DEFAULT_EXEMPT_FHA_NAMES


_REGISTRY: dict[str, Rule] = {}


def register_rule(rule: Rule) -> Rule:
    if rule.code in _REGISTRY:
        raise ValueError(f"rule code {rule.code} already registered")
    _REGISTRY[rule.code] = rule
    return rule


def registered_rules() -> list[Rule]:
    return [_REGISTRY[code] for code in sorted(_REGISTRY)]


def rule_by_code(code: str) -> Rule:
    if code not in _REGISTRY:
        raise KeyError(f"unknown rule code {code}")
    return _REGISTRY[code]


def _name_of(view: StateView, item_id: str) -> str:
    item = view.item(item_id)
    if item is None:
        return item_id
    return str(item.attributes.get("name", item_id))


def _rule(code: str, description: str, severity: str = ERROR):
    def wrap(fn):
        register_rule(Rule(code, description, severity, fn))
        return fn
    return wrap


@_rule("R-FM-OWNER", "every failure mode belongs to at least one system element")
def _fm_owner(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-FM-OWNER"]
    out = []
    for mode in view.items_of_type("FailureMode"):
        if not view.incoming("fails_as", mode.id):
            out.append(rule.finding(mode.id, "failure mode has no owning system element (fails_as)"))
    return out


@_rule("R-FM-EFFECT", "every failure mode leads to at least one failure effect")
def _fm_effect(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-FM-EFFECT"]
    out = []
    for mode in view.items_of_type("FailureMode"):
        if not view.out("leads_to", mode.id):
            out.append(rule.finding(mode.id, "failure mode has no failure effect (leads_to)"))
    return out


@_rule("R-FM-DETECT",
       "failure modes with a non-exempt FHA classification carry a detection method",
       WARNING)
def _fm_detect(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-FM-DETECT"]
    out = []
    for mode in view.items_of_type("FailureMode"):
        fha_names = {
            _name_of(view, fha_id)
            for effect_id in view.out("leads_to", mode.id)
            for fha_id in view.out("assessed_as", effect_id)
        }
        exempt = bool(fha_names) and fha_names <= config.exempt_fha_names
        if not exempt and not view.out("detected_by", mode.id):
            out.append(rule.finding(mode.id, "failure mode has no detection method (detected_by)"))
    return out


@_rule("R-DET-REQ", "every detection method derives at least one safety requirement")
def _det_req(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-DET-REQ"]
    out = []
    for method in view.items_of_type("DetectionMethod"):
        if not view.out("derives", method.id):
            out.append(rule.finding(method.id, "detection method derives no safety requirement"))
    return out


@_rule("R-GSN-GOAL-REQ", "every goal addresses at least one safety requirement")
def _gsn_goal_req(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-GSN-GOAL-REQ"]
    out = []
    for goal in view.items_of_type("GsnGoal"):
        if not view.out("addresses", goal.id):
            out.append(rule.finding(goal.id, "goal addresses no safety requirement"))
    return out


@_rule("R-GSN-EVIDENCE", "every evidence node cites at least one safety analysis")
def _gsn_evidence(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-GSN-EVIDENCE"]
    out = []
    for evidence in view.items_of_type("GsnEvidence"):
        if not view.out("cites", evidence.id):
            out.append(rule.finding(evidence.id, "evidence cites no safety analysis"))
    return out


@_rule("R-GSN-LEAF", "every leaf goal is backed by evidence")
def _gsn_leaf(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-GSN-LEAF"]
    out = []
    for goal in view.items_of_type("GsnGoal"):
        if view.out("supported_by", goal.id):
            continue
        if not view.out("evidenced_by", goal.id):
            out.append(rule.finding(goal.id, "leaf goal has no evidence (evidenced_by)"))
    return out


@_rule("R-GSN-ACYCLIC", "the goal decomposition graph contains no cycles")
def _gsn_acyclic(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-GSN-ACYCLIC"]
    edges: dict[str, set[str]] = {}
    for relation, source, target in sorted(view.links):
        if relation in ("supported_by", "subgoal"):
            edges.setdefault(source, set()).add(target)
    out = []
    for node in sorted(edges, key=id_sort_key):
        if _reaches(edges, node, node):
            out.append(rule.finding(node, "goal decomposition cycle through this node"))
    return out


@_rule("R-REQ-COVERED",
       "every safety requirement is reachable from a detection method or goal",
       WARNING)
def _req_covered(view: StateView, config: RuleConfig) -> list[Finding]:
    rule = _REGISTRY["R-REQ-COVERED"]
    requirements = view.items_of_type("SafetyRequirement")
    if not requirements:
        return []
    adjacency = trace_adjacency(view)
    covered: set[str] = set()
    for origin in view.items_of_type("DetectionMethod") + view.items_of_type("GsnGoal"):
        covered |= _reachable_from(adjacency, origin.id)
    out = []
    for requirement in requirements:
        if requirement.id not in covered:
            out.append(rule.finding(
                requirement.id,
                "safety requirement is not traceable to any detection method or goal"))
    return out


def _reaches(edges: dict[str, set[str]], start: str, goal: str) -> bool:
    stack = list(edges.get(start, ()))
    seen: set[str] = set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(edges.get(node, ()))
    return False


def _reachable_from(edges: dict[str, set[str]], start: str) -> set[str]:
    seen: set[str] = set()
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in edges.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def trace_adjacency(view: StateView) -> dict[str, set[str]]:
    """Directed adjacency over every trace-bearing relation."""
    edges: dict[str, set[str]] = {}
    for relation, source, target in view.links:
        if relation in TRACE_EXCLUDED_RELATIONS:
            continue
        edges.setdefault(source, set()).add(target)
    return edges


def run_rules(view: StateView, codes: Iterable[str] | None = None,
              suppress: Iterable[str] = (),
              config: RuleConfig = RuleConfig()) -> list[Finding]:
    """Evaluate the selected rules at one revision.

    codes None means every registered rule; suppress removes individual
    codes. Output is sorted by (rule code, subject id).
    """
    if codes is None:
        selected = registered_rules()
    else:
        selected = [rule_by_code(code) for code in codes]
    suppressed = set(suppress)
    findings: list[Finding] = []
    for rule in selected:
        if rule.code in suppressed:
            continue
        findings.extend(rule.check(view, config))
    return sorted(findings, key=Finding.sort_key)


@dataclass(frozen=True)
class TraceabilityMatrix:
    rows: tuple[str, ...]              # SafetyRequirement ids
    columns: tuple[str, ...]           # detection / failure / system / goal ids
    reachable: frozenset               # (requirement id, element id) pairs

    def cell(self, requirement_id: str, element_id: str) -> bool:
        return (requirement_id, element_id) in self.reachable

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, quoting=csv.QUOTE_ALL, lineterminator="\n")
        writer.writerow(["SafetyRequirement", *self.columns])
        for requirement_id in self.rows:
            writer.writerow([
                requirement_id,
                *("1" if self.cell(requirement_id, column) else "0" for column in self.columns),
            ])
        return buffer.getvalue()


def traceability_matrix(view: StateView) -> TraceabilityMatrix:
    """Boolean reachability from each traceable element to each requirement."""
    rows = [item.id for item in view.items_of_type("SafetyRequirement")]
    column_items = (
        view.items_of_type("DetectionMethod")
        + view.items_of_type("FailureMode")
        + view.items_of_category("SystemElement")
        + view.items_of_type("GsnGoal")
    )
    columns = sorted({item.id for item in column_items}, key=id_sort_key)
    adjacency = trace_adjacency(view)
    row_set = set(rows)
    reachable = set()
    for column in columns:
        for reached in _reachable_from(adjacency, column):
            if reached in row_set:
                reachable.add((reached, column))
    return TraceabilityMatrix(tuple(rows), tuple(columns), frozenset(reachable))


def findings_to_text(findings: list[Finding]) -> str:
    """Human-readable finding table, one line per finding."""
    lines = [f"{f.severity:7} {f.rule:15} {f.subject}: {f.message}" for f in findings]
    count = len(findings)
    lines.append(f"{count} finding" + ("" if count == 1 else "s"))
    return "\n".join(lines) + "\n"


def findings_to_json(findings: list[Finding]) -> str:
    payload = [
        {"rule": f.rule, "subject": f.subject, "message": f.message, "severity": f.severity}
        for f in findings
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
