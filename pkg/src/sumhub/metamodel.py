"""Typed schema for the single underlying model.

A MetaModel declares entity types with typed attributes, named categories
(sets of types usable as relation endpoints), enums, and relations with
per-source cardinality bounds. Instance data is checked against it by
:func:`check_conformance`; the repository refuses any commit that would
violate it, so stored data can never leave the declared structure.

MetaModel values are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

TEXT = "text"
NUMBER = "number"
BOOLEAN = "boolean"
ENUM = "enum"

_IDENT_FIRST = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_REST = _IDENT_FIRST | set("0123456789")


def is_identifier(text: str) -> bool:
    return bool(text) and text[0] in _IDENT_FIRST and all(c in _IDENT_REST for c in text[1:])


@dataclass(frozen=True)
class EnumDef:
    name: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class AttributeDef:
    name: str
    kind: str                 # text | number | boolean | enum
    enum_name: str | None = None
    optional: bool = False


@dataclass(frozen=True)
class EntityTypeDef:
    name: str
    categories: frozenset[str] = frozenset()
    attributes: tuple[AttributeDef, ...] = ()

    def attribute(self, name: str) -> AttributeDef | None:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None


@dataclass(frozen=True)
class RelationDef:
    name: str
    source: str               # entity type or category name
    target: str
    min_count: int = 0
    max_count: int | None = None   # None = unbounded

    def cardinality(self) -> str:
        upper = "*" if self.max_count is None else str(self.max_count)
        return f"{self.min_count}..{upper}"


@dataclass(frozen=True)
class MetaModel:
    name: str
    enums: tuple[EnumDef, ...] = ()
    categories: tuple[str, ...] = ()
    types: tuple[EntityTypeDef, ...] = ()
    relations: tuple[RelationDef, ...] = ()
    _type_index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self._type_index.update(
            types={t.name: t for t in self.types},
            enums={e.name: e for e in self.enums},
            relations={r.name: r for r in self.relations},
        )

    def entity_type(self, name: str) -> EntityTypeDef | None:
        return self._type_index["types"].get(name)

    def enum(self, name: str) -> EnumDef | None:
        return self._type_index["enums"].get(name)

    def relation(self, name: str) -> RelationDef | None:
        return self._type_index["relations"].get(name)

    def category_members(self, category: str) -> frozenset[str]:
        return frozenset(t.name for t in self.types if category in t.categories)

    def endpoint_members(self, endpoint: str) -> frozenset[str]:
        """Concrete type names admitted at a relation endpoint."""
        if endpoint in self._type_index["types"]:
            return frozenset((endpoint,))
        return self.category_members(endpoint)

    def validate(self) -> list[str]:
        """Structural defects of the meta model itself (empty = valid)."""
        problems: list[str] = []
        seen: dict[str, str] = {}
        for kind, names in (
            ("type", [t.name for t in self.types]),
            ("enum", [e.name for e in self.enums]),
            ("category", list(self.categories)),
            ("relation", [r.name for r in self.relations]),
        ):
            for name in names:
                if name in seen:
                    problems.append(f"duplicate name {name} ({seen[name]} and {kind})")
                else:
                    seen[name] = kind
        for enum_def in self.enums:
            if not enum_def.values:
                problems.append(f"enum {enum_def.name} has no values")
            if len(set(enum_def.values)) != len(enum_def.values):
                problems.append(f"enum {enum_def.name} has duplicate values")
        for type_def in self.types:
            attr_names = [a.name for a in type_def.attributes]
            if len(set(attr_names)) != len(attr_names):
                problems.append(f"type {type_def.name} has duplicate attributes")
            for cat in type_def.categories:
                if cat not in self.categories:
                    problems.append(f"type {type_def.name} is in unknown category {cat}")
            for attr in type_def.attributes:
                if attr.kind == ENUM and self.enum(attr.enum_name or "") is None:
                    problems.append(
                        f"attribute {type_def.name}.{attr.name} references unknown enum {attr.enum_name}"
                    )
        for rel in self.relations:
            for endpoint in (rel.source, rel.target):
                if self.entity_type(endpoint) is None and endpoint not in self.categories:
                    problems.append(f"unknown endpoint {endpoint} in relation {rel.name}")
                elif endpoint in self.categories and not self.category_members(endpoint):
                    problems.append(
                        f"relation {rel.name} endpoint category {endpoint} has no member types"
                    )
            if rel.max_count is not None and rel.min_count > rel.max_count:
                problems.append(f"relation {rel.name} has bad cardinality {rel.cardinality()}")
        return problems


VIOLATION_KINDS = (
    "UnknownType",
    "UnknownAttribute",
    "BadAttributeKind",
    "MissingRequiredAttribute",
    "UnknownRelation",
    "EndpointMismatch",
    "DanglingEndpoint",
    "CardinalityViolation",
)


@dataclass(frozen=True)
class ConformanceViolation:
    kind: str
    subject: str          # item id, or "relation source->target" for links
    message: str

    def __str__(self) -> str:
        return f"{self.kind}[{self.subject}]: {self.message}"


def value_conforms(meta: MetaModel, attr: AttributeDef, value) -> bool:
    if attr.kind == TEXT:
        return isinstance(value, str)
    if attr.kind == NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if attr.kind == BOOLEAN:
        return isinstance(value, bool)
    if attr.kind == ENUM:
        enum_def = meta.enum(attr.enum_name or "")
        return enum_def is not None and isinstance(value, str) and value in enum_def.values
    return False


def _link_subject(relation: str, source: str, target: str) -> str:
    return f"{relation} {source}->{target}"


def check_item(meta: MetaModel, item_id: str, type_name: str, attrs: dict) -> list[ConformanceViolation]:
    """Violations for a single item, independent of links."""
    violations: list[ConformanceViolation] = []
    type_def = meta.entity_type(type_name)
    if type_def is None:
        return [ConformanceViolation("UnknownType", item_id, f"unknown type {type_name}")]
    for name, value in attrs.items():
        attr = type_def.attribute(name)
        if attr is None:
            violations.append(
                ConformanceViolation("UnknownAttribute", item_id, f"{type_name} has no attribute {name}")
            )
        elif not value_conforms(meta, attr, value):
            violations.append(
                ConformanceViolation(
                    "BadAttributeKind",
                    item_id,
                    f"{name}={value!r} does not conform to kind {attr.kind}"
                    + (f"({attr.enum_name})" if attr.kind == ENUM else ""),
                )
            )
    for attr in type_def.attributes:
        if not attr.optional and attrs.get(attr.name) is None:
            violations.append(
                ConformanceViolation(
                    "MissingRequiredAttribute", item_id, f"required attribute {attr.name} missing"
                )
            )
    return violations


def check_link(meta: MetaModel, item_types: dict[str, str], relation: str,
               source: str, target: str) -> list[ConformanceViolation]:
    """Violations for a single link against the given id -> type map."""
    violations: list[ConformanceViolation] = []
    subject = _link_subject(relation, source, target)
    rel = meta.relation(relation)
    if rel is None:
        return [ConformanceViolation("UnknownRelation", subject, f"unknown relation {relation}")]
    for role, item_id, endpoint in (("source", source, rel.source), ("target", target, rel.target)):
        type_name = item_types.get(item_id)
        if type_name is None:
            violations.append(
                ConformanceViolation("DanglingEndpoint", subject, f"{role} {item_id} does not exist")
            )
        elif type_name not in meta.endpoint_members(endpoint):
            violations.append(
                ConformanceViolation(
                    "EndpointMismatch",
                    subject,
                    f"{role} {item_id} is a {type_name}, relation {relation} requires {endpoint}",
                )
            )
    return violations


def check_cardinality(meta: MetaModel, item_types: dict[str, str],
                      out_counts: dict[tuple[str, str], int]) -> list[ConformanceViolation]:
    """Per-source cardinality bounds for every (source item, relation) pair.

    out_counts maps (relation, source id) to the number of outgoing links.
    """
    violations: list[ConformanceViolation] = []
    for rel in meta.relations:
        if rel.min_count == 0 and rel.max_count is None:
            continue
        members = meta.endpoint_members(rel.source)
        for item_id, type_name in item_types.items():
            if type_name not in members:
                continue
            count = out_counts.get((rel.name, item_id), 0)
            if count < rel.min_count or (rel.max_count is not None and count > rel.max_count):
                violations.append(
                    ConformanceViolation(
                        "CardinalityViolation",
                        item_id,
                        f"{count} outgoing {rel.name} links, bounds {rel.cardinality()}",
                    )
                )
    return violations


def check_conformance(meta: MetaModel, items, links) -> list[ConformanceViolation]:
    """Check a whole instance set. Empty result = fully conformant.

    items: iterable of (id, type, attrs) triples or objects with those fields.
    links: iterable of (relation, source, target) triples or Link-like objects.
    Violations are data, not failures; callers decide what to do with them.
    """
    item_rows = [_item_row(entry) for entry in items]
    link_rows = [_link_row(entry) for entry in links]
    item_types = {item_id: type_name for item_id, type_name, _ in item_rows}

    violations: list[ConformanceViolation] = []
    for item_id, type_name, attrs in item_rows:
        violations.extend(check_item(meta, item_id, type_name, attrs))
    out_counts: dict[tuple[str, str], int] = {}
    for relation, source, target in link_rows:
        violations.extend(check_link(meta, item_types, relation, source, target))
        key = (relation, source)
        out_counts[key] = out_counts.get(key, 0) + 1
    violations.extend(check_cardinality(meta, item_types, out_counts))
    return violations


def _item_row(entry) -> tuple[str, str, dict]:
    if isinstance(entry, tuple):
        return entry
    return (entry.id, entry.type, entry.attributes)


def _link_row(entry) -> tuple[str, str, str]:
    if isinstance(entry, tuple):
        return entry
    return (entry.relation, entry.source, entry.target)


_AVIONICS_CACHE: list[MetaModel] = []


def avionics_fixture_text() -> str:
    return resources.files("sumhub.fixtures").joinpath("avionics.smm").read_text(encoding="utf-8")


def avionics_metamodel() -> MetaModel:
    """The built-in avionics meta model, identical to parsing fixtures/avionics.smm."""
    if not _AVIONICS_CACHE:
        from .schema import parse_metamodel

        _AVIONICS_CACHE.append(parse_metamodel(avionics_fixture_text()))
    return _AVIONICS_CACHE[0]
