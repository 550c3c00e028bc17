"""Textual schema language for meta models (.smm files).

Grammar:

    metamodel := "metamodel" IDENT "{" (enumdef | catdef | typedef | reldef)* "}"
    enumdef   := "enum" IDENT "{" IDENT ("," IDENT)* "}"
    catdef    := "category" IDENT
    typedef   := "type" IDENT ["in" IDENT ("," IDENT)*] "{" attrdef* "}"
    attrdef   := "attr" IDENT ":" ("text"|"number"|"boolean"|IDENT) ["?"]
    reldef    := "relation" IDENT ":" IDENT "->" IDENT "(" INT ".." (INT|"*") ")"

"#" starts a comment running to end of line. IDENT = [A-Za-z_][A-Za-z0-9_]*.
An IDENT in attribute-kind position names a declared enum. Parsing is total:
any input produces either a valid MetaModel or a raised diagnostic, and it is
a pure function of the source text.

Malformed token streams raise MetamodelSyntaxError at the first offending
position. Semantic defects (duplicate names, unknown endpoints, bad
cardinalities, unknown enum kinds) are collected across the whole source and
raised together as MetamodelSchemaError, so an author sees every problem in
one pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MetamodelSchemaError, MetamodelSyntaxError
from .metamodel import (
    BOOLEAN,
    ENUM,
    NUMBER,
    TEXT,
    AttributeDef,
    EntityTypeDef,
    EnumDef,
    MetaModel,
    RelationDef,
)

_PRIMITIVE_KINDS = {TEXT, NUMBER, BOOLEAN}
_PUNCT = {"{", "}", ":", "(", ")", ",", "?", "*"}


@dataclass(frozen=True)
class SchemaDiagnostic:
    message: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.message}"


@dataclass(frozen=True)
class Token:
    kind: str        # IDENT | INT | punctuation | ARROW | DOTDOT | EOF
    value: str
    line: int
    column: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("INT", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if text.startswith("->", i):
            tokens.append(Token("ARROW", "->", line, start_col))
            i += 2
            col += 2
            continue
        if text.startswith("..", i):
            tokens.append(Token("DOTDOT", "..", line, start_col))
            i += 2
            col += 2
            continue
        if ch in _PUNCT:
            tokens.append(Token(ch, ch, line, start_col))
            i += 1
            col += 1
            continue
        raise MetamodelSyntaxError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: list[SchemaDiagnostic] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            expected = what or kind
            raise MetamodelSyntaxError(
                f"expected {expected}, found {tok.value or 'end of input'!r}", tok.line, tok.column
            )
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.expect("IDENT", f"keyword {word!r}")
        if tok.value != word:
            raise MetamodelSyntaxError(
                f"expected keyword {word!r}, found {tok.value!r}", tok.line, tok.column
            )
        return tok

    def diagnose(self, message: str, tok: Token) -> None:
        self.diagnostics.append(SchemaDiagnostic(message, tok.line, tok.column))

    # --- grammar productions -------------------------------------------

    def parse_metamodel(self) -> MetaModel:
        self.expect_keyword("metamodel")
        name_tok = self.expect("IDENT", "meta model name")
        self.expect("{")

        enums: list[EnumDef] = []
        categories: list[str] = []
        types: list[EntityTypeDef] = []
        relations: list[tuple[RelationDef, Token]] = []
        names: dict[str, str] = {}

        def declare(kind: str, tok: Token) -> None:
            if tok.value in names:
                self.diagnose(f"duplicate name {tok.value} (already a {names[tok.value]})", tok)
            else:
                names[tok.value] = kind

        while self.peek().kind != "}":
            tok = self.peek()
            if tok.kind != "IDENT":
                raise MetamodelSyntaxError(
                    f"expected declaration, found {tok.value or 'end of input'!r}",
                    tok.line,
                    tok.column,
                )
            if tok.value == "enum":
                enum_def, name_pos = self.parse_enum()
                declare("enum", name_pos)
                enums.append(enum_def)
            elif tok.value == "category":
                self.advance()
                cat_tok = self.expect("IDENT", "category name")
                declare("category", cat_tok)
                categories.append(cat_tok.value)
            elif tok.value == "type":
                type_def, name_pos = self.parse_type()
                declare("type", name_pos)
                types.append(type_def)
            elif tok.value == "relation":
                rel_def, name_pos = self.parse_relation()
                declare("relation", name_pos)
                relations.append((rel_def, name_pos))
            else:
                raise MetamodelSyntaxError(
                    f"expected enum, category, type or relation, found {tok.value!r}",
                    tok.line,
                    tok.column,
                )
        self.expect("}")
        self.expect("EOF", "end of input")

        meta = MetaModel(
            name=name_tok.value,
            enums=tuple(enums),
            categories=tuple(categories),
            types=tuple(types),
            relations=tuple(r for r, _ in relations),
        )
        self.check_semantics(meta, relations)
        if self.diagnostics:
            raise MetamodelSchemaError(self.diagnostics)
        return meta

    def parse_enum(self) -> tuple[EnumDef, Token]:
        self.expect_keyword("enum")
        name_tok = self.expect("IDENT", "enum name")
        self.expect("{")
        values = [self.expect("IDENT", "enum value").value]
        while self.peek().kind == ",":
            self.advance()
            values.append(self.expect("IDENT", "enum value").value)
        self.expect("}")
        if len(set(values)) != len(values):
            self.diagnose(f"enum {name_tok.value} has duplicate values", name_tok)
        return EnumDef(name_tok.value, tuple(values)), name_tok

    def parse_type(self) -> tuple[EntityTypeDef, Token]:
        self.expect_keyword("type")
        name_tok = self.expect("IDENT", "type name")
        categories: list[str] = []
        if self.peek().kind == "IDENT" and self.peek().value == "in":
            self.advance()
            categories.append(self.expect("IDENT", "category name").value)
            while self.peek().kind == ",":
                self.advance()
                categories.append(self.expect("IDENT", "category name").value)
        self.expect("{")
        attributes: list[AttributeDef] = []
        seen_attrs: set[str] = set()
        while self.peek().kind != "}":
            attr_tok = self.peek()
            attr = self.parse_attribute()
            if attr.name in seen_attrs:
                self.diagnose(f"duplicate attribute {attr.name} in type {name_tok.value}", attr_tok)
            seen_attrs.add(attr.name)
            attributes.append(attr)
        self.expect("}")
        return (
            EntityTypeDef(name_tok.value, frozenset(categories), tuple(attributes)),
            name_tok,
        )

    def parse_attribute(self) -> AttributeDef:
        self.expect_keyword("attr")
        name_tok = self.expect("IDENT", "attribute name")
        self.expect(":")
        kind_tok = self.expect("IDENT", "attribute kind")
        optional = False
        if self.peek().kind == "?":
            self.advance()
            optional = True
        if kind_tok.value in _PRIMITIVE_KINDS:
            return AttributeDef(name_tok.value, kind_tok.value, optional=optional)
        return AttributeDef(name_tok.value, ENUM, enum_name=kind_tok.value, optional=optional)

    def parse_relation(self) -> tuple[RelationDef, Token]:
        self.expect_keyword("relation")
        name_tok = self.expect("IDENT", "relation name")
        self.expect(":")
        source = self.expect("IDENT", "source endpoint").value
        self.expect("ARROW", "'->'")
        target = self.expect("IDENT", "target endpoint").value
        self.expect("(")
        min_tok = self.expect("INT", "lower bound")
        self.expect("DOTDOT", "'..'")
        upper_tok = self.peek()
        if upper_tok.kind == "*":
            self.advance()
            max_count: int | None = None
        else:
            max_count = int(self.expect("INT", "upper bound or '*'").value)
        self.expect(")")
        min_count = int(min_tok.value)
        if max_count is not None and min_count > max_count:
            self.diagnose(
                f"bad cardinality {min_count}..{max_count} in relation {name_tok.value}", min_tok
            )
        if max_count == 0:
            self.diagnose(f"upper bound must be positive in relation {name_tok.value}", min_tok)
        return RelationDef(name_tok.value, source, target, min_count, max_count), name_tok

    # --- semantic checks over the assembled model ----------------------

    def check_semantics(self, meta: MetaModel, relations: list[tuple[RelationDef, Token]]) -> None:
        for type_def in meta.types:
            for cat in sorted(type_def.categories):
                if cat not in meta.categories:
                    self.diagnose(f"unknown category {cat} in type {type_def.name}", _nowhere())
            for attr in type_def.attributes:
                if attr.kind == ENUM and meta.enum(attr.enum_name or "") is None:
                    self.diagnose(
                        f"unknown enum {attr.enum_name} in attribute {type_def.name}.{attr.name}",
                        _nowhere(),
                    )
        for rel, tok in relations:
            for endpoint in (rel.source, rel.target):
                if meta.entity_type(endpoint) is None and endpoint not in meta.categories:
                    self.diagnose(f"unknown endpoint {endpoint} in relation {rel.name}", tok)
                elif endpoint in meta.categories and not meta.category_members(endpoint):
                    self.diagnose(
                        f"category {endpoint} used by relation {rel.name} has no member types", tok
                    )


def _nowhere() -> Token:
    return Token("IDENT", "", 0, 0)


def parse_metamodel(text: str) -> MetaModel:
    """Parse .smm source into a validated MetaModel.

    Raises MetamodelSyntaxError on the first malformed token sequence and
    MetamodelSchemaError carrying every collected semantic defect.
    """
    if not isinstance(text, str):
        raise MetamodelSyntaxError("source must be text", 1, 1)
    return _Parser(_tokenize(text)).parse_metamodel()


def serialize_metamodel(meta: MetaModel) -> str:
    """Canonical .smm rendering; reparsing it reproduces the model structurally."""
    lines = [f"metamodel {meta.name} {{"]
    for enum_def in meta.enums:
        lines.append(f"  enum {enum_def.name} {{ {', '.join(enum_def.values)} }}")
    for category in meta.categories:
        lines.append(f"  category {category}")
    for type_def in meta.types:
        membership = ""
        if type_def.categories:
            membership = " in " + ", ".join(sorted(type_def.categories))
        lines.append(f"  type {type_def.name}{membership} {{")
        for attr in type_def.attributes:
            kind = attr.enum_name if attr.kind == ENUM else attr.kind
            suffix = "?" if attr.optional else ""
            lines.append(f"    attr {attr.name}: {kind}{suffix}")
        lines.append("  }")
    for rel in meta.relations:
        lines.append(
            f"  relation {rel.name}: {rel.source} -> {rel.target} ({rel.cardinality()})"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
