"""Command line entry point.

Subcommands: init, demo, import-fmea, import-reqs, import-gsn, check,
trace, export, serve. Exit codes: 0 success, 1 error-severity findings (or
a service that refused to start), 2 usage errors, 3 import file errors
(reported with line numbers).

Import commands translate a file into one ChangeSet with upsert semantics:
unknown ids are created, known ids of the same type are updated in place,
and a known id whose type differs is replaced only under --cascade. Blank
cells leave existing attribute values unchanged. The changeset is committed
with author "importer"; --reproducible pins the timestamp to the epoch so
identical inputs yield byte-identical logs.

The --format flag takes text, structured, or csv. For exports, text means
the projection's native rendering (CSV for the two tables, DOT for the
diagrams), structured is JSON, and csv is valid only for tables.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from pathlib import Path

from .demo import load_demo
from .errors import (
    MetamodelSchemaError,
    MetamodelSyntaxError,
    SumHubError,
)
from .metamodel import avionics_fixture_text
from .projections import (
    FMEA_CSV_HEADER,
    ID_NAME_SEPARATOR,
    export,
    match_enum_value,
    project,
)
from .rules import (
    RuleConfig,
    findings_to_json,
    findings_to_text,
    run_rules,
    traceability_matrix,
)
from .schema import parse_metamodel
from .service import ServiceConfig, serve
from .store import (
    EPOCH_TIMESTAMP,
    READ,
    WRITE,
    AccessControl,
    AccessRule,
    AddLink,
    ChangeSet,
    CreateItem,
    DeleteItem,
    Repository,
    UpdateItem,
    utc_now_iso,
)

IMPORT_AUTHOR = "importer"

DEFAULT_DEV_TOKEN = "dev-token"
DEFAULT_DEV_PRINCIPAL = "dev"

PROJECTION_CHOICES = ["fmea-table", "fmea-tree", "system", "gsn", "fha"]
_TABLE_KINDS = ("fmea-table", "fha")


class ImportFileError(Exception):
    """A problem in an import file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (MetamodelSyntaxError, MetamodelSchemaError) as error:
        print(f"error: {error.message}", file=sys.stderr)
        return 3
    except ImportFileError as error:
        print(f"error: {error}", file=sys.stderr)
        return 3
    except (FileExistsError, FileNotFoundError, IsADirectoryError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except SumHubError as error:
        print(f"error: {error.message}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumhub",
        description="Versioned work-item repository with FMEA, FHA, and GSN views",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--data-dir", default="sumhub-data",
                       help="repository directory (default: ./sumhub-data)")

    def add_import_flags(p):
        p.add_argument("file")
        p.add_argument("--reproducible", action="store_true",
                       help="fixed epoch timestamps for byte-identical logs")
        p.add_argument("--cascade", action="store_true",
                       help="replace existing items whose type conflicts with the file")

    p = sub.add_parser("init", help="create an empty repository")
    add_common(p)
    p.add_argument("--metamodel", help="schema file (.smm); default: built-in avionics")
    p.set_defaults(handler=cmd_init)

    p = sub.add_parser("demo", help="create a repository seeded with the demo fixture")
    add_common(p)
    p.set_defaults(handler=cmd_demo)

    p = sub.add_parser("import-fmea", help="import an FMEA table (CSV)")
    add_common(p)
    add_import_flags(p)
    p.set_defaults(handler=cmd_import_fmea)

    p = sub.add_parser("import-reqs", help="import requirements (tab-separated lines)")
    add_common(p)
    add_import_flags(p)
    p.set_defaults(handler=cmd_import_reqs)

    p = sub.add_parser("import-gsn", help="import a safety argument (indented outline)")
    add_common(p)
    add_import_flags(p)
    p.set_defaults(handler=cmd_import_gsn)

    p = sub.add_parser("check", help="run consistency rules")
    add_common(p)
    p.add_argument("--rules", help="comma-separated rule codes (default: all)")
    p.add_argument("--format", choices=["text", "structured"], default="text")
    p.add_argument("--rev", type=int, help="check a historical revision")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("trace", help="write the traceability matrix as CSV")
    add_common(p)
    p.add_argument("--rev", type=int)
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(handler=cmd_trace)

    p = sub.add_parser("export", help="export a projection")
    add_common(p)
    p.add_argument("kind", choices=PROJECTION_CHOICES)
    p.add_argument("--format", choices=["text", "structured", "csv"], default="text")
    p.add_argument("--rev", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP service")
    add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8458)
    p.add_argument("--auth", help="JSON auth file: tokens and optional access rules")
    p.add_argument("--snapshot-interval", type=int, default=100)
    p.set_defaults(handler=cmd_serve)

    return parser


def _timestamp(args) -> str:
    return EPOCH_TIMESTAMP if args.reproducible else utc_now_iso()


def cmd_init(args) -> int:
    text = Path(args.metamodel).read_text(encoding="utf-8") if args.metamodel \
        else avionics_fixture_text()
    meta = parse_metamodel(text)
    repo = Repository.initialize(meta, args.data_dir)
    repo.close()
    print(f"initialized {args.data_dir} with meta model {meta.name}")
    return 0


def cmd_demo(args) -> int:
    repo = Repository.initialize(parse_metamodel(avionics_fixture_text()), args.data_dir)
    try:
        head = load_demo(repo)
    finally:
        repo.close()
    print(f"loaded demo fixture into {args.data_dir} (head revision {head})")
    return 0


def cmd_check(args) -> int:
    repo = Repository.open(args.data_dir)
    try:
        view = repo.state_at(args.rev)
        codes = None
        if args.rules:
            codes = [code.strip() for code in args.rules.split(",") if code.strip()]
        try:
            findings = run_rules(view, codes, config=RuleConfig())
        except KeyError as error:
            print(f"error: {error.args[0]}", file=sys.stderr)
            return 2
    finally:
        repo.close()
    if args.format == "structured":
        sys.stdout.write(findings_to_json(findings))
    else:
        sys.stdout.write(findings_to_text(findings))
    return 1 if any(f.severity == "error" for f in findings) else 0


def cmd_trace(args) -> int:
    repo = Repository.open(args.data_dir)
    try:
        matrix = traceability_matrix(repo.state_at(args.rev))
    finally:
        repo.close()
    _emit(matrix.to_csv(), args.output)
    return 0


def cmd_export(args) -> int:
    if args.format == "structured":
        wire_format = "structured-text"
    elif args.format == "csv":
        wire_format = "csv"
    else:
        wire_format = "csv" if args.kind in _TABLE_KINDS else "graph-description"
    repo = Repository.open(args.data_dir)
    try:
        projection = project(repo.state_at(args.rev), args.kind)
        rendered = export(projection, wire_format)
    finally:
        repo.close()
    _emit(rendered, args.output)
    return 0


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_serve(args) -> int:
    auth_table = {DEFAULT_DEV_TOKEN: DEFAULT_DEV_PRINCIPAL}
    access = None
    if args.auth:
        auth_table, access = _load_auth_table(args.auth)
    else:
        print(f"no --auth file; accepting development token "
              f"{DEFAULT_DEV_TOKEN!r} as principal {DEFAULT_DEV_PRINCIPAL!r}",
              file=sys.stderr)
    config = ServiceConfig(
        data_dir=args.data_dir,
        host=args.host,
        port=args.port,
        auth_table=auth_table,
        snapshot_interval=args.snapshot_interval,
        access=access,
    )
    try:
        service = serve(config)
    except FileNotFoundError as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except SumHubError as error:
        print(f"error: {error.message}", file=sys.stderr)
        return 1
    host, port = service.address
    print(f"serving {args.data_dir} on http://{host}:{port}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def _load_auth_table(path: str) -> tuple[dict, AccessControl | None]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ImportFileError("auth file must be a JSON object mapping token to principal")
    if not isinstance(payload.get("tokens"), dict):
        # Plain form: the whole object is the token table, everything allowed.
        return dict(payload), None
    tokens = dict(payload["tokens"])
    if "rules" not in payload:
        return tokens, None
    rules = payload["rules"]
    if not isinstance(rules, list):
        raise ImportFileError("auth rules must be a list of objects")
    parsed = []
    for index, entry in enumerate(rules):
        if not isinstance(entry, dict):
            raise ImportFileError(f"auth rule {index} must be an object")
        try:
            principal = entry["principal"]
            scope = entry["scope"]
            rights = entry["rights"]
        except KeyError as missing:
            raise ImportFileError(
                f"auth rule {index} is missing {missing.args[0]}") from None
        if not isinstance(principal, str) or not isinstance(scope, str):
            raise ImportFileError(f"auth rule {index}: principal and scope must be strings")
        if (not isinstance(rights, list)
                or not set(rights) <= {READ, WRITE} or not rights):
            raise ImportFileError(
                f"auth rule {index}: rights must be a non-empty list drawn from"
                f" [\"{READ}\", \"{WRITE}\"]")
        parsed.append(AccessRule(principal, scope, frozenset(rights)))
    return tokens, AccessControl(parsed)


# --- import machinery ---------------------------------------------------------

_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*-[0-9]+$")


def _parse_cell(cell: str, line: int) -> tuple[str, str]:
    """Split an "INES-2685 - FCS & pilot interface 2" cell into id and name."""
    text = cell.strip()
    if ID_NAME_SEPARATOR in text:
        item_id, name = text.split(ID_NAME_SEPARATOR, 1)
    else:
        item_id, name = text, ""
    item_id = item_id.strip()
    if not _ID_RE.match(item_id):
        raise ImportFileError(f"malformed item reference {cell!r}", line)
    return item_id, name.strip()


def _split_list(cell: str) -> list[str]:
    return [part.strip() for part in cell.split(";") if part.strip()]


class _Upserter:
    """Accumulates idempotent create/update/link ops against the head state."""

    def __init__(self, repo: Repository, cascade: bool):
        self.view = repo.state_at()
        self.cascade = cascade
        self.order: list[str] = []
        self.replaced: list[str] = []
        self.staged_types: dict[str, str] = {}
        self.staged_attrs: dict[str, dict] = {}
        self.existing: dict[str, object] = {}
        self.first_line: dict[str, int] = {}
        self.links: list[tuple[str, str, str]] = []

    def item(self, item_id: str, type_name: str, attrs: dict, line: int):
        attrs = {k: v for k, v in attrs.items() if v is not None}
        if item_id in self.staged_types:
            if self.staged_types[item_id] != type_name:
                raise ImportFileError(
                    f"{item_id} appears as both {self.staged_types[item_id]} "
                    f"and {type_name}", line)
            staged = self.staged_attrs[item_id]
            staged.update({k: v for k, v in attrs.items() if k not in staged})
            return
        existing = self.view.item(item_id)
        if existing is not None and existing.type != type_name:
            if not self.cascade:
                raise ImportFileError(
                    f"{item_id} already exists as {existing.type}, not {type_name} "
                    f"(pass --cascade to replace it)", line)
            self.replaced.append(item_id)
            existing = None
        self.order.append(item_id)
        self.first_line[item_id] = line
        self.staged_types[item_id] = type_name
        self.staged_attrs[item_id] = attrs
        self.existing[item_id] = existing

    def type_of(self, item_id: str) -> str | None:
        if item_id in self.staged_types:
            return self.staged_types[item_id]
        existing = self.view.item(item_id)
        return None if existing is None else existing.type

    def link(self, relation: str, source: str, target: str):
        key = (relation, source, target)
        if key not in self.links:
            self.links.append(key)

    def known(self, item_id: str) -> bool:
        return item_id in self.staged_types or self.view.item(item_id) is not None

    def changeset(self, timestamp: str) -> ChangeSet | None:
        ops: list = [DeleteItem(item_id, cascade=True) for item_id in self.replaced]
        for item_id in self.order:
            attrs = self.staged_attrs[item_id]
            existing = self.existing[item_id]
            if existing is None:
                if "name" not in attrs:
                    raise ImportFileError(
                        f"{item_id} is not in the repository and the file "
                        f"gives it no name", self.first_line[item_id])
                ops.append(CreateItem(self.staged_types[item_id], dict(attrs), item_id))
            else:
                changed = {k: v for k, v in attrs.items()
                           if existing.attributes.get(k) != v}
                if changed:
                    ops.append(UpdateItem(item_id, changed))
        for relation, source, target in self.links:
            fresh = source in self.replaced or target in self.replaced
            if fresh or (relation, source, target) not in self.view.links:
                ops.append(AddLink(relation, source, target))
        if not ops:
            return None
        return ChangeSet(ops=tuple(ops), author=IMPORT_AUTHOR, timestamp=timestamp)


def _commit_import(repo: Repository, upserter: _Upserter, timestamp: str) -> int:
    changeset = upserter.changeset(timestamp)
    if changeset is None:
        print("nothing to import (repository already matches the file)")
        return 0
    revision = repo.apply_changeset(None, repo.head, changeset)
    print(f"imported {len(changeset.ops)} op(s) as revision {revision.number}")
    return 0


def _run_import(args, parse) -> int:
    repo = Repository.open(args.data_dir)
    try:
        text = Path(args.file).read_text(encoding="utf-8")
        upserter = _Upserter(repo, args.cascade)
        parse(repo, upserter, text)
        return _commit_import(repo, upserter, _timestamp(args))
    finally:
        repo.close()


def cmd_import_fmea(args) -> int:
    return _run_import(args, _parse_fmea)


def _parse_fmea(repo: Repository, up: _Upserter, text: str) -> None:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ImportFileError("empty file", 1)
    if rows[0] != FMEA_CSV_HEADER:
        raise ImportFileError(f"header must be exactly {FMEA_CSV_HEADER}", 1)
    phase_values = _flight_phase_values(repo)
    current_objects: list[str] = []
    for index, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(FMEA_CSV_HEADER):
            raise ImportFileError(
                f"expected {len(FMEA_CSV_HEADER)} cells, found {len(row)}", index)
        (object_cell, mode_cell, phase_cell, rate_cell,
         effect_cell, fha_cell, det_cell) = row

        if object_cell.strip():
            current_objects = []
            for part in _split_list(object_cell):
                object_id, object_name = _parse_cell(part, index)
                # re-imports keep an owner that is already a Function
                type_name = up.type_of(object_id)
                if type_name not in ("Part", "Function"):
                    type_name = "Part"
                up.item(object_id, type_name, {"name": object_name or None}, index)
                current_objects.append(object_id)
        elif not current_objects:
            raise ImportFileError("row has no object and no preceding object row", index)

        mode_id, mode_name = _parse_cell(mode_cell, index)
        attrs: dict = {"name": mode_name or None}
        phase_text = phase_cell.strip()
        if phase_text:
            matched = match_enum_value(phase_values, phase_text)
            if matched is None:
                raise ImportFileError(f"unknown flight phase {phase_text!r}", index)
            attrs["flight_phase"] = matched
        rate_text = rate_cell.strip()
        if rate_text:
            try:
                attrs["mode_failure_rate"] = float(rate_text)
            except ValueError:
                raise ImportFileError(
                    f"mode failure rate {rate_text!r} is not a number", index)
        up.item(mode_id, "FailureMode", attrs, index)
        for object_id in current_objects:
            up.link("fails_as", object_id, mode_id)

        effect_id = None
        if effect_cell.strip():
            effect_id, effect_name = _parse_cell(effect_cell, index)
            up.item(effect_id, "FailureEffect", {"name": effect_name or None}, index)
            up.link("leads_to", mode_id, effect_id)
        if fha_cell.strip():
            if effect_id is None:
                raise ImportFileError("an FHA effect needs a failure effect", index)
            fha_id, fha_name = _parse_cell(fha_cell, index)
            up.item(fha_id, "FhaEffect", {"name": fha_name or None}, index)
            up.link("assessed_as", effect_id, fha_id)
        for part in _split_list(det_cell):
            det_id, det_name = _parse_cell(part, index)
            up.item(det_id, "DetectionMethod", {"name": det_name or None}, index)
            up.link("detected_by", mode_id, det_id)


def _flight_phase_values(repo: Repository) -> tuple[str, ...]:
    mode_type = repo.meta.entity_type("FailureMode")
    if mode_type is not None:
        attr = mode_type.attribute("flight_phase")
        if attr is not None and attr.enum_name:
            enum = repo.meta.enum(attr.enum_name)
            if enum is not None:
                return enum.values
    return ()


def cmd_import_reqs(args) -> int:
    return _run_import(args, _parse_reqs)


def _parse_reqs(repo: Repository, up: _Upserter, text: str) -> None:
    """One requirement per line: id<TAB>title<TAB>text<TAB>kind."""
    for index, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        fields = raw.split("\t")
        if len(fields) != 4:
            raise ImportFileError(
                f"expected id<TAB>title<TAB>text<TAB>kind, found "
                f"{len(fields)} field(s)", index)
        item_id, title, body, kind = (field.strip() for field in fields)
        if not _ID_RE.match(item_id):
            raise ImportFileError(f"malformed id {item_id!r}", index)
        if not title:
            raise ImportFileError("title must not be empty", index)
        if kind not in ("Requirement", "SafetyRequirement"):
            raise ImportFileError(
                f"kind must be Requirement or SafetyRequirement, not {kind!r}", index)
        up.item(item_id, kind, {"name": title, "description": body or None}, index)


def cmd_import_gsn(args) -> int:
    return _run_import(args, _parse_gsn)


_GSN_LINE = re.compile(
    r'^(?P<indent> *)(?P<kind>goal|strategy|evidence)\s+'
    r'(?P<id>[A-Za-z][A-Za-z0-9_]*-[0-9]+)\s+"(?P<name>[^"]*)"'
    r'(?P<rest>.*)$'
)
_GSN_ANNOTATION = re.compile(r'(addresses|cites)=([A-Za-z0-9_,-]+)')

_GSN_TYPES = {"goal": "GsnGoal", "strategy": "GsnStrategy", "evidence": "GsnEvidence"}
_GSN_CHILD_RELATION = {
    ("goal", "strategy"): "supported_by",
    ("strategy", "goal"): "subgoal",
    ("goal", "evidence"): "evidenced_by",
}
_GSN_ANNOTATION_KIND = {"addresses": "goal", "cites": "evidence"}


def _parse_gsn(repo: Repository, up: _Upserter, text: str) -> None:
    """Indented outline: goal|strategy|evidence ID "name" [annotations].

    Two spaces of indent per nesting level. A child links to the nearest
    line one level up; goals nest strategies and evidence, strategies nest
    goals. addresses= (goals) and cites= (evidence) take comma-separated
    ids of items that must already exist.
    """
    stack: list[tuple[int, str, str]] = []     # (level, kind, id)
    pending: list[tuple[str, str, str, int]] = []
    for index, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        match = _GSN_LINE.match(raw.rstrip())
        if match is None:
            raise ImportFileError(
                'expected: goal|strategy|evidence ID "name" '
                '[addresses=... cites=...]', index)
        indent = len(match.group("indent"))
        if indent % 2 != 0:
            raise ImportFileError("indentation must be a multiple of two spaces", index)
        level = indent // 2
        kind = match.group("kind")
        item_id = match.group("id")
        up.item(item_id, _GSN_TYPES[kind], {"name": match.group("name")}, index)

        while stack and stack[-1][0] >= level:
            stack.pop()
        if level > 0:
            if not stack or stack[-1][0] != level - 1:
                raise ImportFileError("indented line has no parent one level up", index)
            parent_kind, parent_id = stack[-1][1], stack[-1][2]
            relation = _GSN_CHILD_RELATION.get((parent_kind, kind))
            if relation is None:
                raise ImportFileError(f"a {kind} cannot nest under a {parent_kind}", index)
            up.link(relation, parent_id, item_id)
        stack.append((level, kind, item_id))

        rest = match.group("rest")
        for key, ids in _GSN_ANNOTATION.findall(rest):
            if kind != _GSN_ANNOTATION_KIND[key]:
                raise ImportFileError(f"{key}= is not valid on a {kind}", index)
            for ref in ids.split(","):
                ref = ref.strip()
                if not ref:
                    continue
                if not _ID_RE.match(ref):
                    raise ImportFileError(f"malformed id {ref!r} in {key}=", index)
                pending.append((key, item_id, ref, index))
        leftover = _GSN_ANNOTATION.sub("", rest).strip()
        if leftover:
            raise ImportFileError(f"unrecognized trailing text {leftover!r}", index)
    for relation, source, target, line in pending:
        if not up.known(target):
            raise ImportFileError(
                f"{target} is not defined here or in the repository", line)
        up.link(relation, source, target)


if __name__ == "__main__":
    sys.exit(main())
