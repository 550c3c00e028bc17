"""sumhub: a versioned single-underlying-model repository.

Work items (requirements, system elements, safety artefacts) and typed
links between them live in one append-only, schema-checked store. Editable
projections (FMEA table and tree, FHA table, system diagram, GSN graph)
are derived from it on demand, consistency rules and a traceability matrix
report on it, and a small HTTP service synchronizes concurrent clients
with last-writer-wins semantics and live change events.
"""

from .errors import (
    BindFailure,
    ConformanceRejected,
    CorruptLog,
    DanglingDelete,
    FormatMismatch,
    InvalidChangeSet,
    LockHeldByOther,
    MetamodelSchemaError,
    MetamodelSyntaxError,
    NotFound,
    PermissionDenied,
    RevisionOutOfRange,
    SumHubError,
    UnknownItem,
    UnknownSession,
    UnresolvedReference,
    UnsupportedVerbForView,
)
from .metamodel import (
    AttributeDef,
    ConformanceViolation,
    EntityTypeDef,
    EnumDef,
    MetaModel,
    RelationDef,
    avionics_metamodel,
    check_conformance,
)
from .schema import parse_metamodel, serialize_metamodel
from .store import (
    READ,
    WRITE,
    AccessControl,
    AccessRule,
    AddLink,
    ChangeEvent,
    ChangeSet,
    CreateItem,
    DeleteItem,
    Link,
    RemoveLink,
    Repository,
    Revision,
    StateView,
    UpdateItem,
    WorkItem,
)
from .demo import demo_changesets, load_demo
from .rules import (
    Finding,
    RuleConfig,
    TraceabilityMatrix,
    registered_rules,
    run_rules,
    traceability_matrix,
)
from .projections import ViewEdit, apply_view_edit, export, project
from .sync import PushRequest, PushResult, SyncCoordinator
from .service import ServiceConfig, SumHubService, serve

__version__ = "0.1.0"

__all__ = [
    "AccessControl",
    "AccessRule",
    "AddLink",
    "AttributeDef",
    "BindFailure",
    "ChangeEvent",
    "ChangeSet",
    "ConformanceRejected",
    "ConformanceViolation",
    "CorruptLog",
    "CreateItem",
    "DanglingDelete",
    "DeleteItem",
    "EntityTypeDef",
    "EnumDef",
    "Finding",
    "FormatMismatch",
    "InvalidChangeSet",
    "Link",
    "LockHeldByOther",
    "MetaModel",
    "MetamodelSchemaError",
    "MetamodelSyntaxError",
    "NotFound",
    "PermissionDenied",
    "PushRequest",
    "PushResult",
    "READ",
    "RelationDef",
    "RemoveLink",
    "Repository",
    "Revision",
    "RevisionOutOfRange",
    "RuleConfig",
    "ServiceConfig",
    "StateView",
    "SumHubError",
    "SumHubService",
    "SyncCoordinator",
    "TraceabilityMatrix",
    "UnknownItem",
    "UnknownSession",
    "UnresolvedReference",
    "UnsupportedVerbForView",
    "UpdateItem",
    "ViewEdit",
    "WRITE",
    "WorkItem",
    "apply_view_edit",
    "avionics_metamodel",
    "check_conformance",
    "demo_changesets",
    "export",
    "load_demo",
    "parse_metamodel",
    "project",
    "registered_rules",
    "run_rules",
    "serialize_metamodel",
    "serve",
    "traceability_matrix",
]
