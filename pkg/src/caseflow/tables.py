"""Core stream and table schemas shared by all compiled rule sets."""

from __future__ import annotations

from caseflow.cql.schema import SchemaDef

PROCESS_EVENT = "Process_Event"
EXECUTION_STATE = "Execution_State"
CASE_VARIABLES = "Case_Variables"
DCR_EVENT_STATE = "DCR_Event_State"
DIAGNOSTICS = "Diagnostics"

PROCESS_EVENT_SCHEMA = SchemaDef(
    name=PROCESS_EVENT,
    fields=(
        ("pmID", "int"),
        ("caseID", "int"),
        ("nodeID", "string"),
        ("state", "string"),
        ("payload", "map"),
        ("ts", "timestamp"),
    ),
    kind="stream",
)

EXECUTION_STATE_SCHEMA = SchemaDef(
    name=EXECUTION_STATE,
    fields=(
        ("pmID", "int"),
        ("caseID", "int"),
        ("nodeID", "string"),
        ("state", "string"),
        ("ts", "timestamp"),
    ),
    keys=("pmID", "caseID", "nodeID"),
    kind="table",
)

CASE_VARIABLES_SCHEMA = SchemaDef(
    name=CASE_VARIABLES,
    fields=(("pmID", "int"), ("caseID", "int"), ("variables", "map")),
    keys=("pmID", "caseID"),
    kind="table",
)

DCR_EVENT_STATE_SCHEMA = SchemaDef(
    name=DCR_EVENT_STATE,
    fields=(
        ("pmID", "int"),
        ("caseID", "int"),
        ("eventID", "string"),
        ("happened", "bool"),
        ("included", "bool"),
        ("restless", "bool"),
        ("ts", "timestamp"),
    ),
    keys=("pmID", "caseID", "eventID"),
    kind="table",
)

CORE_SCHEMAS = (
    PROCESS_EVENT_SCHEMA,
    EXECUTION_STATE_SCHEMA,
    CASE_VARIABLES_SCHEMA,
    DCR_EVENT_STATE_SCHEMA,
)


def register_core_schemas(engine) -> None:
    for schema in CORE_SCHEMAS:
        if not engine.has_schema(schema.name):
            engine.register_schema(schema)
