"""Compiles a declarative model into triggered rules over the event-state table.

Every model event gets an apply rule guarded by enabledness (the event is
included and every included condition source has happened). Applying sets
happened and clears restless on the event itself, marks response targets
restless, then applies includes before excludes. Submissions of non-enabled
events produce a rejection diagnostic and change nothing.
"""

from __future__ import annotations

from caseflow.cql.engine import RuleEngine
from caseflow.cql.rules import (
    CaseWhen,
    EmitRecord,
    ExistsRow,
    Guard,
    GuardNot,
    Lit,
    RowConstraint,
    RuleIR,
    Trigger,
    TriggerField,
    UpdateRows,
    g_and,
    g_or,
)
from caseflow.bpmn.compiler import CompiledModel, rule_prefix
from caseflow.dcr.model import DcrModelIR
from caseflow.tables import DCR_EVENT_STATE, DIAGNOSTICS, PROCESS_EVENT


class DcrStateError(RuntimeError):
    """Event-state initialization misuse (duplicate or missing case rows)."""


def _where_event(event: str) -> tuple[RowConstraint, ...]:
    return (
        RowConstraint("pmID", "=", TriggerField("pmID")),
        RowConstraint("caseID", "=", TriggerField("caseID")),
        RowConstraint("eventID", "=", Lit(event)),
    )


def _flag(event: str, field: str, value: bool, negated: bool = False) -> ExistsRow:
    return ExistsRow(
        DCR_EVENT_STATE,
        (*_where_event(event), RowConstraint(field, "=", Lit(value))),
        negated=negated,
    )


def _row_exists(event: str, negated: bool = False) -> ExistsRow:
    return ExistsRow(DCR_EVENT_STATE, _where_event(event), negated=negated)


def enabledness_guard(model: DcrModelIR, event: str) -> Guard:
    """Included, and every included condition source has happened."""
    parts: list[Guard] = [_flag(event, "included", True)]
    for source in model.condition_sources(event):
        parts.append(g_or(_flag(source, "included", False), _flag(source, "happened", True)))
    guard = g_and(*parts)
    assert guard is not None
    return guard


def _apply_actions(model: DcrModelIR, event: str) -> list:
    """Self update, then responses, then includes, then excludes."""
    actions: list = [
        UpdateRows(
            DCR_EVENT_STATE,
            where=_where_event(event),
            sets=(
                ("happened", Lit(True)),
                ("restless", Lit(False)),
                ("ts", TriggerField("ts")),
            ),
        )
    ]
    for target in model.responses_of(event):
        actions.append(
            UpdateRows(
                DCR_EVENT_STATE,
                where=_where_event(target),
                sets=(("restless", Lit(True)), ("ts", TriggerField("ts"))),
            )
        )
    for target in model.includes_of(event):
        actions.append(
            UpdateRows(
                DCR_EVENT_STATE,
                where=_where_event(target),
                sets=(("included", Lit(True)), ("ts", TriggerField("ts"))),
            )
        )
    for target in model.excludes_of(event):
        actions.append(
            UpdateRows(
                DCR_EVENT_STATE,
                where=_where_event(target),
                sets=(("included", Lit(False)), ("ts", TriggerField("ts"))),
            )
        )
    return actions


def event_rules(
    model: DcrModelIR,
    pm_id: int,
    prefix: str,
    event: str,
    extra_actions: tuple = (),
) -> list[RuleIR]:
    """Apply + reject rule pair for one model event.

    ``extra_actions`` run after a successful apply (used by hybrid hosts to
    erase sub-process state and resume the outer flow on terminators).
    """
    trigger = Trigger(
        PROCESS_EVENT,
        pm_id=pm_id,
        node_ids=frozenset({event}),
        states=frozenset({"completed"}),
    )
    enabled = enabledness_guard(model, event)
    # The rejection check precedes the apply rule: applying may flip the
    # event's own flags (self-exclusion), so enabledness must be judged on
    # the marking as the event arrived.
    apply_rule = RuleIR(
        id=f"{prefix}:105:apply:{event}",
        trigger=trigger,
        guard=enabled,
        actions=tuple(_apply_actions(model, event)) + tuple(extra_actions),
    )
    reject_detail = CaseWhen(
        branches=(
            (_row_exists(event), Lit("event is not enabled in the current marking")),
        ),
        default=Lit("no event state for this case (not initialized or already closed)"),
    )
    reject_rule = RuleIR(
        id=f"{prefix}:100:reject:{event}",
        trigger=trigger,
        guard=GuardNot(enabled),
        actions=(
            EmitRecord(
                DIAGNOSTICS,
                (
                    ("kind", Lit("dcr-rejected")),
                    ("pmID", TriggerField("pmID")),
                    ("caseID", TriggerField("caseID")),
                    ("nodeID", TriggerField("nodeID")),
                    ("detail", reject_detail),
                    ("ts", TriggerField("ts")),
                ),
            ),
        ),
    )
    return [apply_rule, reject_rule]


def compile_dcr(model: DcrModelIR) -> CompiledModel:
    prefix = rule_prefix(model.pm_id, model.version)
    compiled = CompiledModel(model.pm_id, model.version, "dcr", [])
    for event in sorted(model.events):
        rules = event_rules(model, model.pm_id, prefix, event)
        compiled.rules.extend(rules)
        compiled.node_rules[event] = [r.id for r in rules]
    return compiled


def initial_rows(model: DcrModelIR, case_id: int, ts: int, pm_id: int | None = None) -> list[dict]:
    """One event-state row per model event, following the file's marking."""
    pm = model.pm_id if pm_id is None else pm_id
    return [
        {
            "pmID": pm,
            "caseID": case_id,
            "eventID": event,
            "happened": event in model.marking.executed,
            "included": event in model.marking.included,
            "restless": event in model.marking.pending,
            "ts": ts,
        }
        for event in model.events
    ]


def init_case_state(
    engine: RuleEngine, model: DcrModelIR, case_id: int, ts: int, pm_id: int | None = None
) -> list[dict]:
    """Populate the event-state rows for a fresh case; duplicate init errors."""
    table = engine.table(DCR_EVENT_STATE)
    rows = initial_rows(model, case_id, ts, pm_id)
    for row in rows:
        if table.get(table.key_of(row)) is not None:
            raise DcrStateError(
                f"case {case_id} already initialized for model {row['pmID']}"
            )
    for row in rows:
        table.insert(row)
    return rows


def enabled_events(
    engine: RuleEngine, model: DcrModelIR, case_id: int, pm_id: int | None = None
) -> set[str]:
    """Events currently executable: included with all conditions satisfied."""
    pm = model.pm_id if pm_id is None else pm_id
    rows = {
        r["eventID"]: r
        for r in engine.table(DCR_EVENT_STATE).scan()
        if r["pmID"] == pm and r["caseID"] == case_id
    }
    if not rows:
        raise DcrStateError(f"case {case_id} has no event state for model {pm}")
    enabled = set()
    for event in model.events:
        row = rows.get(event)
        if row is None or not row["included"]:
            continue
        if all(
            (not rows[src]["included"]) or rows[src]["happened"]
            for src in model.condition_sources(event)
            if src in rows
        ):
            enabled.add(event)
    return enabled


def accepting(engine: RuleEngine, pm_id: int, case_id: int) -> bool:
    """No included event remains restless."""
    return not any(
        r["included"] and r["restless"]
        for r in engine.table(DCR_EVENT_STATE).scan()
        if r["pmID"] == pm_id and r["caseID"] == case_id
    )
