"""Rule engine: reacts to one stream record at a time, run-to-completion.

Ingesting an event processes a synchronous cascade: every matching rule
fires in rule-id order, emitted events append to a FIFO queue, and table
mutations become visible to later rules in the same cascade. The cascade is
a pure function of (engine state, event): replaying a logged event sequence
against a fresh engine reproduces identical table contents at every step.

Guard or action evaluation errors abort the cascade and surface as a fault
diagnostic; other cases are unaffected because state is keyed by
(model, case).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from caseflow import exprlang
from caseflow.events import LifecycleState, RawExecutionEvent
from caseflow.cql.schema import Row, SchemaDef, SchemaError, Table
from caseflow.cql.rules import (
    Action,
    CaseWhen,
    Cmp,
    CondExpr,
    DeleteRows,
    DiagnosticEvent,
    EmitRecord,
    ExistsRow,
    Guard,
    GuardAnd,
    GuardNot,
    GuardOr,
    JoinedField,
    Lit,
    MapMerge,
    MergeUpsert,
    PairTsGeq,
    RowConstraint,
    RowField,
    RuleIR,
    TriggerField,
    UpdateRows,
)

logger = logging.getLogger(__name__)

EVENT_FIELDS = ("pmID", "caseID", "nodeID", "state", "payload", "ts")


class EngineError(RuntimeError):
    """Engine misuse: unknown names, duplicate ids, unbound references."""


@dataclass
class TableChange:
    table: str
    action: str  # insert | update | delete
    key: tuple
    row: Row | None


@dataclass
class ProcessedEvent:
    event: RawExecutionEvent
    stream: str
    fired_rules: list[str] = field(default_factory=list)
    changes: list[TableChange] = field(default_factory=list)
    emitted: list[RawExecutionEvent] = field(default_factory=list)


@dataclass
class Cascade:
    """Everything one ingested event caused, in deterministic order."""

    events: list[RawExecutionEvent] = field(default_factory=list)
    steps: list[ProcessedEvent] = field(default_factory=list)
    records: list[tuple[str, dict]] = field(default_factory=list)
    diagnostics: list[DiagnosticEvent] = field(default_factory=list)
    fault: DiagnosticEvent | None = None

    @property
    def emitted(self) -> list[RawExecutionEvent]:
        return self.events[1:]

    @property
    def ok(self) -> bool:
        return self.fault is None


@dataclass
class _Context:
    trigger: RawExecutionEvent
    joined: dict[str, Row]
    row: Row | None = None


def _trigger_field(event: RawExecutionEvent, name: str) -> Any:
    if name == "pmID":
        return event.pm_id
    if name == "caseID":
        return event.case_id
    if name == "nodeID":
        return event.node_id
    if name == "state":
        return event.state.value
    if name == "payload":
        return dict(event.payload)
    if name == "ts":
        return event.ts
    raise EngineError(f"unknown trigger field {name!r}")


class RuleEngine:
    """Named streams, keyed tables, and triggered rules over them."""

    def __init__(
        self,
        process_stream: str = "Process_Event",
        diagnostics_stream: str = "Diagnostics",
        max_cascade_steps: int = 100_000,
    ):
        self.process_stream = process_stream
        self.diagnostics_stream = diagnostics_stream
        self.max_cascade_steps = max_cascade_steps
        self.schemas: dict[str, SchemaDef] = {}
        self.tables: dict[str, Table] = {}
        self.rules: dict[str, RuleIR] = {}
        self._subscribers: dict[str, list[Callable[[str, dict], None]]] = {}
        self._index: dict[str, list[RuleIR]] = {}

    # -- registry ----------------------------------------------------------

    def register_schema(self, schema: SchemaDef) -> None:
        if schema.name in self.schemas:
            raise EngineError(f"schema {schema.name!r} already registered")
        self.schemas[schema.name] = schema
        if schema.kind == "table":
            self.tables[schema.name] = Table(schema)

    def has_schema(self, name: str) -> bool:
        return name in self.schemas

    def table(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise EngineError(f"unknown table {name!r}") from None

    def deploy_rule(self, rule: RuleIR) -> str:
        if rule.id in self.rules:
            raise EngineError(f"duplicate rule id {rule.id!r}")
        self._validate_rule(rule)
        self.rules[rule.id] = rule
        self._reindex()
        return rule.id

    def deploy_rules(self, rules: Iterable[RuleIR]) -> list[str]:
        staged = list(rules)
        for rule in staged:
            if rule.id in self.rules:
                raise EngineError(f"duplicate rule id {rule.id!r}")
            self._validate_rule(rule)
        for rule in staged:
            self.rules[rule.id] = rule
        self._reindex()
        return [r.id for r in staged]

    def undeploy_rule(self, rule_id: str) -> bool:
        removed = self.rules.pop(rule_id, None) is not None
        if removed:
            self._reindex()
        return removed

    def replace_rule(self, rule: RuleIR) -> None:
        self.rules[rule.id] = rule
        self._reindex()

    def subscribe(self, stream: str, callback: Callable[[str, dict], None]) -> None:
        self._subscribers.setdefault(stream, []).append(callback)

    def _reindex(self) -> None:
        index: dict[str, list[RuleIR]] = {}
        for rule in self.rules.values():
            index.setdefault(rule.trigger.stream, []).append(rule)
        for bucket in index.values():
            bucket.sort(key=lambda r: r.id)
        self._index = index

    def _validate_rule(self, rule: RuleIR) -> None:
        if rule.trigger.stream not in self.schemas:
            raise EngineError(f"rule {rule.id!r} triggers on unknown stream {rule.trigger.stream!r}")
        aliases = set()
        for join in rule.joins:
            if join.table not in self.tables:
                raise EngineError(f"rule {rule.id!r} joins unknown table {join.table!r}")
            if join.alias in aliases:
                raise EngineError(f"rule {rule.id!r} reuses join alias {join.alias!r}")
            aliases.add(join.alias)
        for action in rule.actions:
            if isinstance(action, (MergeUpsert, UpdateRows, DeleteRows)):
                if action.table not in self.tables:
                    raise EngineError(f"rule {rule.id!r} writes unknown table {action.table!r}")
            elif isinstance(action, EmitRecord):
                if action.stream != self.diagnostics_stream and action.stream not in self.schemas:
                    raise EngineError(f"rule {rule.id!r} emits to unknown stream {action.stream!r}")
        for guard in _walk_guards(rule.guard):
            if isinstance(guard, (ExistsRow, PairTsGeq)) and guard.table not in self.tables:
                raise EngineError(f"rule {rule.id!r} queries unknown table {guard.table!r}")
        for value in _walk_values(rule):
            if isinstance(value, JoinedField) and value.alias not in aliases:
                raise EngineError(
                    f"rule {rule.id!r} references unbound join alias {value.alias!r}"
                )

    # -- queries -----------------------------------------------------------

    def query_table(self, table: str, **equals: Any) -> list[Row]:
        return [dict(r) for r in self.table(table).select(**equals)]

    def exists_check(self, atom: ExistsRow, event: RawExecutionEvent) -> bool:
        """Evaluate an exists-subquery atom against the current tables.

        The event supplies the trigger-field bindings the atom's
        constraints may reference.
        """
        return self._eval_guard(atom, _Context(trigger=event, joined={}))

    def dump_tables(self) -> dict[str, str]:
        return {name: tbl.snapshot_csv() for name, tbl in sorted(self.tables.items())}

    # -- ingestion ---------------------------------------------------------

    def ingest(self, event: RawExecutionEvent, stream: str | None = None) -> Cascade:
        """Process one external event to quiescence, returning the cascade."""
        stream = stream or self.process_stream
        cascade = Cascade()
        queue: deque[tuple[str, RawExecutionEvent]] = deque([(stream, event)])
        steps = 0
        while queue:
            current_stream, current = queue.popleft()
            steps += 1
            if steps > self.max_cascade_steps:
                cascade.fault = self._diagnostic(
                    "cascade-overflow",
                    current,
                    f"cascade exceeded {self.max_cascade_steps} steps; rule set is not quiescent",
                    cascade,
                )
                break
            step = ProcessedEvent(event=current, stream=current_stream)
            cascade.events.append(current)
            cascade.steps.append(step)
            try:
                self._apply_rules(current_stream, current, step, cascade, queue)
            except exprlang.EvalError as exc:
                cascade.fault = self._diagnostic("guard-error", current, str(exc), cascade)
                break
            except (SchemaError, EngineError) as exc:
                cascade.fault = self._diagnostic("engine-fault", current, str(exc), cascade)
                break
        return cascade

    def _apply_rules(
        self,
        stream: str,
        event: RawExecutionEvent,
        step: ProcessedEvent,
        cascade: Cascade,
        queue: deque,
    ) -> None:
        for rule in self._index.get(stream, ()):  # sorted by rule id
            if not self._matches(rule, event):
                continue
            ctx = self._resolve_joins(rule, event)
            if ctx is None:
                continue
            if rule.guard is not None and not self._eval_guard(rule.guard, ctx):
                continue
            step.fired_rules.append(rule.id)
            for action in rule.actions:
                self._run_action(action, ctx, step, cascade, queue)

    def _matches(self, rule: RuleIR, event: RawExecutionEvent) -> bool:
        t = rule.trigger
        if t.pm_id is not None and event.pm_id != t.pm_id:
            return False
        if t.node_ids is not None and event.node_id not in t.node_ids:
            return False
        if t.states is not None and event.state.value not in t.states:
            return False
        if rule.case_filter is not None and not rule.case_filter.matches(event.case_id):
            return False
        return True

    def _resolve_joins(self, rule: RuleIR, event: RawExecutionEvent) -> _Context | None:
        joined: dict[str, Row] = {}
        for join in rule.joins:
            equals = {tf: _trigger_field(event, ef) for tf, ef in join.on}
            rows = self.table(join.table).select(**equals)
            if not rows:
                return None
            joined[join.alias] = rows[0]
        return _Context(trigger=event, joined=joined)

    # -- evaluation --------------------------------------------------------

    def _eval_value(self, value, ctx: _Context) -> Any:
        if isinstance(value, Lit):
            return value.value
        if isinstance(value, TriggerField):
            return _trigger_field(ctx.trigger, value.name)
        if isinstance(value, JoinedField):
            row = ctx.joined.get(value.alias)
            if row is None:
                raise EngineError(f"unbound join alias {value.alias!r}")
            return row[value.name]
        if isinstance(value, RowField):
            if ctx.row is None:
                raise EngineError("row field referenced outside an update")
            return ctx.row[value.name]
        if isinstance(value, MapMerge):
            base = dict(self._eval_value(value.base, ctx))
            base.update(self._eval_value(value.overlay, ctx))
            return base
        if isinstance(value, CaseWhen):
            for guard, expr in value.branches:
                if self._eval_guard(guard, ctx):
                    return self._eval_value(expr, ctx)
            return self._eval_value(value.default, ctx)
        raise EngineError(f"unknown value expression {value!r}")

    def _eval_guard(self, guard: Guard, ctx: _Context) -> bool:
        if isinstance(guard, GuardAnd):
            return all(self._eval_guard(i, ctx) for i in guard.items)
        if isinstance(guard, GuardOr):
            return any(self._eval_guard(i, ctx) for i in guard.items)
        if isinstance(guard, GuardNot):
            return not self._eval_guard(guard.item, ctx)
        if isinstance(guard, Cmp):
            left = self._eval_value(guard.left, ctx)
            right = self._eval_value(guard.right, ctx)
            return _apply_op(guard.op, left, right)
        if isinstance(guard, CondExpr):
            bindings = self._eval_value(guard.bindings, ctx)
            if not isinstance(bindings, dict):
                raise EngineError("condition bindings must be a map value")
            return exprlang.evaluate_bool(guard.expr, bindings)
        if isinstance(guard, ExistsRow):
            found = self._exists(guard, ctx)
            return not found if guard.negated else found
        if isinstance(guard, PairTsGeq):
            found = self._pair_ts_geq(guard, ctx)
            return not found if guard.negated else found
        raise EngineError(f"unknown guard {guard!r}")

    def _exists(self, guard: ExistsRow, ctx: _Context) -> bool:
        table = self.table(guard.table)
        resolved = [(c.field, c.op, self._eval_value(c.value, ctx)) for c in guard.constraints]
        equals = {f: v for f, op, v in resolved if op == "="}
        if set(table.schema.keys) <= set(equals):
            candidates = table.select(**{k: equals[k] for k in table.schema.keys})
        else:
            candidates = list(table.scan())
        for row in candidates:
            if all(_apply_op(op, row.get(f), v) for f, op, v in resolved):
                return True
        return False

    def _pair_ts_geq(self, guard: PairTsGeq, ctx: _Context) -> bool:
        table = self.table(guard.table)
        base = {f: self._eval_value(v, ctx) for f, v in guard.key}
        rows_a = table.select(**base, **{guard.node_field: guard.node_a})
        rows_b = table.select(**base, **{guard.node_field: guard.node_b})
        if not rows_a or not rows_b:
            return False
        return rows_a[0]["ts"] >= rows_b[0]["ts"]

    # -- actions -----------------------------------------------------------

    def _run_action(
        self,
        action: Action,
        ctx: _Context,
        step: ProcessedEvent,
        cascade: Cascade,
        queue: deque,
    ) -> None:
        if isinstance(action, EmitRecord):
            record = {name: self._eval_value(v, ctx) for name, v in action.fields}
            cascade.records.append((action.stream, record))
            if action.stream == self.diagnostics_stream:
                diag = DiagnosticEvent(
                    kind=str(record.get("kind", "diagnostic")),
                    pm_id=int(record.get("pmID", ctx.trigger.pm_id)),
                    case_id=int(record.get("caseID", ctx.trigger.case_id)),
                    node_id=str(record.get("nodeID", ctx.trigger.node_id)),
                    detail=str(record.get("detail", "")),
                    ts=int(record.get("ts", ctx.trigger.ts)),
                )
                cascade.diagnostics.append(diag)
                self._notify(action.stream, diag.to_wire())
                return
            self._notify(action.stream, record)
            if action.stream == self.process_stream or self._index.get(action.stream):
                derived = _record_to_event(record)
                step.emitted.append(derived)
                queue.append((action.stream, derived))
            return
        if isinstance(action, MergeUpsert):
            table = self.table(action.table)
            key_values = {f: self._eval_value(v, ctx) for f, v in action.key}
            key = tuple(key_values[k] for k in table.schema.keys)
            existing = table.get(key)
            if existing is None:
                row = {f: self._eval_value(v, ctx) for f, v in action.on_insert}
                table.validate_row(row)
                table.rows[key] = row
                step.changes.append(TableChange(action.table, "insert", key, dict(row)))
            else:
                ctx.row = existing
                updates = {f: self._eval_value(v, ctx) for f, v in action.on_match}
                ctx.row = None
                new_row = {**existing, **updates}
                table.validate_row(new_row)
                table.rows[key] = new_row
                step.changes.append(TableChange(action.table, "update", key, dict(new_row)))
            return
        if isinstance(action, UpdateRows):
            table = self.table(action.table)
            matching = self._rows_matching(table, action.where, ctx)
            for row in matching:
                key = table.key_of(row)
                ctx.row = row
                updates = {f: self._eval_value(v, ctx) for f, v in action.sets}
                ctx.row = None
                for pk in table.schema.keys:
                    if pk in updates and updates[pk] != row[pk]:
                        raise EngineError("updating primary-key fields is not supported")
                new_row = {**row, **updates}
                table.validate_row(new_row)
                table.rows[key] = new_row
                step.changes.append(TableChange(action.table, "update", key, dict(new_row)))
            return
        if isinstance(action, DeleteRows):
            table = self.table(action.table)
            for row in self._rows_matching(table, action.where, ctx):
                key = table.key_of(row)
                table.delete(key)
                step.changes.append(TableChange(action.table, "delete", key, None))
            return
        raise EngineError(f"unknown action {action!r}")

    def _rows_matching(self, table: Table, where, ctx: _Context) -> list[Row]:
        resolved = [(c.field, c.op, self._eval_value(c.value, ctx)) for c in where]
        equals = {f: v for f, op, v in resolved if op == "="}
        if set(table.schema.keys) <= set(equals):
            candidates = table.select(**{k: equals[k] for k in table.schema.keys})
        else:
            candidates = list(table.scan())
        return [
            row
            for row in candidates
            if all(_apply_op(op, row.get(f), v) for f, op, v in resolved)
        ]

    # -- plumbing ----------------------------------------------------------

    def _notify(self, stream: str, record: dict) -> None:
        for callback in self._subscribers.get(stream, ()):
            callback(stream, record)

    def _diagnostic(
        self, kind: str, event: RawExecutionEvent, detail: str, cascade: Cascade
    ) -> DiagnosticEvent:
        diag = DiagnosticEvent(
            kind=kind,
            pm_id=event.pm_id,
            case_id=event.case_id,
            node_id=event.node_id,
            detail=detail,
            ts=event.ts,
        )
        cascade.diagnostics.append(diag)
        self._notify(self.diagnostics_stream, diag.to_wire())
        logger.warning("%s for case %s/%s: %s", kind, event.pm_id, event.case_id, detail)
        return diag


def _apply_op(op: str, left: Any, right: Any) -> bool:
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if op == "in":
        return left in right
    if op == "not-in":
        return left not in right
    if left is None or right is None:
        return False
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise EngineError(f"unknown comparison operator {op!r}")


def _record_to_event(record: dict) -> RawExecutionEvent:
    missing = [f for f in EVENT_FIELDS if f not in record]
    if missing:
        raise EngineError(f"record on a rule-bearing stream misses event fields {missing}")
    return RawExecutionEvent(
        pm_id=record["pmID"],
        case_id=record["caseID"],
        node_id=record["nodeID"],
        state=LifecycleState(record["state"]),
        payload=record["payload"],
        ts=record["ts"],
    )


def _walk_guards(guard: Guard | None):
    if guard is None:
        return
    stack = [guard]
    while stack:
        g = stack.pop()
        yield g
        if isinstance(g, GuardAnd) or isinstance(g, GuardOr):
            stack.extend(g.items)
        elif isinstance(g, GuardNot):
            stack.append(g.item)


def _walk_values(rule: RuleIR):
    def from_value(value):
        yield value
        if isinstance(value, MapMerge):
            yield from from_value(value.base)
            yield from from_value(value.overlay)
        elif isinstance(value, CaseWhen):
            for guard, expr in value.branches:
                yield from from_guard(guard)
                yield from from_value(expr)
            yield from from_value(value.default)

    def from_guard(guard):
        if isinstance(guard, Cmp):
            yield from from_value(guard.left)
            yield from from_value(guard.right)
        elif isinstance(guard, CondExpr):
            yield from from_value(guard.bindings)
        elif isinstance(guard, ExistsRow):
            for c in guard.constraints:
                yield from from_value(c.value)
        elif isinstance(guard, PairTsGeq):
            for _, v in guard.key:
                yield from from_value(v)
        elif isinstance(guard, (GuardAnd, GuardOr)):
            for item in guard.items:
                yield from from_guard(item)
        elif isinstance(guard, GuardNot):
            yield from from_guard(guard.item)

    if rule.guard is not None:
        yield from from_guard(rule.guard)
    for action in rule.actions:
        if isinstance(action, EmitRecord):
            for _, v in action.fields:
                yield from from_value(v)
        elif isinstance(action, MergeUpsert):
            for _, v in action.key + action.on_match + action.on_insert:
                yield from from_value(v)
        elif isinstance(action, UpdateRows):
            for c in action.where:
                yield from from_value(c.value)
            for _, v in action.sets:
                yield from from_value(v)
        elif isinstance(action, DeleteRows):
            for c in action.where:
                yield from from_value(c.value)
