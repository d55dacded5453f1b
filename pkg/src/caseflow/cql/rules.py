"""Triggered-rule intermediate representation and its CQL-like renderer.

A rule is data, not code: a trigger filter over one stream, optional table
joins, a guard tree over comparisons / condition expressions / exists
subquery atoms, and an ordered action list. The engine interprets the IR;
``render_rule`` prints it in a CQL-like surface syntax for debugging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from caseflow import exprlang

# ---------------------------------------------------------------------------
# Value expressions (evaluated against trigger event + joined rows)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class TriggerField:
    """A field of the triggering event, by wire name (pmID, nodeID, ts, ...)."""

    name: str


@dataclass(frozen=True)
class JoinedField:
    """A field of a joined table row, by join alias."""

    alias: str
    name: str


@dataclass(frozen=True)
class RowField:
    """A field of the row being updated (valid in UpdateRows sets only)."""

    name: str


@dataclass(frozen=True)
class MapMerge:
    """Key-by-key merge of two map values; overlay wins."""

    base: "ValueExpr"
    overlay: "ValueExpr"


@dataclass(frozen=True)
class CaseWhen:
    """First branch whose guard holds provides the value."""

    branches: tuple[tuple["Guard", "ValueExpr"], ...]
    default: "ValueExpr"


ValueExpr = Union[Lit, TriggerField, JoinedField, RowField, MapMerge, CaseWhen]


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cmp:
    left: ValueExpr
    op: str  # = != < <= > >= in not-in
    right: ValueExpr


@dataclass(frozen=True)
class CondExpr:
    """Edge-condition expression evaluated over a map value (case variables)."""

    expr: exprlang.Expression
    bindings: ValueExpr
    source: str = ""  # original condition text, for rendering


@dataclass(frozen=True)
class RowConstraint:
    field: str
    op: str  # = != in not-in <= >=
    value: ValueExpr


@dataclass(frozen=True)
class ExistsRow:
    """Exists-subquery atom: at least one row satisfies the constraints."""

    table: str
    constraints: tuple[RowConstraint, ...]
    negated: bool = False


@dataclass(frozen=True)
class PairTsGeq:
    """Atom over two keyed rows: row(node_a).ts >= row(node_b).ts.

    Both rows are addressed by the shared key constraints plus their node
    value in ``node_field``; a missing row makes the atom false.
    """

    table: str
    key: tuple[tuple[str, ValueExpr], ...]
    node_field: str
    node_a: str
    node_b: str
    negated: bool = False


@dataclass(frozen=True)
class GuardAnd:
    items: tuple["Guard", ...]


@dataclass(frozen=True)
class GuardOr:
    items: tuple["Guard", ...]


@dataclass(frozen=True)
class GuardNot:
    item: "Guard"


Guard = Union[Cmp, CondExpr, ExistsRow, PairTsGeq, GuardAnd, GuardOr, GuardNot]


def g_and(*items: Guard | None) -> Guard | None:
    kept = tuple(i for i in items if i is not None)
    if not kept:
        return None
    if len(kept) == 1:
        return kept[0]
    return GuardAnd(kept)


def g_or(*items: Guard) -> Guard:
    if len(items) == 1:
        return items[0]
    return GuardOr(tuple(items))


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmitRecord:
    """Emit a record onto a named stream; event-shaped records may trigger rules."""

    stream: str
    fields: tuple[tuple[str, ValueExpr], ...]


@dataclass(frozen=True)
class MergeUpsert:
    """Upsert exactly the row addressed by the key expressions."""

    table: str
    key: tuple[tuple[str, ValueExpr], ...]
    on_match: tuple[tuple[str, ValueExpr], ...]
    on_insert: tuple[tuple[str, ValueExpr], ...]


@dataclass(frozen=True)
class UpdateRows:
    table: str
    where: tuple[RowConstraint, ...]
    sets: tuple[tuple[str, ValueExpr], ...]


@dataclass(frozen=True)
class DeleteRows:
    table: str
    where: tuple[RowConstraint, ...]


Action = Union[EmitRecord, MergeUpsert, UpdateRows, DeleteRows]


@dataclass(frozen=True)
class DiagnosticEvent:
    """Engine-raised diagnostic; carried on the diagnostics stream."""

    kind: str
    pm_id: int
    case_id: int
    node_id: str
    detail: str
    ts: int

    def to_wire(self) -> dict:
        return {
            "kind": self.kind,
            "pmID": self.pm_id,
            "caseID": self.case_id,
            "nodeID": self.node_id,
            "detail": self.detail,
            "ts": self.ts,
        }


# ---------------------------------------------------------------------------
# The rule itself
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trigger:
    """Filter selecting which stream records fire the rule."""

    stream: str
    pm_id: int | None = None
    node_ids: frozenset[str] | None = None
    states: frozenset[str] | None = None


@dataclass(frozen=True)
class TableJoin:
    """Equi-join against a keyed table; a missing row blocks the rule."""

    table: str
    alias: str
    on: tuple[tuple[str, str], ...]  # (table_field, trigger_field)


@dataclass(frozen=True)
class CaseFilter:
    """Case-identifier partition for live model migration."""

    op: str  # "<=" or ">"
    bound: int

    def matches(self, case_id: int) -> bool:
        return case_id <= self.bound if self.op == "<=" else case_id > self.bound


@dataclass(frozen=True)
class RuleIR:
    id: str
    trigger: Trigger
    joins: tuple[TableJoin, ...] = ()
    guard: Guard | None = None
    actions: tuple[Action, ...] = ()
    case_filter: CaseFilter | None = None

    def with_case_filter(self, case_filter: CaseFilter) -> "RuleIR":
        return RuleIR(self.id, self.trigger, self.joins, self.guard, self.actions, case_filter)

    def with_id(self, rule_id: str) -> "RuleIR":
        return RuleIR(rule_id, self.trigger, self.joins, self.guard, self.actions, self.case_filter)


# ---------------------------------------------------------------------------
# CQL-like rendering
# ---------------------------------------------------------------------------


def _render_scalar(value: object) -> str:
    if isinstance(value, str):
        return f"'{value}'"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, frozenset, list, set)):
        return "(" + ", ".join(sorted(_render_scalar(v) for v in value)) + ")"
    return str(value)


def render_value(value: ValueExpr) -> str:
    if isinstance(value, Lit):
        return _render_scalar(value.value)
    if isinstance(value, TriggerField):
        return f"pred.{value.name}"
    if isinstance(value, JoinedField):
        return f"{value.alias}.{value.name}"
    if isinstance(value, RowField):
        return f"row.{value.name}"
    if isinstance(value, MapMerge):
        return f"merge({render_value(value.base)}, {render_value(value.overlay)})"
    if isinstance(value, CaseWhen):
        parts = ["case"]
        for guard, expr in value.branches:
            parts.append(f"when {render_guard(guard)} then {render_value(expr)}")
        parts.append(f"else {render_value(value.default)} end")
        return " ".join(parts)
    return repr(value)


def render_guard(guard: Guard) -> str:
    if isinstance(guard, Cmp):
        return f"{render_value(guard.left)} {guard.op} {render_value(guard.right)}"
    if isinstance(guard, CondExpr):
        text = guard.source or exprlang.render(guard.expr)
        return f"evaluate({render_value(guard.bindings)}, <{text}>)"
    if isinstance(guard, ExistsRow):
        conds = " and ".join(
            f"H.{c.field} {c.op} {render_value(c.value)}" for c in guard.constraints
        )
        prefix = "not exists" if guard.negated else "exists"
        return f"{prefix} (select 1 from {guard.table} as H where {conds})"
    if isinstance(guard, PairTsGeq):
        keys = " and ".join(
            f"A.{f} = {render_value(v)} and B.{f} = {render_value(v)}" for f, v in guard.key
        )
        body = (
            f"select 1 from {guard.table} as A, {guard.table} as B where {keys} "
            f"and A.{guard.node_field} = '{guard.node_a}' and B.{guard.node_field} = '{guard.node_b}' "
            f"and A.ts >= B.ts"
        )
        return ("not exists (" if guard.negated else "exists (") + body + ")"
    if isinstance(guard, GuardAnd):
        return "(" + " and ".join(render_guard(i) for i in guard.items) + ")"
    if isinstance(guard, GuardOr):
        return "(" + " or ".join(render_guard(i) for i in guard.items) + ")"
    if isinstance(guard, GuardNot):
        return f"not ({render_guard(guard.item)})"
    return repr(guard)


def _render_action(action: Action) -> str:
    if isinstance(action, EmitRecord):
        names = ", ".join(n for n, _ in action.fields)
        values = ", ".join(render_value(v) for _, v in action.fields)
        return f"insert into {action.stream}({names})\n  select {values}"
    if isinstance(action, MergeUpsert):
        keys = " and ".join(f"es.{f} = {render_value(v)}" for f, v in action.key)
        match = ", ".join(f"es.{f} = {render_value(v)}" for f, v in action.on_match)
        ins_names = ", ".join(f for f, _ in action.on_insert)
        ins_vals = ", ".join(render_value(v) for _, v in action.on_insert)
        return (
            f"merge {action.table} as es on {keys}\n"
            f"  when matched then update set {match}\n"
            f"  when not matched then insert ({ins_names}) values ({ins_vals})"
        )
    if isinstance(action, UpdateRows):
        where = " and ".join(f"t.{c.field} {c.op} {render_value(c.value)}" for c in action.where)
        sets = ", ".join(f"t.{f} = {render_value(v)}" for f, v in action.sets)
        return f"update {action.table} as t set {sets} where {where}"
    if isinstance(action, DeleteRows):
        where = " and ".join(f"t.{c.field} {c.op} {render_value(c.value)}" for c in action.where)
        return f"delete from {action.table} as t where {where}"
    return repr(action)


def render_rule(rule: RuleIR) -> str:
    """Pretty-print one rule in CQL-like text."""
    t = rule.trigger
    filters = []
    if t.pm_id is not None:
        filters.append(f"pmID = {t.pm_id}")
    if t.node_ids is not None:
        filters.append(f"nodeID in {_render_scalar(t.node_ids)}")
    if t.states is not None:
        filters.append(f"state in {_render_scalar(t.states)}")
    if rule.case_filter is not None:
        filters.append(f"caseID {rule.case_filter.op} {rule.case_filter.bound}")
    head = f"on {t.stream}({', '.join(filters)}) as pred"
    lines = [f"-- rule {rule.id}", head]
    for join in rule.joins:
        on = " and ".join(f"{join.alias}.{tf} = pred.{ef}" for tf, ef in join.on)
        lines.append(f"join {join.table} as {join.alias} on {on}")
    if rule.guard is not None:
        lines.append(f"where {render_guard(rule.guard)}")
    for action in rule.actions:
        lines.append(_render_action(action) + ";")
    return "\n".join(lines)


def render_rules(rules: list[RuleIR] | tuple[RuleIR, ...]) -> str:
    return "\n\n".join(render_rule(r) for r in rules) + "\n"
