"""Compiles a validated imperative model into triggered rules.

Per node the compiler instantiates the template family its kind demands:
start events initialize case variables and complete instantly; tasks are
offered (started) or skipped depending on the predecessor state and the
incoming edge condition; split gateways pass lifecycle state through with
branch selection living on each successor's incoming edge; joins
synchronize over the execution-state table; end events route like tasks
and purge the case's completed rows on completion.

Rule ids carry an ordering prefix so that, on one trigger event, the
execution-state merge lands before case-variable updates, which land
before routing and join rules. Join guards read the freshly merged rows of
the very event that triggered them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from caseflow.bpmn.analysis import classify_join_inputs
from caseflow.bpmn.model import BpmnModelIR, NodeKind
from caseflow.cql.rules import (
    Action,
    CaseWhen,
    Cmp,
    CondExpr,
    DeleteRows,
    EmitRecord,
    ExistsRow,
    Guard,
    GuardNot,
    JoinedField,
    Lit,
    MapMerge,
    MergeUpsert,
    PairTsGeq,
    RowConstraint,
    RowField,
    RuleIR,
    TableJoin,
    Trigger,
    TriggerField,
    UpdateRows,
    g_and,
    g_or,
)
from caseflow.tables import CASE_VARIABLES, DIAGNOSTICS, EXECUTION_STATE, PROCESS_EVENT

COMPLETED = "completed"
SKIPPED = "skipped"
STARTED = "started"
TERMINAL = frozenset({COMPLETED, SKIPPED})


@dataclass
class CompiledModel:
    """Rule set of one model version plus the node-to-rule binding."""

    pm_id: int
    version: int
    kind: str
    rules: list[RuleIR]
    node_rules: dict[str, list[str]] = field(default_factory=dict)
    shared_rules: list[str] = field(default_factory=list)

    def rule_ids(self) -> list[str]:
        return [r.id for r in self.rules]


def rule_prefix(pm_id: int, version: int) -> str:
    return f"m{pm_id:05d}v{version:05d}"


def _key_pm_case() -> tuple:
    return (("pmID", TriggerField("pmID")), ("caseID", TriggerField("caseID")))


def _where_pm_case() -> tuple:
    return (
        RowConstraint("pmID", "=", TriggerField("pmID")),
        RowConstraint("caseID", "=", TriggerField("caseID")),
    )


def _cv_join() -> TableJoin:
    return TableJoin(CASE_VARIABLES, "CV", (("pmID", "pmID"), ("caseID", "caseID")))


def _exists_state(node: str, state, ts_bounded: bool = True) -> ExistsRow:
    """Row of ``node`` for the trigger's case with the given state spec.

    ``state`` may be a literal string, a set of strings, or a ValueExpr
    (to match the trigger's own state).
    """
    constraints = list(_where_pm_case())
    constraints.append(RowConstraint("nodeID", "=", Lit(node)))
    if isinstance(state, str):
        constraints.append(RowConstraint("state", "=", Lit(state)))
    elif isinstance(state, (set, frozenset)):
        constraints.append(RowConstraint("state", "in", Lit(tuple(sorted(state)))))
    else:
        constraints.append(RowConstraint("state", "=", state))
    if ts_bounded:
        constraints.append(RowConstraint("ts", "<=", TriggerField("ts")))
    return ExistsRow(EXECUTION_STATE, tuple(constraints))


def _row_absent(node: str) -> ExistsRow:
    constraints = list(_where_pm_case())
    constraints.append(RowConstraint("nodeID", "=", Lit(node)))
    return ExistsRow(EXECUTION_STATE, tuple(constraints), negated=True)


def _row_present(node: str) -> ExistsRow:
    constraints = list(_where_pm_case())
    constraints.append(RowConstraint("nodeID", "=", Lit(node)))
    return ExistsRow(EXECUTION_STATE, tuple(constraints))


def _fresh(join: str, waited: tuple[str, ...]) -> Guard:
    """No join row as recent as any waited predecessor row.

    Inside loops this confines a join to one firing per iteration: it can
    fire again only once every waited input has produced a row newer than
    the join's own last row.
    """
    atoms = [
        PairTsGeq(EXECUTION_STATE, _key_pm_case(), "nodeID", join, w) for w in waited
    ]
    return GuardNot(g_or(*atoms))


def _emit_event(node: str, state, payload) -> EmitRecord:
    return EmitRecord(
        PROCESS_EVENT,
        (
            ("pmID", TriggerField("pmID")),
            ("caseID", TriggerField("caseID")),
            ("nodeID", Lit(node)),
            ("state", state),
            ("payload", payload),
            ("ts", TriggerField("ts")),
        ),
    )


def _emit_diagnostic(node: str, kind: str, detail: str) -> EmitRecord:
    return EmitRecord(
        DIAGNOSTICS,
        (
            ("kind", Lit(kind)),
            ("pmID", TriggerField("pmID")),
            ("caseID", TriggerField("caseID")),
            ("nodeID", Lit(node)),
            ("detail", Lit(detail)),
            ("ts", TriggerField("ts")),
        ),
    )


def _edge_condition_guard(model: BpmnModelIR, source: str, target: str) -> Guard | None:
    edge_cond = model.condition(source, target)
    for edge in model.edges:
        if edge.source == source and edge.target == target:
            if not edge.condition_src:
                return None
            return CondExpr(edge_cond, JoinedField("CV", "variables"), edge.condition_src)
    return None


def compile_bpmn(model: BpmnModelIR, naive_or_joins: bool = False) -> CompiledModel:
    """Instantiate the rule templates for every flow node of the model.

    ``naive_or_joins`` disables the loop-aware OR-join wait sets and always
    waits for every input; it exists to demonstrate the deadlock that rule
    produces on loops with multiple entries.
    """
    prefix = rule_prefix(model.pm_id, model.version)
    compiled = CompiledModel(model.pm_id, model.version, "bpmn", [])
    classification = classify_join_inputs(model)
    start = model.start_node

    def add(node_id: str | None, rule: RuleIR) -> None:
        compiled.rules.append(rule)
        if node_id is None:
            compiled.shared_rules.append(rule.id)
        else:
            compiled.node_rules.setdefault(node_id, []).append(rule.id)

    # Execution-state merge: completed/skipped events always upsert; started
    # events upsert only for the start event node (task offers leave the
    # table untouched).
    merge_action = MergeUpsert(
        EXECUTION_STATE,
        key=(*_key_pm_case(), ("nodeID", TriggerField("nodeID"))),
        on_match=(("state", TriggerField("state")), ("ts", TriggerField("ts"))),
        on_insert=(
            ("pmID", TriggerField("pmID")),
            ("caseID", TriggerField("caseID")),
            ("nodeID", TriggerField("nodeID")),
            ("state", TriggerField("state")),
            ("ts", TriggerField("ts")),
        ),
    )
    add(
        None,
        RuleIR(
            id=f"{prefix}:000:exec-merge",
            trigger=Trigger(PROCESS_EVENT, pm_id=model.pm_id, states=TERMINAL),
            actions=(merge_action,),
        ),
    )
    add(
        None,
        RuleIR(
            id=f"{prefix}:001:exec-merge-start",
            trigger=Trigger(
                PROCESS_EVENT,
                pm_id=model.pm_id,
                node_ids=frozenset({start}),
                states=frozenset({STARTED}),
            ),
            actions=(merge_action,),
        ),
    )

    for node in sorted(model.nodes.values(), key=lambda n: n.id):
        if node.kind is NodeKind.START_EVENT:
            add(
                node.id,
                RuleIR(
                    id=f"{prefix}:010:start:{node.id}",
                    trigger=Trigger(
                        PROCESS_EVENT,
                        pm_id=model.pm_id,
                        node_ids=frozenset({node.id}),
                        states=frozenset({STARTED}),
                    ),
                    actions=(
                        MergeUpsert(
                            CASE_VARIABLES,
                            key=_key_pm_case(),
                            on_match=(("variables", TriggerField("payload")),),
                            on_insert=(
                                ("pmID", TriggerField("pmID")),
                                ("caseID", TriggerField("caseID")),
                                ("variables", TriggerField("payload")),
                            ),
                        ),
                        _emit_event(node.id, Lit(COMPLETED), TriggerField("payload")),
                    ),
                ),
            )
            continue

        if node.kind is NodeKind.TASK:
            add(
                node.id,
                RuleIR(
                    id=f"{prefix}:020:vars:{node.id}",
                    trigger=Trigger(
                        PROCESS_EVENT,
                        pm_id=model.pm_id,
                        node_ids=frozenset({node.id}),
                        states=frozenset({COMPLETED}),
                    ),
                    actions=(
                        UpdateRows(
                            CASE_VARIABLES,
                            where=_where_pm_case(),
                            sets=(
                                (
                                    "variables",
                                    MapMerge(RowField("variables"), TriggerField("payload")),
                                ),
                            ),
                        ),
                    ),
                ),
            )

        if model.is_join(node.id):
            if node.kind is NodeKind.AND_GATEWAY:
                for rule in _and_join_rules(model, prefix, node.id):
                    add(node.id, rule)
            elif node.kind is NodeKind.OR_GATEWAY:
                for rule in _or_join_rules(
                    model, prefix, node.id, classification[node.id], naive_or_joins
                ):
                    add(node.id, rule)
            else:
                for rule in _xor_join_rules(model, prefix, node.id, classification[node.id]):
                    add(node.id, rule)
        else:
            add(node.id, _routing_rule(model, prefix, node.id))

        if node.kind is NodeKind.END_EVENT:
            add(
                node.id,
                RuleIR(
                    id=f"{prefix}:800:purge:{node.id}",
                    trigger=Trigger(
                        PROCESS_EVENT,
                        pm_id=model.pm_id,
                        node_ids=frozenset({node.id}),
                        states=frozenset({COMPLETED}),
                    ),
                    actions=(
                        DeleteRows(
                            EXECUTION_STATE,
                            where=(
                                *_where_pm_case(),
                                RowConstraint("nodeID", "!=", Lit(node.id)),
                                RowConstraint("state", "=", Lit(COMPLETED)),
                            ),
                        ),
                    ),
                ),
            )

    return compiled


def _real_state(model: BpmnModelIR, node_id: str) -> str:
    """Lifecycle state a live token produces at this node.

    Tasks and hosted sub-processes are offered to agents; gateways and end
    events are engine-driven and complete instantly.
    """
    kind = model.kind_of(node_id)
    if kind in (NodeKind.TASK, NodeKind.ADHOC_SUBPROCESS):
        return STARTED
    return COMPLETED


def _routing_rule(model: BpmnModelIR, prefix: str, node_id: str) -> RuleIR:
    """Single-input routing: predecessor state plus edge condition decide."""
    (edge,) = model.in_edges(node_id)
    live_guard = g_and(
        Cmp(TriggerField("state"), "=", Lit(COMPLETED)),
        _edge_condition_guard(model, edge.source, node_id),
    )
    state_value = CaseWhen(
        branches=((live_guard, Lit(_real_state(model, node_id))),),
        default=Lit(SKIPPED),
    )
    return RuleIR(
        id=f"{prefix}:500:route:{node_id}",
        trigger=Trigger(
            PROCESS_EVENT,
            pm_id=model.pm_id,
            node_ids=frozenset({edge.source}),
            states=TERMINAL,
        ),
        joins=(_cv_join(),),
        actions=(_emit_event(node_id, state_value, JoinedField("CV", "variables")),),
    )


def _and_join_rules(model: BpmnModelIR, prefix: str, node_id: str) -> list[RuleIR]:
    preds = tuple(sorted(model.predecessors(node_id)))
    trigger = Trigger(
        PROCESS_EVENT, pm_id=model.pm_id, node_ids=frozenset(preds), states=TERMINAL
    )
    all_match_trigger = g_and(
        *[_exists_state(p, TriggerField("state")) for p in preds]
    )
    fire = RuleIR(
        id=f"{prefix}:500:ajoin:{node_id}",
        trigger=trigger,
        joins=(_cv_join(),),
        guard=g_and(all_match_trigger, _fresh(node_id, preds)),
        actions=(
            _emit_event(node_id, TriggerField("state"), JoinedField("CV", "variables")),
        ),
    )
    all_present = g_and(*[_exists_state(p, TERMINAL) for p in preds])
    all_completed = g_and(*[_exists_state(p, COMPLETED) for p in preds])
    all_skipped = g_and(*[_exists_state(p, SKIPPED) for p in preds])
    diag = RuleIR(
        id=f"{prefix}:505:ajoin-diag:{node_id}",
        trigger=trigger,
        guard=g_and(
            all_present,
            GuardNot(all_completed),
            GuardNot(all_skipped),
            _fresh(node_id, preds),
        ),
        actions=(
            _emit_diagnostic(
                node_id,
                "and-join-mixed-input",
                "mixed completed/skipped inputs; parallel join cannot synchronize",
            ),
        ),
    )
    return [fire, diag]


def _or_join_state(waited: tuple[str, ...]) -> CaseWhen:
    any_completed = g_or(*[_exists_state(w, COMPLETED) for w in waited])
    return CaseWhen(branches=((any_completed, Lit(COMPLETED)),), default=Lit(SKIPPED))


def _or_join_rules(
    model: BpmnModelIR,
    prefix: str,
    node_id: str,
    classification,
    naive: bool,
) -> list[RuleIR]:
    preds = tuple(sorted(model.predecessors(node_id)))
    trigger = Trigger(
        PROCESS_EVENT, pm_id=model.pm_id, node_ids=frozenset(preds), states=TERMINAL
    )
    joins = (_cv_join(),)

    def fire_rule(rule_id: str, waited: tuple[str, ...], extra: Guard | None) -> RuleIR:
        all_arrived = g_and(*[_exists_state(w, TERMINAL) for w in waited])
        return RuleIR(
            id=rule_id,
            trigger=trigger,
            joins=joins,
            guard=g_and(extra, all_arrived, _fresh(node_id, waited)),
            actions=(
                _emit_event(node_id, _or_join_state(waited), JoinedField("CV", "variables")),
            ),
        )

    if naive:
        return [fire_rule(f"{prefix}:500:ojoin:{node_id}:naive", preds, None)]

    loopless = tuple(sorted(classification.loopless))
    looping = tuple(sorted(classification.looping))
    if loopless and looping:
        # Loop entry: first activation waits only for loop-less inputs;
        # later activations wait only for inputs inside the loop.
        return [
            fire_rule(
                f"{prefix}:500:ojoin:{node_id}:a-first", loopless, _row_absent(node_id)
            ),
            fire_rule(
                f"{prefix}:500:ojoin:{node_id}:b-next", looping, _row_present(node_id)
            ),
        ]
    waited = looping if looping else loopless
    return [fire_rule(f"{prefix}:500:ojoin:{node_id}", waited, None)]


def _xor_join_rules(
    model: BpmnModelIR, prefix: str, node_id: str, classification
) -> list[RuleIR]:
    """Pass-through of completed inputs; skips forward only for dead groups.

    A completed predecessor event passes through immediately (subject to its
    edge condition). A skipped input is forwarded only when every input of
    the active wait group holds a skipped row, so the join emits a single
    skip for a fully dead region instead of one per dead branch.
    """
    loopless = tuple(sorted(classification.loopless))
    looping = tuple(sorted(classification.looping))
    rules: list[RuleIR] = []

    def completed_rule(label: str, group: tuple[str, ...]) -> RuleIR:
        items = []
        conditioned = False
        for source in group:
            cond = _edge_condition_guard(model, source, node_id)
            if cond is not None:
                conditioned = True
                items.append(g_and(Cmp(TriggerField("nodeID"), "=", Lit(source)), cond))
            else:
                items.append(Cmp(TriggerField("nodeID"), "=", Lit(source)))
        guard = g_or(*items) if conditioned else None
        return RuleIR(
            id=f"{prefix}:500:xjoin:{node_id}:{label}",
            trigger=Trigger(
                PROCESS_EVENT,
                pm_id=model.pm_id,
                node_ids=frozenset(group),
                states=frozenset({COMPLETED}),
            ),
            joins=(_cv_join(),),
            guard=guard,
            actions=(_emit_event(node_id, Lit(COMPLETED), JoinedField("CV", "variables")),),
        )

    def skip_rule(label: str, group: tuple[str, ...], extra: Guard | None) -> RuleIR:
        all_skipped = g_and(*[_exists_state(w, SKIPPED) for w in group])
        return RuleIR(
            id=f"{prefix}:520:xjoin-skip:{node_id}:{label}",
            trigger=Trigger(
                PROCESS_EVENT,
                pm_id=model.pm_id,
                node_ids=frozenset(group),
                states=frozenset({SKIPPED}),
            ),
            joins=(_cv_join(),),
            guard=g_and(extra, all_skipped, _fresh(node_id, group)),
            actions=(_emit_event(node_id, Lit(SKIPPED), JoinedField("CV", "variables")),),
        )

    if loopless:
        rules.append(completed_rule("a-loopless", loopless))
    if looping:
        rules.append(completed_rule("b-looping", looping))
    if loopless and looping:
        rules.append(skip_rule("a-loopless", loopless, _row_absent(node_id)))
        rules.append(skip_rule("b-looping", looping, _row_present(node_id)))
    elif loopless or looping:
        group = looping if looping else loopless
        rules.append(skip_rule("only", group, None))
    return rules
