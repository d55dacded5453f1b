"""Hybrid models: an imperative top level hosting declarative sub-processes.

A binding attaches a declarative model to an ad-hoc sub-process node. When
the host is started, the sub-process's event-state rows are initialized
from its initial marking (keyed by the top model's id, so concurrent cases
stay isolated). Inner events then execute under declarative semantics; the
rows double as the open/closed flag. Completing a terminator event erases
the inner rows within the same cascade and completes the host, resuming the
outer flow.
"""

from __future__ import annotations

from dataclasses import dataclass

from caseflow.bpmn.compiler import CompiledModel, compile_bpmn, rule_prefix
from caseflow.bpmn.model import BpmnModelIR, BpmnValidationError, NodeKind
from caseflow.cql.rules import (
    DeleteRows,
    EmitRecord,
    Lit,
    MergeUpsert,
    RowConstraint,
    RuleIR,
    Trigger,
    TriggerField,
)
from caseflow.dcr.compiler import event_rules
from caseflow.dcr.model import DcrModelIR
from caseflow.tables import DCR_EVENT_STATE, PROCESS_EVENT


@dataclass(frozen=True)
class HybridBinding:
    host: str
    inner: DcrModelIR
    terminators: frozenset[str]

    def __post_init__(self) -> None:
        if not self.terminators:
            raise BpmnValidationError(f"binding for host {self.host!r} needs terminators")
        unknown = self.terminators - set(self.inner.events)
        if unknown:
            raise BpmnValidationError(
                f"terminators {sorted(unknown)} are not events of the inner model"
            )


@dataclass
class HybridModel:
    top: BpmnModelIR
    bindings: tuple[HybridBinding, ...]

    @property
    def pm_id(self) -> int:
        return self.top.pm_id

    @property
    def version(self) -> int:
        return self.top.version

    def binding_for(self, host: str) -> HybridBinding | None:
        for binding in self.bindings:
            if binding.host == host:
                return binding
        return None

    def inner_events(self) -> set[str]:
        events: set[str] = set()
        for binding in self.bindings:
            events |= set(binding.inner.events)
        return events


def compile_hybrid(
    top: BpmnModelIR, bindings: list[HybridBinding] | tuple[HybridBinding, ...]
) -> CompiledModel:
    """Top-level rules plus instantiation/routing/termination per binding."""
    for binding in bindings:
        node = top.nodes.get(binding.host)
        if node is None:
            raise BpmnValidationError(f"unknown host node {binding.host!r}")
        if node.kind is not NodeKind.ADHOC_SUBPROCESS:
            raise BpmnValidationError(
                f"host {binding.host!r} must be an ad-hoc sub-process, is {node.kind.value}"
            )
        overlap = set(binding.inner.events) & set(top.nodes)
        if overlap:
            raise BpmnValidationError(
                f"inner event ids collide with top-level nodes: {sorted(overlap)}"
            )

    compiled = compile_bpmn(top)
    compiled.kind = "hybrid"
    prefix = rule_prefix(top.pm_id, top.version)

    for binding in bindings:
        inner = binding.inner
        host = binding.host

        # Instantiation: starting the host seeds the inner marking.
        init_actions = []
        for event in inner.events:
            init_actions.append(
                MergeUpsert(
                    DCR_EVENT_STATE,
                    key=(
                        ("pmID", TriggerField("pmID")),
                        ("caseID", TriggerField("caseID")),
                        ("eventID", Lit(event)),
                    ),
                    on_match=(
                        ("happened", Lit(event in inner.marking.executed)),
                        ("included", Lit(event in inner.marking.included)),
                        ("restless", Lit(event in inner.marking.pending)),
                        ("ts", TriggerField("ts")),
                    ),
                    on_insert=(
                        ("pmID", TriggerField("pmID")),
                        ("caseID", TriggerField("caseID")),
                        ("eventID", Lit(event)),
                        ("happened", Lit(event in inner.marking.executed)),
                        ("included", Lit(event in inner.marking.included)),
                        ("restless", Lit(event in inner.marking.pending)),
                        ("ts", TriggerField("ts")),
                    ),
                )
            )
        init_rule = RuleIR(
            id=f"{prefix}:300:subproc-init:{host}",
            trigger=Trigger(
                PROCESS_EVENT,
                pm_id=top.pm_id,
                node_ids=frozenset({host}),
                states=frozenset({"started"}),
            ),
            actions=tuple(init_actions),
        )
        compiled.rules.append(init_rule)
        compiled.node_rules.setdefault(host, []).append(init_rule.id)

        # Inner event rules run under the top model's id; the erased state
        # rows after termination make further submissions fall through to
        # the rejection diagnostic.
        for event in sorted(inner.events):
            extra: tuple = ()
            if event in binding.terminators:
                extra = (
                    DeleteRows(
                        DCR_EVENT_STATE,
                        where=(
                            RowConstraint("pmID", "=", TriggerField("pmID")),
                            RowConstraint("caseID", "=", TriggerField("caseID")),
                            RowConstraint("eventID", "in", Lit(tuple(sorted(inner.events)))),
                        ),
                    ),
                    EmitRecord(
                        PROCESS_EVENT,
                        (
                            ("pmID", TriggerField("pmID")),
                            ("caseID", TriggerField("caseID")),
                            ("nodeID", Lit(host)),
                            ("state", Lit("completed")),
                            ("payload", TriggerField("payload")),
                            ("ts", TriggerField("ts")),
                        ),
                    ),
                )
            rules = event_rules(inner, top.pm_id, prefix, event, extra_actions=extra)
            compiled.rules.extend(rules)
            compiled.node_rules.setdefault(host, []).extend(r.id for r in rules)
    return compiled
