"""Seeded random model generators for differential testing.

Imperative models are block-structured: nested sequences, parallel blocks,
exclusive and inclusive choice blocks (with branch conditions over decision
variables), and at most one loop. Declarative models draw relation sets at
a bounded density with random initial markings.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from caseflow.bpmn.model import BpmnEdge, BpmnModelIR, BpmnNode, NodeKind
from caseflow.dcr.model import DcrModelIR, build_dcr


@dataclass
class GeneratedModel:
    model: BpmnModelIR
    choice_vars: dict[str, list[str]] = field(default_factory=dict)  # enum decisions
    flag_vars: list[str] = field(default_factory=list)  # independent booleans
    loop_vars: list[str] = field(default_factory=list)  # loop-continue booleans

    def decision_names(self) -> list[str]:
        return [*self.choice_vars, *self.flag_vars, *self.loop_vars]


class _Builder:
    def __init__(self) -> None:
        self.nodes: list[tuple[str, NodeKind]] = []
        self.edges: list[tuple[str, str, str]] = []
        self.seq = 0
        self.generated = GeneratedModel(model=None)  # type: ignore[arg-type]

    def new(self, kind: NodeKind, tag: str) -> str:
        self.seq += 1
        node_id = f"{tag}{self.seq}"
        self.nodes.append((node_id, kind))
        return node_id

    def edge(self, source: str, target: str, cond: str = "") -> None:
        self.edges.append((source, target, cond))


def _gen_block(b: _Builder, rng: random.Random, budget: int, loop_allowed: bool) -> tuple[str, str, int]:
    """Emit one block; returns (entry, exit, nodes_used). Needs budget >= 1."""
    choices = ["task"]
    if budget >= 3:
        choices += ["seq"]
    if budget >= 4:
        choices += ["and", "xor"]
    if budget >= 5:
        choices += ["or"]
    kind = rng.choice(choices)

    if kind == "task":
        task = b.new(NodeKind.TASK, "T")
        return task, task, 1

    if kind == "seq":
        first_budget = rng.randint(1, budget - 1)
        entry1, exit1, used1 = _gen_block(b, rng, first_budget, loop_allowed)
        entry2, exit2, used2 = _gen_block(b, rng, budget - used1, False)
        b.edge(exit1, entry2)
        return entry1, exit2, used1 + used2

    if kind == "and":
        split = b.new(NodeKind.AND_GATEWAY, "AS")
        join = b.new(NodeKind.AND_GATEWAY, "AJ")
        remaining = budget - 2
        n_branches = rng.randint(2, max(2, min(3, remaining)))
        used = 2
        empty_used = False  # edges form a set: at most one direct split->join edge
        for i in range(n_branches):
            left = remaining - (n_branches - i - 1)
            if left >= 1 and (empty_used or rng.random() < 0.85):
                branch_budget = rng.randint(1, left)
                entry, exit_, b_used = _gen_block(b, rng, branch_budget, False)
                b.edge(split, entry)
                b.edge(exit_, join)
                remaining -= b_used
                used += b_used
            else:
                b.edge(split, join)  # empty parallel branch
                empty_used = True
        return split, join, used

    if kind == "xor":
        split = b.new(NodeKind.XOR_GATEWAY, "XS")
        join = b.new(NodeKind.XOR_GATEWAY, "XJ")
        var = f"c{b.seq}"
        remaining = budget - 2
        n_branches = rng.randint(2, max(2, min(3, remaining)))
        values = [f"b{i}" for i in range(n_branches)]
        b.generated.choice_vars[var] = values
        used = 2
        empty_used = False
        for i in range(n_branches):
            cond = f'{var} = "{values[i]}"'
            left = remaining - (n_branches - i - 1)
            if left >= 1 and (empty_used or rng.random() < 0.75):
                branch_budget = rng.randint(1, left)
                entry, exit_, b_used = _gen_block(b, rng, branch_budget, False)
                b.edge(split, entry, cond)
                b.edge(exit_, join)
                remaining -= b_used
                used += b_used
            else:
                b.edge(split, join, cond)  # empty exclusive branch
                empty_used = True
        return split, join, used

    # inclusive block: every branch with a true flag runs; branches are
    # never empty because inclusive joins take unconditional inputs only
    split = b.new(NodeKind.OR_GATEWAY, "OS")
    join = b.new(NodeKind.OR_GATEWAY, "OJ")
    remaining = budget - 2
    n_branches = rng.randint(2, max(2, min(3, remaining)))
    used = 2
    for i in range(n_branches):
        var = f"f{b.seq}_{i}"
        b.generated.flag_vars.append(var)
        left = max(1, remaining - (n_branches - i - 1))
        branch_budget = rng.randint(1, left)
        entry, exit_, b_used = _gen_block(b, rng, branch_budget, False)
        b.edge(split, entry, f"{var} = true")
        b.edge(exit_, join)
        remaining = max(0, remaining - b_used)
        used += b_used
    return split, join, used


def random_structured_model(
    rng: random.Random, pm_id: int, max_nodes: int = 10, version: int = 1
) -> GeneratedModel:
    b = _Builder()
    budget = max(3, max_nodes - 2)
    with_loop = budget >= 5 and rng.random() < 0.45

    if with_loop:
        entry_join = b.new(NodeKind.XOR_GATEWAY, "LJ")
        body_entry, body_exit, _ = _gen_block(b, rng, budget - 3, False)
        # A mandatory task on every lap keeps each iteration externally
        # driven: a pure-gateway path back to the entry would spin forever.
        lap_task = b.new(NodeKind.TASK, "T")
        exit_split = b.new(NodeKind.XOR_GATEWAY, "LX")
        var = f"g{b.seq}"
        b.generated.loop_vars.append(var)
        b.edge(entry_join, body_entry)
        b.edge(body_exit, lap_task)
        b.edge(lap_task, exit_split)
        b.edge(exit_split, entry_join, f"{var} = true")
        entry, exit_ = entry_join, exit_split
        exit_cond = f"not ({var} = true)"
    else:
        entry, exit_, _ = _gen_block(b, rng, budget, False)
        exit_cond = ""

    start = "SE"
    end = "EE"
    nodes = [(start, NodeKind.START_EVENT), *b.nodes, (end, NodeKind.END_EVENT)]
    edges = [(start, entry, ""), *b.edges, (exit_, end, exit_cond)]
    model = BpmnModelIR(
        pm_id=pm_id,
        version=version,
        nodes={nid: BpmnNode(nid, kind) for nid, kind in nodes},
        edges=[BpmnEdge(s, t, c) for s, t, c in edges],
        data_names=set(b.generated.decision_names()),
    )
    b.generated.model = model
    return b.generated


def draw_decisions(
    generated: GeneratedModel, rng: random.Random, loop_budget: dict[str, int]
) -> dict[str, object]:
    """Fresh values for every decision variable; loops drain a budget."""
    payload: dict[str, object] = {}
    for var, values in generated.choice_vars.items():
        payload[var] = rng.choice(values)
    for var in generated.flag_vars:
        payload[var] = rng.random() < 0.5
    for var in generated.loop_vars:
        if loop_budget.get(var, 0) > 0 and rng.random() < 0.6:
            payload[var] = True
            loop_budget[var] = loop_budget.get(var, 0) - 1
        else:
            payload[var] = False
    return payload


def random_dcr_model(
    rng: random.Random, pm_id: int, max_events: int = 8, max_density: float = 0.4
) -> DcrModelIR:
    n_events = rng.randint(2, max_events)
    events = [f"E{i}" for i in range(n_events)]

    def draw_relation() -> set[tuple[str, str]]:
        density = rng.uniform(0.0, max_density)
        return {
            (s, t)
            for s in events
            for t in events
            if rng.random() < density
        }

    included = {e for e in events if rng.random() < 0.8}
    executed = {e for e in events if rng.random() < 0.15}
    pending = {e for e in events if rng.random() < 0.25}
    return build_dcr(
        pm_id=pm_id,
        version=1,
        events=events,
        conditions=draw_relation(),
        responses=draw_relation(),
        includes=draw_relation(),
        excludes=draw_relation(),
        executed=executed,
        pending=pending,
        included=included,
    )
