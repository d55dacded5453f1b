"""Structural analysis: loop membership of join inputs and model diffs.

Loop detection uses strongly-connected-component membership: a join input
is a looping input when it lies in the same cyclic SCC as the join, and a
loop-less input otherwise. Joins outside every cycle classify with an empty
looping set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from caseflow.bpmn.model import BpmnModelIR, NodeKind


def strongly_connected_components(model: BpmnModelIR) -> list[set[str]]:
    """Tarjan's SCC, iterative to survive deep chains."""
    succ = {nid: model.successors(nid) for nid in model.nodes}
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    result: list[set[str]] = []
    counter = 0

    for root in model.nodes:
        if root in index:
            continue
        work: list[tuple[str, int]] = [(root, 0)]
        while work:
            node, child_idx = work[-1]
            if child_idx == 0:
                index[node] = lowlink[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            children = succ[node]
            advanced = False
            for i in range(child_idx, len(children)):
                child = children[i]
                if child not in index:
                    work[-1] = (node, i + 1)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    lowlink[node] = min(lowlink[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                component: set[str] = set()
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.add(member)
                    if member == node:
                        break
                result.append(component)
    return result


def cyclic_component_of(model: BpmnModelIR) -> dict[str, int]:
    """Map each node to the id of its cyclic SCC, or -1 when not in a cycle."""
    membership: dict[str, int] = {nid: -1 for nid in model.nodes}
    for i, component in enumerate(strongly_connected_components(model)):
        has_cycle = len(component) > 1 or any(
            e.source == e.target for e in model.edges if e.source in component
        )
        if has_cycle:
            for node in component:
                membership[node] = i
    return membership


@dataclass(frozen=True)
class JoinInputClassification:
    join: str
    loopless: frozenset[str]
    looping: frozenset[str]


def classify_join_inputs(model: BpmnModelIR) -> dict[str, JoinInputClassification]:
    """Split each XOR/OR-join's predecessors into loop-less and looping inputs."""
    membership = cyclic_component_of(model)
    result: dict[str, JoinInputClassification] = {}
    for node in model.nodes.values():
        if node.kind not in (NodeKind.XOR_GATEWAY, NodeKind.OR_GATEWAY):
            continue
        if len(model.in_edges(node.id)) < 1:
            continue
        preds = model.predecessors(node.id)
        join_scc = membership[node.id]
        looping = frozenset(
            p for p in preds if join_scc != -1 and membership[p] == join_scc
        )
        loopless = frozenset(p for p in preds if p not in looping)
        result[node.id] = JoinInputClassification(node.id, loopless, looping)
    return result


@dataclass
class ModelDiff:
    unchanged: set[str] = field(default_factory=set)
    added: set[str] = field(default_factory=set)
    removed: set[str] = field(default_factory=set)
    modified: set[str] = field(default_factory=set)


def diff_models(old: BpmnModelIR, new: BpmnModelIR) -> ModelDiff:
    """Node-level change classification between two versions of one model.

    A node counts as modified when its kind or its incoming edges (sources
    or condition text) differ; output control flow alone leaves a node's
    rule untouched, so it stays unchanged.
    """
    if old.pm_id != new.pm_id:
        raise ValueError(f"model id mismatch: {old.pm_id} vs {new.pm_id}")
    diff = ModelDiff()
    old_ids = set(old.nodes)
    new_ids = set(new.nodes)
    diff.added = new_ids - old_ids
    diff.removed = old_ids - new_ids
    for node_id in old_ids & new_ids:
        if old.nodes[node_id].kind != new.nodes[node_id].kind:
            diff.modified.add(node_id)
            continue
        old_in = {(e.source, e.condition_src) for e in old.in_edges(node_id)}
        new_in = {(e.source, e.condition_src) for e in new.in_edges(node_id)}
        if old_in != new_in:
            diff.modified.add(node_id)
        else:
            diff.unchanged.add(node_id)
    return diff
