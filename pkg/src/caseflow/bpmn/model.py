"""Parsed, validated imperative process models.

The reader accepts the BPMN 2.0 XML subset: process, startEvent, endEvent,
task/userTask/serviceTask/manualTask, exclusiveGateway, parallelGateway,
inclusiveGateway, adHocSubProcess, and sequenceFlow with an optional
conditionExpression child whose text is condition source for the expression
language. Validation follows the modeling guideline of a single control
flow edge for non-gateway nodes.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum

from caseflow import exprlang


class BpmnValidationError(ValueError):
    """Structural problem in a model file or programmatic model."""


class NodeKind(str, Enum):
    START_EVENT = "startEvent"
    END_EVENT = "endEvent"
    TASK = "task"
    XOR_GATEWAY = "xorGateway"
    AND_GATEWAY = "andGateway"
    OR_GATEWAY = "orGateway"
    ADHOC_SUBPROCESS = "adHocSubProcess"


GATEWAY_KINDS = {NodeKind.XOR_GATEWAY, NodeKind.AND_GATEWAY, NodeKind.OR_GATEWAY}

# XML tag (namespace-stripped) -> node kind
_TAG_KINDS = {
    "startEvent": NodeKind.START_EVENT,
    "endEvent": NodeKind.END_EVENT,
    "task": NodeKind.TASK,
    "userTask": NodeKind.TASK,
    "serviceTask": NodeKind.TASK,
    "manualTask": NodeKind.TASK,
    "intermediateCatchEvent": NodeKind.TASK,  # handled like tasks
    "intermediateThrowEvent": NodeKind.TASK,
    "exclusiveGateway": NodeKind.XOR_GATEWAY,
    "parallelGateway": NodeKind.AND_GATEWAY,
    "inclusiveGateway": NodeKind.OR_GATEWAY,
    "adHocSubProcess": NodeKind.ADHOC_SUBPROCESS,
}

_IGNORED_TAGS = {
    "documentation",
    "extensionElements",
    "incoming",
    "outgoing",
    "dataObjectReference",
    "association",
    "textAnnotation",
    "ioSpecification",
    "laneSet",
}


@dataclass(frozen=True)
class BpmnNode:
    id: str
    kind: NodeKind
    name: str = ""


@dataclass(frozen=True)
class BpmnEdge:
    source: str
    target: str
    condition_src: str = ""  # empty means the constant-true edge

    @property
    def condition(self) -> exprlang.Expression:
        if not self.condition_src:
            return exprlang.TRUE
        return exprlang.parse_expression(self.condition_src)


@dataclass
class BpmnModelIR:
    """Validated imperative model with stable node identifiers."""

    pm_id: int
    version: int
    nodes: dict[str, BpmnNode]
    edges: list[BpmnEdge]
    data_names: set[str] = field(default_factory=set)
    name: str = ""

    def __post_init__(self) -> None:
        self._conditions: dict[tuple[str, str], exprlang.Expression] = {}
        self.validate()

    # -- shape helpers -------------------------------------------------------

    def in_edges(self, node_id: str) -> list[BpmnEdge]:
        return [e for e in self.edges if e.target == node_id]

    def out_edges(self, node_id: str) -> list[BpmnEdge]:
        return [e for e in self.edges if e.source == node_id]

    def predecessors(self, node_id: str) -> list[str]:
        return [e.source for e in self.in_edges(node_id)]

    def successors(self, node_id: str) -> list[str]:
        return [e.target for e in self.out_edges(node_id)]

    def condition(self, source: str, target: str) -> exprlang.Expression:
        key = (source, target)
        if key not in self._conditions:
            for edge in self.edges:
                if edge.source == source and edge.target == target:
                    self._conditions[key] = edge.condition
                    break
            else:
                raise BpmnValidationError(f"no edge {source!r} -> {target!r}")
        return self._conditions[key]

    @property
    def start_node(self) -> str:
        for node in self.nodes.values():
            if node.kind is NodeKind.START_EVENT:
                return node.id
        raise BpmnValidationError("model has no start event")

    @property
    def end_nodes(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind is NodeKind.END_EVENT]

    def kind_of(self, node_id: str) -> NodeKind:
        return self.nodes[node_id].kind

    def tasks(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind is NodeKind.TASK]

    def is_join(self, node_id: str) -> bool:
        return self.nodes[node_id].kind in GATEWAY_KINDS and len(self.in_edges(node_id)) > 1

    def is_externally_completable(self, node_id: str) -> bool:
        """Nodes whose completed events come from agents, not the engine."""
        return self.nodes[node_id].kind is NodeKind.TASK

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        seen_pairs: set[tuple[str, str]] = set()
        for edge in self.edges:
            if edge.source not in self.nodes:
                raise BpmnValidationError(f"dangling edge source {edge.source!r}")
            if edge.target not in self.nodes:
                raise BpmnValidationError(f"dangling edge target {edge.target!r}")
            if (edge.source, edge.target) in seen_pairs:
                raise BpmnValidationError(
                    f"duplicate edge {edge.source!r} -> {edge.target!r}"
                )
            seen_pairs.add((edge.source, edge.target))
            if edge.condition_src:
                try:
                    exprlang.parse_expression(edge.condition_src)
                except exprlang.ExprSyntaxError as exc:
                    raise BpmnValidationError(
                        f"bad condition on edge {edge.source!r} -> {edge.target!r}: {exc}"
                    ) from exc

        starts = [n for n in self.nodes.values() if n.kind is NodeKind.START_EVENT]
        if len(starts) != 1:
            raise BpmnValidationError(f"model must have exactly one start event, found {len(starts)}")
        if not self.end_nodes:
            raise BpmnValidationError("model must have at least one end event")

        for node in self.nodes.values():
            n_in = len(self.in_edges(node.id))
            n_out = len(self.out_edges(node.id))
            if node.kind is NodeKind.START_EVENT:
                if n_in != 0 or n_out != 1:
                    raise BpmnValidationError(
                        f"start event {node.id!r} must have no incoming and one outgoing edge"
                    )
            elif node.kind is NodeKind.END_EVENT:
                if n_in != 1 or n_out != 0:
                    raise BpmnValidationError(
                        f"end event {node.id!r} must have one incoming and no outgoing edge"
                    )
            elif node.kind in GATEWAY_KINDS:
                if n_in < 1 or n_out < 1:
                    raise BpmnValidationError(f"gateway {node.id!r} must be connected")
                if n_in > 1 and n_out > 1:
                    raise BpmnValidationError(
                        f"gateway {node.id!r} mixes join and split roles; split it in the model"
                    )
            else:  # task, ad-hoc sub-process
                if n_in != 1 or n_out != 1:
                    raise BpmnValidationError(
                        f"node {node.id!r} must use a single control flow edge in and out, "
                        f"found {n_in} in / {n_out} out"
                    )

        # Synchronizing joins consume unconditional inputs only; a condition
        # on such an edge has no consistent meaning at runtime.
        for edge in self.edges:
            if not edge.condition_src:
                continue
            target = self.nodes[edge.target]
            if target.kind in (NodeKind.AND_GATEWAY, NodeKind.OR_GATEWAY) and self.is_join(
                edge.target
            ):
                raise BpmnValidationError(
                    f"condition not allowed on edge into synchronizing join {edge.target!r}"
                )


def build_model(
    pm_id: int,
    version: int,
    nodes: list[tuple[str, NodeKind]],
    edges: list[tuple[str, str] | tuple[str, str, str]],
    data_names: set[str] | None = None,
    name: str = "",
) -> BpmnModelIR:
    """Programmatic model constructor used by tests and generators."""
    node_map: dict[str, BpmnNode] = {}
    for node_id, kind in nodes:
        if node_id in node_map:
            raise BpmnValidationError(f"duplicate node id {node_id!r}")
        node_map[node_id] = BpmnNode(node_id, kind)
    edge_list = [
        BpmnEdge(e[0], e[1], e[2] if len(e) > 2 else "")  # type: ignore[misc]
        for e in edges
    ]
    return BpmnModelIR(pm_id, version, node_map, edge_list, data_names or set(), name)


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_bpmn(data: bytes | str) -> BpmnModelIR:
    """Read a BPMN XML file in the supported subset into a validated IR."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise BpmnValidationError(f"not well-formed XML: {exc}") from exc

    process = None
    if _strip_ns(root.tag) == "process":
        process = root
    else:
        for child in root.iter():
            if _strip_ns(child.tag) == "process":
                process = child
                break
    if process is None:
        raise BpmnValidationError("no process element found")

    pm_raw = process.get("id", "")
    try:
        pm_id = int(pm_raw)
    except ValueError:
        raise BpmnValidationError(f"process id must be an integer, got {pm_raw!r}") from None
    version = int(process.get("version", "1"))
    name = process.get("name", "")

    nodes: dict[str, BpmnNode] = {}
    edges: list[BpmnEdge] = []
    data_names: set[str] = set()

    for element in process:
        tag = _strip_ns(element.tag)
        if tag in _IGNORED_TAGS:
            continue
        if tag == "dataObject":
            data_names.add(element.get("name") or element.get("id", ""))
            continue
        if tag == "sequenceFlow":
            source = element.get("sourceRef", "")
            target = element.get("targetRef", "")
            condition = ""
            for child in element:
                if _strip_ns(child.tag) == "conditionExpression":
                    condition = (child.text or "").strip()
            edges.append(BpmnEdge(source, target, condition))
            continue
        if tag in _TAG_KINDS:
            node_id = element.get("id", "")
            if not node_id:
                raise BpmnValidationError(f"element {tag} without id")
            if node_id in nodes:
                raise BpmnValidationError(f"duplicate node id {node_id!r}")
            nodes[node_id] = BpmnNode(node_id, _TAG_KINDS[tag], element.get("name", node_id))
            continue
        raise BpmnValidationError(f"unsupported element kind {tag!r}")

    return BpmnModelIR(pm_id, version, nodes, edges, data_names, name)
