"""Imperative process models: parsing, structural analysis, rule compilation."""

from caseflow.bpmn.model import (
    BpmnEdge,
    BpmnModelIR,
    BpmnNode,
    BpmnValidationError,
    NodeKind,
    parse_bpmn,
)
from caseflow.bpmn.analysis import (
    JoinInputClassification,
    ModelDiff,
    classify_join_inputs,
    diff_models,
    strongly_connected_components,
)
from caseflow.bpmn.compiler import CompiledModel, compile_bpmn

__all__ = [
    "BpmnEdge",
    "BpmnModelIR",
    "BpmnNode",
    "BpmnValidationError",
    "CompiledModel",
    "JoinInputClassification",
    "ModelDiff",
    "NodeKind",
    "classify_join_inputs",
    "compile_bpmn",
    "diff_models",
    "parse_bpmn",
    "strongly_connected_components",
]
