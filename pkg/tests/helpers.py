"""Shared fixtures and drive scripts for the test suite."""

from __future__ import annotations

import random
from pathlib import Path

from caseflow.bpmn.compiler import compile_bpmn
from caseflow.cql.engine import Cascade, RuleEngine
from caseflow.events import LifecycleState, RawExecutionEvent
from caseflow.oracles.diff import Divergence, diff_traces
from caseflow.oracles.randgen import GeneratedModel, draw_decisions
from caseflow.oracles.token_game import NotOffered, TokenGame
from caseflow.runtime import EngineConfig, Orchestrator
from caseflow.tables import register_core_schemas

FIXTURES = Path(__file__).parent / "fixtures"

COMPLETED = LifecycleState.COMPLETED
STARTED = LifecycleState.STARTED
SKIPPED = LifecycleState.SKIPPED


def fixture(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


def fresh_orchestrator(**overrides) -> Orchestrator:
    return Orchestrator(EngineConfig(**overrides))


def ev(pm: int, case: int, node: str, state: LifecycleState, payload=None, ts: int = 0):
    return RawExecutionEvent(pm, case, node, state, dict(payload or {}), ts)


def observations(cascade: Cascade) -> list[tuple[str, str]]:
    obs = [(e.node_id, e.state.value) for e in cascade.events]
    obs += [(d.node_id, "!" + d.kind) for d in cascade.diagnostics]
    return obs


# ---------------------------------------------------------------------------
# Differential driver: compiled rules vs. reference interpreter
# ---------------------------------------------------------------------------


def drive_differential(
    generated: GeneratedModel, seed: int, naive_or_joins: bool = False, max_steps: int = 60
) -> Divergence | None:
    """Run one random model on both implementations with shared decisions."""
    model = generated.model
    engine = RuleEngine()
    register_core_schemas(engine)
    engine.deploy_rules(compile_bpmn(model, naive_or_joins=naive_or_joins).rules)
    oracle = TokenGame(model, naive_or_joins=naive_or_joins)
    rng = random.Random(seed)
    loop_budget = {v: 2 for v in generated.loop_vars}
    tasks = set(model.tasks())

    offers: set[str] = set()

    def track(cascade: Cascade) -> None:
        for event in cascade.events:
            if event.node_id in tasks:
                if event.state is STARTED:
                    offers.add(event.node_id)
                else:
                    offers.discard(event.node_id)

    ts = 1000
    payload = draw_decisions(generated, rng, loop_budget)
    cascade = engine.ingest(ev(model.pm_id, 1, model.start_node, STARTED, payload, ts))
    track(cascade)
    engine_trace = [observations(cascade)]
    oracle_trace = [oracle.start_case(payload, ts)]

    for _ in range(max_steps):
        if not offers:
            break
        task = min(offers)
        ts += 1000
        payload = draw_decisions(generated, rng, loop_budget)
        cascade = engine.ingest(ev(model.pm_id, 1, task, COMPLETED, payload, ts))
        track(cascade)
        engine_trace.append(observations(cascade))
        try:
            oracle_trace.append(oracle.complete_task(task, payload, ts))
        except NotOffered:
            oracle_trace.append([(task, "!not-offered")])

    divergence = diff_traces(engine_trace, oracle_trace)
    if divergence is not None:
        return divergence
    if sorted(offers) != sorted(oracle.offered):
        return Divergence(-1, tuple(sorted(offers)), tuple(sorted(oracle.offered)))
    return None


# ---------------------------------------------------------------------------
# Case-management drive scripts (the two case-study runs)
# ---------------------------------------------------------------------------

CASE_DECISIONS = [
    "search",
    "download",
    "upload",
    "schedule",
    "hold",
    "search",
    "lock",
    "schedule",
    "hold",
    "close",
]

_ACTION_TASK = {
    "search": "Search document",
    "download": "Download document",
    "upload": "Upload document2",
    "schedule": "Schedule meeting",
    "hold": "Hold meeting",
    "lock": "Lock case",
}


def run_case_management(orch: Orchestrator, decisions=None) -> int:
    """Drive the imperative case-management model through a decision list."""
    decisions = decisions or CASE_DECISIONS
    ts = 1000
    case_id, _ = orch.start_case(3, {"caseLocked": False, "nextAction": "close"}, ts=ts)
    variables = {"caseLocked": False, "nextAction": "close"}

    def complete(node: str, **changes) -> None:
        nonlocal ts
        ts += 1000
        variables.update(changes)
        orch.submit(ev(3, case_id, node, COMPLETED, dict(variables), ts))

    complete("Create Case")
    complete("Upload document")
    for action in decisions:
        complete("Decide what to do next", nextAction=action)
        if action == "lock":
            complete("Lock case", caseLocked=True)
        elif action in _ACTION_TASK:
            complete(_ACTION_TASK[action])
    complete("Close case")
    return case_id


def parse_csv_expectations(text: str) -> list[tuple[int, int, str, str, dict]]:
    from caseflow.events import parse_csv_line

    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        pm, case, node, state, payload, _ = parse_csv_line(line)
        rows.append((pm, case, node, state, payload))
    return rows


def parse_dcr_run(text: str) -> list[tuple[str, int, set[str]]]:
    """(event, ts, expected enabled set) triples from the run transcript."""
    from caseflow.events import parse_csv_line

    steps: list[tuple[str, int, set[str]]] = []
    pending: tuple[str, int] | None = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.lstrip().startswith("Available tasks are:"):
            names = line.split("Available tasks are:", 1)[1].strip()
            enabled = set() if names == "None" else {n.strip() for n in names.split(",")}
            assert pending is not None
            steps.append((pending[0], pending[1], enabled))
            pending = None
        else:
            _, _, node, _, _, ts = parse_csv_line(line)
            pending = (node, ts or 0)
    return steps
