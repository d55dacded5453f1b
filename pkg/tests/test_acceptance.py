"""Acceptance criteria, one test per criterion, at the stated tolerances.

Every criterion is exact (trace or property equality); the timed ones
assert their wall-clock budget too.
"""

from __future__ import annotations

import json
import random
import time

from caseflow.bpmn import compile_bpmn, parse_bpmn
from caseflow.cql import RuleEngine, WindowSpec, eval_window
from caseflow.dcr import compile_dcr, init_case_state

from caseflow.oracles.dcr_ref import dcr_enabled, dcr_initial, dcr_step
from caseflow.oracles.randgen import random_dcr_model, random_structured_model
from caseflow.persistence import parse_wire_log, replay_events
from caseflow.tables import (
    CASE_VARIABLES,
    DCR_EVENT_STATE,
    EXECUTION_STATE,
    register_core_schemas,
)

from helpers import (
    COMPLETED,
    STARTED,
    drive_differential,
    ev,
    fixture,
    fresh_orchestrator,
    observations,
    parse_csv_expectations,
    parse_dcr_run,
    run_case_management,
)

MINIMAL = """<definitions><process id="9" version="1">
  <startEvent id="SE"/><userTask id="T"/><endEvent id="EE"/>
  <sequenceFlow sourceRef="SE" targetRef="T"/>
  <sequenceFlow sourceRef="T" targetRef="EE"/>
</process></definitions>"""


def hybrid_bindings():
    return [
        {
            "host": "P",
            "inner": fixture("hybrid_inner.dcr.json").decode(),
            "terminators": ["D"],
        }
    ]


# ---------------------------------------------------------------------------
# 1. Interleaving replay: the exact 18-row upsert/emission table
# ---------------------------------------------------------------------------


def test_c01_interleaving_upsert_table():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(fixture("interleaving.bpmn.xml"), "bpmn")

    rows = []

    def collect(cascade):
        for step in cascade.steps:
            es = [
                (c.action, c.key[2], c.row["state"] if c.row else None)
                for c in step.changes
                if c.table == EXECUTION_STATE and c.action != "delete"
            ]
            rows.append(
                (
                    step.event.node_id,
                    step.event.state.value,
                    step.event.case_id,
                    step.event.ts,
                    es[0] if es else None,
                    [(e.node_id, e.state.value) for e in step.emitted],
                )
            )

    collect(orch.start_case(1, {}, ts=1)[1])
    collect(orch.start_case(1, {}, ts=2)[1])
    collect(orch.submit(ev(1, 2, "A", COMPLETED, {}, 3)))
    collect(orch.submit(ev(1, 1, "B", COMPLETED, {}, 4)))
    collect(orch.submit(ev(1, 1, "A", COMPLETED, {}, 5)))
    collect(orch.submit(ev(1, 2, "B", COMPLETED, {}, 6)))

    expected = [
        ("SE", "started", 1, 1, ("insert", "SE", "started"), [("SE", "completed")]),
        ("SE", "completed", 1, 1, ("update", "SE", "completed"), [("AS", "completed")]),
        ("AS", "completed", 1, 1, ("insert", "AS", "completed"), [("A", "started"), ("B", "started")]),
        ("A", "started", 1, 1, None, []),
        ("B", "started", 1, 1, None, []),
        ("SE", "started", 2, 2, ("insert", "SE", "started"), [("SE", "completed")]),
        ("SE", "completed", 2, 2, ("update", "SE", "completed"), [("AS", "completed")]),
        ("AS", "completed", 2, 2, ("insert", "AS", "completed"), [("A", "started"), ("B", "started")]),
        ("A", "started", 2, 2, None, []),
        ("B", "started", 2, 2, None, []),
        ("A", "completed", 2, 3, ("insert", "A", "completed"), []),
        ("B", "completed", 1, 4, ("insert", "B", "completed"), []),
        ("A", "completed", 1, 5, ("insert", "A", "completed"), [("AJ", "completed")]),
        ("AJ", "completed", 1, 5, ("insert", "AJ", "completed"), [("EE", "completed")]),
        ("EE", "completed", 1, 5, ("insert", "EE", "completed"), []),
        ("B", "completed", 2, 6, ("insert", "B", "completed"), [("AJ", "completed")]),
        ("AJ", "completed", 2, 6, ("insert", "AJ", "completed"), [("EE", "completed")]),
        ("EE", "completed", 2, 6, ("insert", "EE", "completed"), []),
    ]
    assert rows == expected
    assert orch.case_record(1, 1).status == "completed"
    assert orch.case_record(1, 2).status == "completed"
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 2. Imperative case-study trace equals the embedded transcript
# ---------------------------------------------------------------------------


def test_c02_case_study_trace():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(fixture("case_management.bpmn.xml"), "bpmn")
    run_case_management(orch)
    exported = orch.log.export_csv(include_ts=False, states={"completed"})
    actual = parse_csv_expectations(exported)
    expected = parse_csv_expectations(fixture("expected_case_log.txt").decode())
    assert len(expected) == 64
    assert actual == expected
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 3. Declarative case-study: enabled sets after every step
# ---------------------------------------------------------------------------


def test_c03_dcr_case_study():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(fixture("case_management.dcr.xml"), "dcr")
    case_id, _ = orch.start_case(3, {}, ts=1720343160000)
    steps = parse_dcr_run(fixture("expected_dcr_run.txt").decode())
    first_enabled = {n for n, _ in orch.enabled_work(3, case_id)}
    assert first_enabled == {"Create Case"}
    for node, ts, expected_enabled in steps:
        cascade = orch.submit(ev(3, case_id, node, COMPLETED, {"None": "none"}, ts))
        assert not cascade.diagnostics, f"{node} was rejected"
        enabled = {n for n, _ in orch.enabled_work(3, case_id)}
        assert enabled == expected_enabled, f"after {node}"
    assert steps[0][2] == {"Lock case", "Close Case", "Schedule Meeting", "Upload document"}
    assert steps[-1][2] == set()
    assert orch.dcr_accepting(3, case_id)
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 4. Declarative semantics vs. direct reference: 1,000 random graphs
# ---------------------------------------------------------------------------


def test_c04_dcr_oracle_equivalence():
    t0 = time.monotonic()
    rng = random.Random(40404)
    divergences = 0
    for trial in range(1000):
        model = random_dcr_model(rng, pm_id=trial + 1, max_events=8, max_density=0.4)
        engine = RuleEngine()
        register_core_schemas(engine)
        engine.deploy_rules(compile_dcr(model).rules)
        init_case_state(engine, model, case_id=1, ts=0)
        marking = dcr_initial(model)
        for step_no in range(20):
            event = rng.choice(model.events)
            before = engine.dump_tables()[DCR_EVENT_STATE]
            cascade = engine.ingest(
                ev(model.pm_id, 1, event, COMPLETED, {}, (step_no + 1) * 10)
            )
            if dcr_enabled(model, marking, event):
                marking = dcr_step(model, marking, event)
                if cascade.diagnostics:
                    divergences += 1
            else:
                if not cascade.diagnostics:
                    divergences += 1
                if engine.dump_tables()[DCR_EVENT_STATE] != before:
                    divergences += 1
            rows = [
                r
                for r in engine.table(DCR_EVENT_STATE).scan()
                if r["pmID"] == model.pm_id and r["caseID"] == 1
            ]
            columns = (
                frozenset(r["eventID"] for r in rows if r["happened"]),
                frozenset(r["eventID"] for r in rows if r["restless"]),
                frozenset(r["eventID"] for r in rows if r["included"]),
            )
            if columns != (marking.executed, marking.pending, marking.included):
                divergences += 1
    elapsed = time.monotonic() - t0
    assert divergences == 0
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 5. Imperative semantics vs. reference interpreter: 1,000 random models
# ---------------------------------------------------------------------------


def test_c05_bpmn_oracle_equivalence():
    t0 = time.monotonic()
    rng = random.Random(50505)
    for trial in range(1000):
        generated = random_structured_model(rng, pm_id=trial + 1, max_nodes=10)
        divergence = drive_differential(generated, seed=rng.randint(0, 10**9))
        assert divergence is None, f"trial {trial}: {divergence}"
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 6. Parallel block nested in a loop: one join firing per iteration
# ---------------------------------------------------------------------------


def test_c06_loop_nested_parallel_block():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    case_id, _ = orch.start_case(2, {"again": True}, ts=10)
    orch.submit(ev(2, case_id, "A", COMPLETED, {}, 15))
    fires = 0
    ts = 20
    for iteration in range(5):
        last = iteration == 4
        first = orch.submit(ev(2, case_id, "C", COMPLETED, {}, ts))
        assert ("AJ-1", "completed") not in observations(first), "fired on one branch"
        ts += 10
        second = orch.submit(ev(2, case_id, "D", COMPLETED, {"again": not last}, ts))
        obs = observations(second)
        assert obs.count(("AJ-1", "completed")) == 1, f"iteration {iteration}"
        fires += 1
        ts += 10
    assert fires == 5
    orch.submit(ev(2, case_id, "E", COMPLETED, {}, ts))
    assert orch.case_record(2, case_id).status == "completed"
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 7. Irreducible loop: live under the wait-set rule, deadlocked naively
# ---------------------------------------------------------------------------


def test_c07_multi_entry_loop_or_joins():
    t0 = time.monotonic()
    model = parse_bpmn(fixture("multi_entry_loop.bpmn.xml"))

    engine = RuleEngine()
    register_core_schemas(engine)
    engine.deploy_rules(compile_bpmn(model).rules)
    trace: list = []

    def submit(node, payload, ts, state=COMPLETED):
        cascade = engine.ingest(ev(4, 1, node, state, payload, ts))
        trace.extend(observations(cascade))

    submit("SE", {"go": True}, 100, state=STARTED)
    submit("A", {}, 200)
    submit("A2", {}, 300)
    submit("B", {}, 400)
    ts = 500
    for lap in range(3):  # first activation plus two loop iterations
        last = lap == 2
        submit("C", {}, ts)
        submit("D", {"go": not last}, ts + 10)
        submit("D2", {"go": not last}, ts + 20)
        ts += 100
    assert trace.count(("OJ-1", "completed")) == 3  # entry + two loop laps
    assert trace.count(("OJ-2", "completed")) >= 3
    assert ("EE", "completed") in trace

    # control run: waiting for every input on both entries blocks forever
    naive = RuleEngine()
    register_core_schemas(naive)
    naive.deploy_rules(compile_bpmn(model, naive_or_joins=True).rules)
    control: list = []
    for node, state, payload, ts in (
        ("SE", STARTED, {"go": False}, 100),
        ("A", COMPLETED, {}, 200),
        ("A2", COMPLETED, {}, 300),
        ("B", COMPLETED, {}, 400),
    ):
        control.extend(observations(naive.ingest(ev(4, 1, node, state, payload, ts))))
    assert ("AJ-1", "completed") in control
    assert ("OJ-1", "completed") not in control
    assert ("OJ-2", "completed") not in control
    assert ("C", "started") not in control and ("D", "started") not in control
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 8. Migration with an in-flight case under the cutover policy
# ---------------------------------------------------------------------------


def test_c08_migration_cutover():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    old_case, _ = orch.start_case(2, {"again": True}, ts=10)
    orch.submit(ev(2, old_case, "A", COMPLETED, {}, 20))
    orch.submit(ev(2, old_case, "C", COMPLETED, {}, 30))
    orch.submit(ev(2, old_case, "D", COMPLETED, {"again": True}, 40))

    orch.migrate(2, fixture("loop_and_block_v2.bpmn.xml"), policy="cutover-new-cases-only")

    new_case, _ = orch.start_case(2, {"again": False}, ts=50)
    orch.submit(ev(2, new_case, "A", COMPLETED, {}, 60))
    assert {n for n, _ in orch.enabled_work(2, new_case)} == {"C", "D", "F"}

    # the in-flight case finishes its lap and exits through the old tail
    orch.submit(ev(2, old_case, "C", COMPLETED, {}, 70))
    orch.submit(ev(2, old_case, "D", COMPLETED, {"again": False}, 80))
    assert {n for n, _ in orch.enabled_work(2, old_case)} == {"E"}
    orch.submit(ev(2, old_case, "E", COMPLETED, {}, 90))
    assert orch.case_record(2, old_case).status == "completed"

    # the post-migration case executes F and completes without ever seeing E
    orch.submit(ev(2, new_case, "C", COMPLETED, {}, 100))
    orch.submit(ev(2, new_case, "D", COMPLETED, {"again": False}, 110))
    orch.submit(ev(2, new_case, "F", COMPLETED, {}, 120))
    assert orch.case_record(2, new_case).status == "completed"
    new_nodes = {e.event.node_id for e in orch.log.entries(case=new_case)}
    assert "E" not in new_nodes
    assert "F" in new_nodes
    old_nodes = {e.event.node_id for e in orch.log.entries(case=old_case)}
    assert "F" not in old_nodes

    # no case is matched by both versions' rules: the filters partition
    boundary_filters = [
        (rule.case_filter.op, rule.case_filter.bound)
        for rule in orch.engine.rules.values()
        if rule.case_filter is not None
    ]
    assert boundary_filters
    assert {op for op, _ in boundary_filters} == {"<=", ">"}
    assert {bound for _, bound in boundary_filters} == {old_case}
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 9. Purge bound over 10,000 sequential minimal cases
# ---------------------------------------------------------------------------


def test_c09_purge_bound():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(MINIMAL, "bpmn")
    single_peak = 0
    for i in range(10_000):
        ts = 100 * (i + 1)
        case_id, _ = orch.start_case(9, {"v": i}, ts=ts)
        if i == 0:
            single_peak = max(
                len(orch.engine.tables[EXECUTION_STATE].rows)
                + len(orch.engine.tables[CASE_VARIABLES].rows),
                1,
            )
        orch.submit(ev(9, case_id, "T", COMPLETED, {}, ts + 1))
    exec_rows = len(orch.engine.tables[EXECUTION_STATE].rows)
    var_rows = len(orch.engine.tables[CASE_VARIABLES].rows)
    assert exec_rows + var_rows <= single_peak
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 10. Hybrid enactment with interleaved cases
# ---------------------------------------------------------------------------


def test_c10_hybrid():
    t0 = time.monotonic()
    orch = fresh_orchestrator()
    orch.deploy(fixture("case_management_hybrid.bpmn.xml"), "hybrid", bindings=hybrid_bindings())

    c1, _ = orch.start_case(5, {}, ts=10)
    c2, _ = orch.start_case(5, {}, ts=11)
    orch.submit(ev(5, c1, "A", COMPLETED, {}, 20))
    orch.submit(ev(5, c2, "A", COMPLETED, {}, 21))

    def inner_rows(case_id):
        return {
            r["eventID"]: r
            for r in orch.engine.query_table(DCR_EVENT_STATE, pmID=5, caseID=case_id)
        }

    rows = inner_rows(c1)
    for event, (happened, included, restless) in {
        "B": (False, True, True),
        "C": (False, False, False),
        "D": (False, True, True),
        "E": (False, True, True),
    }.items():
        row = rows[event]
        assert (row["happened"], row["included"], row["restless"]) == (
            happened,
            included,
            restless,
        )

    # inner events repeat freely before the terminator, interleaved across cases
    ts = 30
    for node in ("B", "E", "C", "B", "E"):
        cascade = orch.submit(ev(5, c1, node, COMPLETED, {}, ts))
        assert not cascade.diagnostics
        orch.submit(ev(5, c2, "E", COMPLETED, {}, ts + 1))
        ts += 10

    done = orch.submit(ev(5, c1, "D", COMPLETED, {}, ts))
    obs = observations(done)
    assert ("P", "completed") in obs and ("F", "started") in obs
    assert inner_rows(c1) == {}
    assert set(inner_rows(c2)) == {"B", "C", "D", "E"}  # no cross-talk

    late = orch.submit(ev(5, c1, "B", COMPLETED, {}, ts + 10))
    assert late.diagnostics and "closed" in late.diagnostics[0].detail
    orch.submit(ev(5, c1, "F", COMPLETED, {}, ts + 20))
    assert orch.case_record(5, c1).status == "completed"
    assert orch.case_record(5, c2).status == "running"
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 11. Replay determinism across two models, byte for byte
# ---------------------------------------------------------------------------


def test_c11_replay_determinism():
    t0 = time.monotonic()

    def build():
        orch = fresh_orchestrator()
        orch.deploy(fixture("case_management.bpmn.xml"), "bpmn")
        orch.deploy(
            fixture("case_management_hybrid.bpmn.xml"), "hybrid", bindings=hybrid_bindings()
        )
        return orch

    source = build()
    run_case_management(source)
    c2, _ = source.start_case(5, {}, ts=100_000)
    source.submit(ev(5, c2, "A", COMPLETED, {}, 100_001))
    source.submit(ev(5, c2, "B", COMPLETED, {}, 100_002))
    # one case is intentionally left open so live rows are compared too
    exported = source.log.export_wire()

    target = build()
    replay_events(target, parse_wire_log(exported))
    assert json.dumps(source.snapshot(), sort_keys=True) == json.dumps(
        target.snapshot(), sort_keys=True
    )
    assert target.log.export_wire() == exported
    assert time.monotonic() - t0 < 5.0


# ---------------------------------------------------------------------------
# 12. The four monitoring requirements over a 10,000-event synthetic stream
# ---------------------------------------------------------------------------


def test_c12_monitoring_requirements():
    from test_cql_core import FIVE_MIN, build_monitoring_engine, synthetic_stream

    t0 = time.monotonic()
    engine = build_monitoring_engine()
    versions = {1: 3, 2: 1, 3: 9}
    for pm, version in versions.items():
        engine.tables["ProcessModelTable"].insert({"id": pm, "version": version})
    rare: list = []
    joined: list = []
    engine.subscribe("RarelyExecutedTasksStream", lambda s, r: rare.append(r))
    engine.subscribe("NewInstancesByProcessVersionStream", lambda s, r: joined.append(r))

    events = synthetic_stream(10_000, seed=120)
    for event in events:
        engine.ingest(event)

    # R1: filtered stream
    expected_rare = [e for e in events if e.node_id == "RareTask"]
    assert [(r["caseID"], r["ts"]) for r in rare] == [
        (e.case_id, e.ts) for e in expected_rare
    ]
    # R2: skipped table
    expected_skips = {
        (e.pm_id, e.case_id, e.node_id, e.ts) for e in events if e.state.value == "skipped"
    }
    assert set(engine.tables["SkippedTasksTable"].rows) == expected_skips
    # R3: per-five-minute instance counts
    starts = [e for e in events if e.node_id == "start"]
    emissions = eval_window(WindowSpec(length_ms=FIVE_MIN), starts)
    buckets: dict[int, int] = {}
    for e in starts:
        buckets[e.ts // FIVE_MIN] = buckets.get(e.ts // FIVE_MIN, 0) + 1
    lo, hi = min(buckets), max(buckets)
    assert [em.value for em in emissions] == [buckets.get(b, 0) for b in range(lo, hi + 1)]
    # R4: joined version stream
    assert joined == [
        {"caseID": e.case_id, "version": versions[e.pm_id]}
        for e in events
        if e.node_id == "start"
    ]
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
