from __future__ import annotations

import pytest

from caseflow.events import LifecycleState
from caseflow.runtime import (
    CaseNotRunningError,
    EngineConfig,
    InvalidSubmissionError,
    StaleEventError,
    UnknownCaseError,
    UnknownModelError,
    VersionConflictError,
)
from caseflow.tables import CASE_VARIABLES, EXECUTION_STATE

from helpers import COMPLETED, ev, fixture, fresh_orchestrator

MINIMAL = """<definitions><process id="9" version="1">
  <startEvent id="SE"/><userTask id="T"/><endEvent id="EE"/>
  <sequenceFlow sourceRef="SE" targetRef="T"/>
  <sequenceFlow sourceRef="T" targetRef="EE"/>
</process></definitions>"""


def test_deploy_start_and_complete_case():
    orch = fresh_orchestrator()
    deployed = orch.deploy(MINIMAL, "bpmn")
    assert (deployed.pm_id, deployed.version, deployed.kind) == (9, 1, "bpmn")
    case_id, cascade = orch.start_case(9, {"k": 1}, ts=10)
    assert case_id == 1
    assert cascade.ok
    assert orch.enabled_work(9, case_id) == {("T", "task")}
    orch.submit(ev(9, case_id, "T", COMPLETED, {}, 20))
    record = orch.case_record(9, case_id)
    assert record.status == "completed"
    assert record.closed_ts == 20
    assert orch.enabled_work(9, case_id) == set()


def test_two_cases_are_independent():
    orch = fresh_orchestrator()
    orch.deploy(MINIMAL, "bpmn")
    c1, _ = orch.start_case(9, {"caseLocked": False, "nextAction": "close"}, ts=1)
    c2, _ = orch.start_case(9, {}, ts=2)
    assert (c1, c2) == (1, 2)
    assert orch.variables(9, c1) == {"caseLocked": False, "nextAction": "close"}
    assert orch.variables(9, c2) == {}
    orch.submit(ev(9, c2, "T", COMPLETED, {}, 3))
    assert orch.case_record(9, c2).status == "completed"
    assert orch.case_record(9, c1).status == "running"


def test_error_paths():
    orch = fresh_orchestrator()
    with pytest.raises(UnknownModelError):
        orch.start_case(404, {})
    orch.deploy(MINIMAL, "bpmn")
    with pytest.raises(VersionConflictError):
        orch.deploy(MINIMAL, "bpmn")
    case_id, _ = orch.start_case(9, {}, ts=10)
    with pytest.raises(UnknownCaseError):
        orch.submit(ev(9, 77, "T", COMPLETED, {}, 11))
    with pytest.raises(InvalidSubmissionError, match="completed events only"):
        orch.submit(ev(9, case_id, "T", LifecycleState.STARTED, {}, 11))
    with pytest.raises(InvalidSubmissionError, match="engine-driven"):
        orch.submit(ev(9, case_id, "EE", COMPLETED, {}, 11))
    with pytest.raises(StaleEventError):
        orch.submit(ev(9, case_id, "T", COMPLETED, {}, 5))
    orch.submit(ev(9, case_id, "T", COMPLETED, {}, 11))
    with pytest.raises(CaseNotRunningError):
        orch.submit(ev(9, case_id, "T", COMPLETED, {}, 12))


def test_duplicate_submission_rejected_as_stale():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    case_id, _ = orch.start_case(2, {"again": False}, ts=10)
    orch.submit(ev(2, case_id, "A", COMPLETED, {}, 15))
    orch.submit(ev(2, case_id, "C", COMPLETED, {}, 20))
    with pytest.raises(StaleEventError, match="duplicate"):
        orch.submit(ev(2, case_id, "C", COMPLETED, {}, 20))


def test_unoffered_completion_rejected():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    case_id, _ = orch.start_case(2, {"again": False}, ts=10)
    with pytest.raises(InvalidSubmissionError, match="not currently offered"):
        orch.submit(ev(2, case_id, "E", COMPLETED, {}, 20))


def test_guard_error_faults_only_that_case():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    bad, _ = orch.start_case(2, {}, ts=10)  # missing the routing variable
    good, _ = orch.start_case(2, {"again": False}, ts=10)
    orch.submit(ev(2, bad, "A", COMPLETED, {}, 15))
    orch.submit(ev(2, bad, "C", COMPLETED, {}, 20))
    cascade = orch.submit(ev(2, bad, "D", COMPLETED, {}, 30))
    assert cascade.fault is not None
    assert orch.case_record(2, bad).status == "faulted"
    orch.submit(ev(2, good, "A", COMPLETED, {}, 15))
    orch.submit(ev(2, good, "C", COMPLETED, {}, 20))
    orch.submit(ev(2, good, "D", COMPLETED, {"again": False}, 30))
    orch.submit(ev(2, good, "E", COMPLETED, {}, 40))
    assert orch.case_record(2, good).status == "completed"


def test_faulted_case_retains_state_until_discarded():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    case_id, _ = orch.start_case(2, {}, ts=10)
    orch.submit(ev(2, case_id, "A", COMPLETED, {}, 15))
    orch.submit(ev(2, case_id, "C", COMPLETED, {}, 20))
    orch.submit(ev(2, case_id, "D", COMPLETED, {}, 30))
    assert orch.case_record(2, case_id).status == "faulted"
    assert orch.state_rows(2, case_id)  # rows kept for inspection
    deleted = orch.discard_case(2, case_id)
    assert deleted > 0
    assert orch.state_rows(2, case_id) == []


def test_purge_keeps_memory_bounded():
    orch = fresh_orchestrator()
    orch.deploy(MINIMAL, "bpmn")
    peak = 0
    for i in range(200):
        ts = 100 * (i + 1)
        case_id, _ = orch.start_case(9, {"v": i}, ts=ts)
        peak = max(peak, len(orch.engine.tables[EXECUTION_STATE].rows))
        orch.submit(ev(9, case_id, "T", COMPLETED, {}, ts + 1))
    assert len(orch.engine.tables[EXECUTION_STATE].rows) == 0
    assert len(orch.engine.tables[CASE_VARIABLES].rows) == 0
    assert peak <= 3


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "engine.conf"
    path.write_text(
        "# engine settings\nworker_count = 2\nmigration_policy = immediate\n"
        "diagnostics_stream = Diag\nmax_cascade_steps = 500\n"
    )
    config = EngineConfig.load(path)
    assert config.worker_count == 2
    assert config.migration_policy == "immediate"
    assert config.diagnostics_stream == "Diag"
    assert config.max_cascade_steps == 500
    path.write_text("mystery = 1\n")
    with pytest.raises(ValueError, match="unknown configuration key"):
        EngineConfig.load(path)


# ---------------------------------------------------------------------------
# migration
# ---------------------------------------------------------------------------


def drive_to_loop(orch, case_id, ts0):
    orch.submit(ev(2, case_id, "C", COMPLETED, {}, ts0))
    orch.submit(ev(2, case_id, "D", COMPLETED, {"again": False}, ts0 + 10))


def test_cutover_migration_partitions_cases():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    old_case, _ = orch.start_case(2, {"again": True}, ts=10)
    # old case is mid-flight inside the loop when the new version arrives
    orch.submit(ev(2, old_case, "A", COMPLETED, {}, 15))
    orch.submit(ev(2, old_case, "C", COMPLETED, {}, 20))
    orch.submit(ev(2, old_case, "D", COMPLETED, {"again": True}, 30))
    deployed = orch.migrate(2, fixture("loop_and_block_v2.bpmn.xml"), policy="cutover-new-cases-only")
    assert deployed.version == 2

    new_case, cascade = orch.start_case(2, {"again": False}, ts=40)
    orch.submit(ev(2, new_case, "A", COMPLETED, {}, 45))
    new_offers = {n for n, _ in orch.enabled_work(2, new_case)}
    assert new_offers == {"C", "D", "F"}  # the added branch is live for new cases

    # the old case still follows the old shape: finish the lap, exit via E
    drive_to_loop(orch, old_case, 50)
    offers = {n for n, _ in orch.enabled_work(2, old_case)}
    assert offers == {"E"}
    old_trace = orch.submit(ev(2, old_case, "E", COMPLETED, {}, 70))
    assert ("EE1", "completed") in [(e.node_id, e.state.value) for e in old_trace.events]
    assert orch.case_record(2, old_case).status == "completed"

    # the new case never sees E and completes through the retargeted end
    orch.submit(ev(2, new_case, "C", COMPLETED, {}, 80))
    orch.submit(ev(2, new_case, "D", COMPLETED, {"again": False}, 90))
    final = orch.submit(ev(2, new_case, "F", COMPLETED, {}, 100))
    events = [(e.node_id, e.state.value) for e in final.events]
    assert ("EE1", "completed") in events
    assert orch.case_record(2, new_case).status == "completed"
    log_nodes = {e.event.node_id for e in orch.log.entries(case=new_case)}
    assert "E" not in log_nodes


def test_migrate_with_no_running_cases_behaves_like_redeploy():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    orch.migrate(2, fixture("loop_and_block_v2.bpmn.xml"))
    case_id, _ = orch.start_case(2, {"again": False}, ts=10)
    orch.submit(ev(2, case_id, "A", COMPLETED, {}, 15))
    offers = {n for n, _ in orch.enabled_work(2, case_id)}
    assert offers == {"C", "D", "F"}


def test_immediate_migration_faults_case_waiting_on_removed_node():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    case_id, _ = orch.start_case(2, {"again": False}, ts=10)
    orch.submit(ev(2, case_id, "A", COMPLETED, {}, 15))
    orch.submit(ev(2, case_id, "C", COMPLETED, {}, 20))
    orch.submit(ev(2, case_id, "D", COMPLETED, {"again": False}, 30))
    # E is offered now; the immediate migration drops it
    assert {n for n, _ in orch.enabled_work(2, case_id)} == {"E"}
    diagnostics = []
    orch.add_listener(lambda stream, record: diagnostics.append(record) if stream == "Diagnostics" else None)
    orch.migrate(2, fixture("loop_and_block_v2.bpmn.xml"), policy="immediate")
    assert orch.case_record(2, case_id).status == "faulted"
    assert any(d.get("kind") == "migration-removed-node" for d in diagnostics)
    with pytest.raises(CaseNotRunningError):
        orch.submit(ev(2, case_id, "E", COMPLETED, {}, 40))


def test_migration_rejects_same_version_and_wrong_id():
    orch = fresh_orchestrator()
    orch.deploy(fixture("loop_and_block.bpmn.xml"), "bpmn")
    with pytest.raises(VersionConflictError):
        orch.migrate(2, fixture("loop_and_block.bpmn.xml"))
    with pytest.raises(VersionConflictError):
        orch.migrate(2, fixture("interleaving.bpmn.xml"))
    with pytest.raises(InvalidSubmissionError, match="unknown migration policy"):
        orch.migrate(2, fixture("loop_and_block_v2.bpmn.xml"), policy="yolo")
