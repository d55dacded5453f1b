"""Long-lived orchestration service over the rule engine.

Owns model deployment and versioning, case lifecycle and identifiers,
per-case timestamp monotonicity, the offer board (started-but-uncompleted
tasks), end-of-case state purging, live migration with case-id cutover
filters, and the event log. Case state is keyed by (model, case); distinct
cases never share rows, so ingestion serializes per case while deploys and
migrations briefly exclude ingestion.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from caseflow.bpmn.analysis import diff_models
from caseflow.bpmn.model import parse_bpmn
from caseflow.bpmn.compiler import CompiledModel, compile_bpmn

from caseflow.cql.engine import Cascade, RuleEngine
from caseflow.cql.rules import CaseFilter, DiagnosticEvent
from caseflow.dcr.compiler import (
    accepting as dcr_accepting,
    compile_dcr,
    enabled_events,
    init_case_state,
)
from caseflow.dcr.model import DcrModelIR, parse_dcr
from caseflow.events import LifecycleState, RawExecutionEvent
from caseflow.hybrid import HybridBinding, HybridModel, compile_hybrid
from caseflow.persistence import DERIVED, EXTERNAL, EventLog
from caseflow.tables import (
    CASE_VARIABLES,
    DCR_EVENT_STATE,
    EXECUTION_STATE,
    register_core_schemas,
)

RUNNING = "running"
COMPLETED_STATUS = "completed"
FAULTED = "faulted"

# Reserved node id that carries a declarative case start on the stream, so
# the event log alone can rebuild engine state; no rules trigger on it.
DCR_START_NODE = "@start"


logger = logging.getLogger(__name__)


class OrchestratorError(Exception):
    code = 400


class UnknownModelError(OrchestratorError):
    code = 404


class UnknownCaseError(OrchestratorError):
    code = 404


class VersionConflictError(OrchestratorError):
    code = 409


class StaleEventError(OrchestratorError):
    code = 409


class CaseNotRunningError(OrchestratorError):
    code = 409


class InvalidSubmissionError(OrchestratorError):
    code = 400


@dataclass
class EngineConfig:
    worker_count: int = 4
    persistence_path: str | None = None
    diagnostics_stream: str = "Diagnostics"
    migration_policy: str = "cutover-new-cases-only"
    max_cascade_steps: int = 100_000

    @staticmethod
    def load(path: str | Path) -> "EngineConfig":
        """Read a key=value configuration file; unknown keys are rejected."""
        config = EngineConfig()
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key in ("worker_count", "max_cascade_steps"):
                setattr(config, key, int(value))
            elif key in ("persistence_path", "diagnostics_stream", "migration_policy"):
                setattr(config, key, value)
            else:
                raise ValueError(f"unknown configuration key {key!r}")
        return config


@dataclass
class DeployedModel:
    pm_id: int
    version: int
    kind: str
    rule_ids: list[str]
    source_digest: str
    deployed_ts: int


@dataclass
class CaseRecord:
    pm_id: int
    version: int
    case_id: int
    status: str = RUNNING
    created_ts: int = 0
    closed_ts: int | None = None


@dataclass
class ModelEntry:
    """Everything the runtime tracks per deployed model id."""

    pm_id: int
    kind: str
    version: int
    model: object  # BpmnModelIR | DcrModelIR | HybridModel
    compiled: CompiledModel
    deployed: DeployedModel
    start_node: str | None
    end_nodes: set[str]
    external_nodes: set[str]  # agents complete these
    inner_events: set[str] = field(default_factory=set)
    active_node_rules: dict[str, list[str]] = field(default_factory=dict)
    retired_rule_ids: list[str] = field(default_factory=list)
    history: list[DeployedModel] = field(default_factory=list)


class _DeployIngestLock:
    """Many concurrent ingests, exclusive deploy/migrate."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def read(self):
        return _ReadGuard(self)

    def write(self):
        return _WriteGuard(self)


class _ReadGuard:
    def __init__(self, lock: _DeployIngestLock):
        self._lock = lock

    def __enter__(self):
        with self._lock._cond:
            while self._lock._writer:
                self._lock._cond.wait()
            self._lock._readers += 1

    def __exit__(self, *exc):
        with self._lock._cond:
            self._lock._readers -= 1
            self._lock._cond.notify_all()


class _WriteGuard:
    def __init__(self, lock: _DeployIngestLock):
        self._lock = lock

    def __enter__(self):
        with self._lock._cond:
            while self._lock._writer or self._lock._readers:
                self._lock._cond.wait()
            self._lock._writer = True

    def __exit__(self, *exc):
        with self._lock._cond:
            self._lock._writer = False
            self._lock._cond.notify_all()


def _now_ms() -> int:
    return int(time.time() * 1000)


class Orchestrator:
    """The orchestration service: models, cases, rules, log, migration."""

    def __init__(self, config: EngineConfig | None = None, log: EventLog | None = None):
        self.config = config or EngineConfig()
        self.engine = RuleEngine(
            diagnostics_stream=self.config.diagnostics_stream,
            max_cascade_steps=self.config.max_cascade_steps,
        )
        register_core_schemas(self.engine)
        self.log = log or EventLog(self.config.persistence_path)
        self.models: dict[int, ModelEntry] = {}
        self.cases: dict[tuple[int, int], CaseRecord] = {}
        self._case_seq = 0
        self._offers: dict[tuple[int, int], set[str]] = {}
        self._last_ts: dict[tuple[int, int], int] = {}
        self._last_key: dict[tuple[int, int], tuple] = {}
        self._listeners: list = []
        self._lock = _DeployIngestLock()
        self._case_locks: dict[tuple[int, int], threading.Lock] = {}
        self._case_locks_guard = threading.Lock()
        self._alloc_guard = threading.Lock()

    # -- listeners -----------------------------------------------------------

    def add_listener(self, callback) -> None:
        """callback(stream_name, record_dict) for every event and diagnostic."""
        self._listeners.append(callback)

    def _publish(self, stream: str, record: dict) -> None:
        for listener in list(self._listeners):
            listener(stream, record)

    # -- deployment ----------------------------------------------------------

    def deploy(
        self,
        source: bytes | str,
        kind: str = "bpmn",
        bindings: list | None = None,
    ) -> DeployedModel:
        with self._lock.write():
            model, compiled = self._parse_and_compile(source, kind, bindings)
            if model.pm_id in self.models:
                raise VersionConflictError(
                    f"model {model.pm_id} already deployed; use migrate for new versions"
                )
            self.engine.deploy_rules(compiled.rules)
            entry = self._build_entry(model, compiled, source, kind)
            self.models[model.pm_id] = entry
            return entry.deployed

    def _parse_and_compile(self, source, kind: str, bindings):
        if isinstance(source, str):
            source = source.encode("utf-8")
        if kind == "bpmn":
            model = parse_bpmn(source)
            return model, compile_bpmn(model)
        if kind == "dcr":
            model = parse_dcr(source)
            return model, compile_dcr(model)
        if kind == "hybrid":
            top = parse_bpmn(source)
            resolved = [self._resolve_binding(b) for b in (bindings or [])]
            if not resolved:
                raise InvalidSubmissionError("hybrid deployment requires bindings")
            hybrid = HybridModel(top, tuple(resolved))
            return hybrid, compile_hybrid(top, resolved)
        raise InvalidSubmissionError(f"unknown model kind {kind!r}")

    @staticmethod
    def _resolve_binding(binding) -> HybridBinding:
        if isinstance(binding, HybridBinding):
            return binding
        inner = binding["inner"]
        if isinstance(inner, (str, bytes)):
            inner = parse_dcr(inner)
        return HybridBinding(
            host=binding["host"],
            inner=inner,
            terminators=frozenset(binding["terminators"]),
        )

    def _build_entry(self, model, compiled: CompiledModel, source, kind: str) -> ModelEntry:
        digest = hashlib.sha256(
            source if isinstance(source, bytes) else str(source).encode()
        ).hexdigest()[:16]
        deployed = DeployedModel(
            pm_id=model.pm_id,
            version=model.version,
            kind=kind,
            rule_ids=compiled.rule_ids(),
            source_digest=digest,
            deployed_ts=_now_ms(),
        )
        if kind == "bpmn":
            start: str | None = model.start_node
            ends = set(model.end_nodes)
            external = set(model.tasks())
            inner: set[str] = set()
        elif kind == "hybrid":
            top = model.top
            start = top.start_node
            ends = set(top.end_nodes)
            external = set(top.tasks())
            inner = model.inner_events()
        else:
            start = DCR_START_NODE
            ends = set()
            external = set(model.events)
            inner = set()
        return ModelEntry(
            pm_id=model.pm_id,
            kind=kind,
            version=model.version,
            model=model,
            compiled=compiled,
            deployed=deployed,
            start_node=start,
            end_nodes=ends,
            external_nodes=external,
            inner_events=inner,
            active_node_rules=dict(compiled.node_rules),
        )

    def model_entry(self, pm_id: int) -> ModelEntry:
        try:
            return self.models[pm_id]
        except KeyError:
            raise UnknownModelError(f"model {pm_id} is not deployed") from None

    def is_external_node(self, pm_id: int, node_id: str) -> bool:
        entry = self.model_entry(pm_id)
        return node_id in entry.external_nodes or node_id in entry.inner_events

    def case_exists(self, pm_id: int, case_id: int) -> bool:
        return (pm_id, case_id) in self.cases

    # -- case lifecycle --------------------------------------------------------

    def _case_lock(self, key: tuple[int, int]) -> threading.Lock:
        with self._case_locks_guard:
            return self._case_locks.setdefault(key, threading.Lock())

    def _allocate_case(self, case_id: int | None) -> int:
        with self._alloc_guard:
            if case_id is None:
                self._case_seq += 1
                return self._case_seq
            self._case_seq = max(self._case_seq, case_id)
            return case_id

    def start_case(
        self,
        pm_id: int,
        payload: dict | None = None,
        ts: int | None = None,
        case_id: int | None = None,
    ) -> tuple[int, Cascade]:
        entry = self.model_entry(pm_id)
        payload = dict(payload or {})
        ts = _now_ms() if ts is None else ts
        with self._lock.read():
            case_id = self._allocate_case(case_id)
            key = (pm_id, case_id)
            if key in self.cases:
                raise VersionConflictError(f"case {case_id} already exists for model {pm_id}")
            self.cases[key] = CaseRecord(
                pm_id=pm_id, version=entry.version, case_id=case_id, created_ts=ts
            )
            with self._case_lock(key):
                if entry.kind == "dcr":
                    init_case_state(self.engine, entry.model, case_id, ts)
                event = RawExecutionEvent(
                    pm_id, case_id, entry.start_node, LifecycleState.STARTED, payload, ts
                )
                cascade = self._ingest(entry, event)
                return case_id, cascade

    def submit(self, event: RawExecutionEvent) -> Cascade:
        """External completion of a task, declarative event, or inner event."""
        entry = self.model_entry(event.pm_id)
        key = (event.pm_id, event.case_id)
        record = self.cases.get(key)
        if record is None:
            raise UnknownCaseError(f"unknown case {event.case_id} for model {event.pm_id}")
        if record.status != RUNNING:
            raise CaseNotRunningError(f"case {event.case_id} is {record.status}")
        if event.state is not LifecycleState.COMPLETED:
            raise InvalidSubmissionError(
                "agents submit completed events only; started and skipped are engine-emitted"
            )
        if self._last_key.get(key) == event.key():
            raise StaleEventError("duplicate submission")
        self._validate_node(entry, event, key)
        with self._lock.read():
            with self._case_lock(key):
                last = self._last_ts.get(key)
                if last is not None and event.ts < last:
                    raise StaleEventError(
                        f"timestamp {event.ts} is older than the case's last event {last}"
                    )
                return self._ingest(entry, event)

    def _validate_node(self, entry: ModelEntry, event: RawExecutionEvent, key) -> None:
        node = event.node_id
        if entry.kind == "dcr":
            if node not in entry.external_nodes:
                raise InvalidSubmissionError(f"unknown event {node!r} for model {entry.pm_id}")
            return
        if node in entry.inner_events:
            return
        if node not in entry.external_nodes:
            raise InvalidSubmissionError(
                f"node {node!r} is engine-driven or unknown; agents complete tasks only"
            )
        if node not in self._offers.get(key, set()):
            raise InvalidSubmissionError(f"task {node!r} is not currently offered")

    def _ingest(self, entry: ModelEntry, event: RawExecutionEvent) -> Cascade:
        key = (event.pm_id, event.case_id)
        cascade = self.engine.ingest(event)
        self._last_ts[key] = event.ts
        self._last_key[key] = event.key()
        offers = self._offers.setdefault(key, set())
        record = self.cases[key]
        completed_end = False
        for i, cascade_event in enumerate(cascade.events):
            origin = EXTERNAL if i == 0 else DERIVED
            try:
                self.log.append(cascade_event, origin)
            except OSError as exc:
                # storage trouble is an alert, never an ingestion blocker
                logger.error("event log append failed: %s", exc)
            self._publish(self.engine.process_stream, _wire(cascade_event))
            node = cascade_event.node_id
            if cascade_event.state is LifecycleState.STARTED and node in entry.external_nodes:
                offers.add(node)
            if cascade_event.state in (LifecycleState.COMPLETED, LifecycleState.SKIPPED):
                offers.discard(node)
            if cascade_event.state is LifecycleState.COMPLETED and node in entry.end_nodes:
                completed_end = True
        for diagnostic in cascade.diagnostics:
            self._publish(self.engine.diagnostics_stream, diagnostic.to_wire())
        if cascade.fault is not None:
            record.status = FAULTED
            record.closed_ts = event.ts
        elif completed_end and record.status == RUNNING:
            record.status = COMPLETED_STATUS
            record.closed_ts = event.ts
            self.purge_on_completion(event.pm_id, event.case_id)
        return cascade

    def _fault_cases_waiting_on(self, pm_id: int, removed: set[str]) -> None:
        """Immediate migration stranded these offers; fault the cases loudly."""
        for (pm, case_id), record in self.cases.items():
            if pm != pm_id or record.status != RUNNING:
                continue
            blocked = self._offers.get((pm, case_id), set()) & removed
            if not blocked:
                continue
            record.status = FAULTED
            record.closed_ts = _now_ms()
            diagnostic = DiagnosticEvent(
                kind="migration-removed-node",
                pm_id=pm,
                case_id=case_id,
                node_id=sorted(blocked)[0],
                detail=(
                    f"case waits on {sorted(blocked)}, removed by an immediate migration"
                ),
                ts=record.closed_ts,
            )
            self._publish(self.engine.diagnostics_stream, diagnostic.to_wire())

    def purge_on_completion(self, pm_id: int, case_id: int) -> int:
        """Clear all state rows of a completed case; the log keeps the trace."""
        record = self.cases.get((pm_id, case_id))
        if record is not None and record.status == FAULTED:
            return 0  # faulted cases retain state for inspection
        deleted = 0
        for table_name in (EXECUTION_STATE, CASE_VARIABLES, DCR_EVENT_STATE):
            table = self.engine.table(table_name)
            keys = [
                k
                for k, row in table.rows.items()
                if row.get("pmID") == pm_id and row.get("caseID") == case_id
            ]
            for k in keys:
                table.delete(k)
            deleted += len(keys)
        self._offers.pop((pm_id, case_id), None)
        return deleted

    def discard_case(self, pm_id: int, case_id: int) -> int:
        """Explicitly drop a faulted case's retained state."""
        record = self.case_record(pm_id, case_id)
        if record.status != FAULTED:
            raise CaseNotRunningError(f"case {case_id} is {record.status}, not faulted")
        deleted = 0
        for table_name in (EXECUTION_STATE, CASE_VARIABLES, DCR_EVENT_STATE):
            table = self.engine.table(table_name)
            keys = [
                k
                for k, row in table.rows.items()
                if row.get("pmID") == pm_id and row.get("caseID") == case_id
            ]
            for k in keys:
                table.delete(k)
            deleted += len(keys)
        self._offers.pop((pm_id, case_id), None)
        return deleted

    # -- queries ---------------------------------------------------------------

    def case_record(self, pm_id: int, case_id: int) -> CaseRecord:
        try:
            return self.cases[(pm_id, case_id)]
        except KeyError:
            raise UnknownCaseError(f"unknown case {case_id} for model {pm_id}") from None

    def state_rows(self, pm_id: int, case_id: int) -> list[dict]:
        self.case_record(pm_id, case_id)
        exec_rows = self.engine.query_table(EXECUTION_STATE, pmID=pm_id, caseID=case_id)
        dcr_rows = self.engine.query_table(DCR_EVENT_STATE, pmID=pm_id, caseID=case_id)
        return sorted(exec_rows, key=lambda r: r["nodeID"]) + sorted(
            dcr_rows, key=lambda r: r["eventID"]
        )

    def variables(self, pm_id: int, case_id: int) -> dict:
        self.case_record(pm_id, case_id)
        rows = self.engine.query_table(CASE_VARIABLES, pmID=pm_id, caseID=case_id)
        return dict(rows[0]["variables"]) if rows else {}

    def enabled_work(self, pm_id: int, case_id: int) -> set[tuple[str, str]]:
        """Work an agent may act on right now: offered tasks, enabled events."""
        entry = self.model_entry(pm_id)
        record = self.case_record(pm_id, case_id)
        if record.status != RUNNING:
            return set()
        if entry.kind == "dcr":
            return {
                (e, "event") for e in enabled_events(self.engine, entry.model, case_id)
            }
        offers = {
            (n, "task")
            for n in self._offers.get((pm_id, case_id), set())
            if n in entry.external_nodes
        }
        if entry.kind == "hybrid":
            for binding in entry.model.bindings:
                rows = {
                    r["eventID"]: r
                    for r in self.engine.query_table(
                        DCR_EVENT_STATE, pmID=pm_id, caseID=case_id
                    )
                    if r["eventID"] in set(binding.inner.events)
                }
                if not rows:
                    continue  # sub-process not open
                for e in binding.inner.events:
                    row = rows.get(e)
                    if row is None or not row["included"]:
                        continue
                    if all(
                        (not rows[s]["included"]) or rows[s]["happened"]
                        for s in binding.inner.condition_sources(e)
                        if s in rows
                    ):
                        offers.add((e, "event"))
        return offers

    def dcr_accepting(self, pm_id: int, case_id: int) -> bool:
        self.case_record(pm_id, case_id)
        return dcr_accepting(self.engine, pm_id, case_id)

    def snapshot(self) -> dict:
        """Table dumps plus case statuses, for replay comparison."""
        return {
            "tables": self.engine.dump_tables(),
            "cases": {
                f"{pm}/{case}": record.status
                for (pm, case), record in sorted(self.cases.items())
            },
        }

    # -- migration ---------------------------------------------------------------

    def migrate(
        self,
        pm_id: int,
        new_source: bytes | str,
        policy: str | None = None,
        bindings: list | None = None,
    ) -> DeployedModel:
        policy = policy or self.config.migration_policy
        if policy not in ("cutover-new-cases-only", "immediate"):
            raise InvalidSubmissionError(f"unknown migration policy {policy!r}")
        with self._lock.write():
            entry = self.model_entry(pm_id)
            new_model, new_compiled = self._parse_and_compile(
                new_source, entry.kind, bindings
            )
            if new_model.pm_id != pm_id:
                raise VersionConflictError(
                    f"migration source has model id {new_model.pm_id}, expected {pm_id}"
                )
            if new_model.version == entry.version:
                raise VersionConflictError(
                    f"model {pm_id} version {entry.version} is already deployed"
                )
            if entry.kind == "bpmn":
                diff = diff_models(entry.model, new_model)
            elif entry.kind == "hybrid":
                diff = diff_models(entry.model.top, new_model.top)
            else:
                diff = None

            boundary = self._case_seq
            if diff is None:
                changed_old = set(entry.active_node_rules)
                changed_new = set(new_compiled.node_rules)
            else:
                changed_old = diff.removed | diff.modified
                changed_new = diff.added | diff.modified

            if policy == "immediate":
                for node in changed_old:
                    for rule_id in entry.active_node_rules.get(node, []):
                        self.engine.undeploy_rule(rule_id)
                new_rules = [
                    r
                    for r in new_compiled.rules
                    if any(
                        r.id in new_compiled.node_rules.get(node, []) for node in changed_new
                    )
                ]
                self.engine.deploy_rules(new_rules)
                if diff is not None and diff.removed:
                    entry.external_nodes -= diff.removed
                    self._fault_cases_waiting_on(pm_id, diff.removed)
            else:
                old_filter = CaseFilter("<=", boundary)
                new_filter = CaseFilter(">", boundary)
                for node in changed_old:
                    for rule_id in entry.active_node_rules.get(node, []):
                        rule = self.engine.rules.get(rule_id)
                        if rule is not None:
                            self.engine.replace_rule(rule.with_case_filter(old_filter))
                            entry.retired_rule_ids.append(rule_id)
                new_rules = [
                    r.with_case_filter(new_filter)
                    for r in new_compiled.rules
                    if any(
                        r.id in new_compiled.node_rules.get(node, []) for node in changed_new
                    )
                ]
                self.engine.deploy_rules(new_rules)

            # Bookkeeping: active rules per node reflect the governing version.
            for node in changed_old:
                if diff is not None and node in diff.removed and policy == "immediate":
                    entry.active_node_rules.pop(node, None)
            for node in changed_new:
                entry.active_node_rules[node] = list(new_compiled.node_rules.get(node, []))

            entry.history.append(entry.deployed)
            entry.model = new_model
            entry.version = new_model.version
            entry.end_nodes |= (
                set(new_model.end_nodes)
                if entry.kind == "bpmn"
                else set(new_model.top.end_nodes) if entry.kind == "hybrid" else set()
            )
            if entry.kind == "bpmn":
                entry.external_nodes |= set(new_model.tasks())
            elif entry.kind == "hybrid":
                entry.external_nodes |= set(new_model.top.tasks())
                entry.inner_events |= new_model.inner_events()
            else:
                entry.external_nodes |= set(new_model.events)
            entry.deployed = DeployedModel(
                pm_id=pm_id,
                version=new_model.version,
                kind=entry.kind,
                rule_ids=[r.id for r in new_rules],
                source_digest=hashlib.sha256(
                    new_source if isinstance(new_source, bytes) else str(new_source).encode()
                ).hexdigest()[:16],
                deployed_ts=_now_ms(),
            )
            return entry.deployed


def _wire(event: RawExecutionEvent) -> dict:
    return {
        "pmID": event.pm_id,
        "caseID": event.case_id,
        "nodeID": event.node_id,
        "state": event.state.value,
        "payload": dict(event.payload),
        "ts": event.ts,
    }
