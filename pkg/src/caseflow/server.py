"""HTTP and push API over the orchestrator.

JSON request/response bodies; model sources travel as text (multipart file
upload or inline JSON field). The push channel is server-sent events on a
persistent connection: one wire-encoded record per message, tagged with its
stream name. Read endpoints serve snapshots and never block ingestion.
"""

from __future__ import annotations

import asyncio
import json
import queue
from typing import Any

from fastapi import FastAPI, Form, HTTPException, Request, UploadFile
from fastapi.responses import PlainTextResponse, StreamingResponse

from caseflow.bpmn.model import BpmnValidationError
from caseflow.dcr.model import DcrValidationError
from caseflow.events import EventDecodeError, decode_event
from caseflow.runtime import Orchestrator, OrchestratorError
from caseflow.cql.engine import Cascade


def _cascade_json(orch: Orchestrator, cascade: Cascade, pm_id: int, case_id: int) -> dict:
    record = orch.cases.get((pm_id, case_id))
    return {
        "events": [json.loads(_wire_text(e)) for e in cascade.events],
        "diagnostics": [d.to_wire() for d in cascade.diagnostics],
        "fault": cascade.fault.to_wire() if cascade.fault else None,
        "caseStatus": record.status if record else "unknown",
    }


def _wire_text(event) -> str:
    from caseflow.events import encode_event

    return encode_event(event).decode("utf-8")


def _deployed_json(deployed) -> dict:
    return {
        "modelId": deployed.pm_id,
        "version": deployed.version,
        "kind": deployed.kind,
        "ruleCount": len(deployed.rule_ids),
        "sourceDigest": deployed.source_digest,
        "deployedTs": deployed.deployed_ts,
    }


def _resolve_case(orch: Orchestrator, case_id: int) -> tuple[int, int]:
    matches = [key for key in orch.cases if key[1] == case_id]
    if not matches:
        raise HTTPException(404, f"unknown case {case_id}")
    if len(matches) > 1:
        raise HTTPException(409, f"case id {case_id} is ambiguous across models")
    return matches[0]


def create_app(orch: Orchestrator) -> FastAPI:
    app = FastAPI(title="caseflow", version="0.1.0")
    subscribers: list[queue.Queue] = []

    def fanout(stream: str, record: dict) -> None:
        for q in list(subscribers):
            q.put((stream, record))

    orch.add_listener(fanout)

    @app.exception_handler(OrchestratorError)
    async def orchestrator_error(_request: Request, exc: OrchestratorError):
        raise HTTPException(exc.code, str(exc))

    @app.exception_handler(BpmnValidationError)
    async def bpmn_error(_request: Request, exc: BpmnValidationError):
        raise HTTPException(400, str(exc))

    @app.exception_handler(DcrValidationError)
    async def dcr_error(_request: Request, exc: DcrValidationError):
        raise HTTPException(400, str(exc))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "models": len(orch.models), "cases": len(orch.cases)}

    # -- models -------------------------------------------------------------

    @app.post("/models")
    async def deploy_model(
        request: Request,
        source: UploadFile | None = None,
        kind: str = Form(default="bpmn"),
        bindings: str = Form(default=""),
    ) -> dict:
        if source is not None:
            text = (await source.read()).decode("utf-8")
            binding_spec = json.loads(bindings) if bindings else None
        else:
            body = await request.json()
            text = body.get("source", "")
            kind = body.get("kind", "bpmn")
            binding_spec = body.get("bindings")
        if not text:
            raise HTTPException(400, "missing model source")
        resolved = _binding_dicts(binding_spec)
        return _deployed_json(orch.deploy(text, kind, resolved))

    @app.get("/models")
    def list_models() -> list[dict]:
        return [_deployed_json(entry.deployed) for entry in orch.models.values()]

    @app.post("/models/{model_id}/migrate")
    async def migrate_model(model_id: int, request: Request) -> dict:
        body = await request.json()
        resolved = _binding_dicts(body.get("bindings"))
        deployed = orch.migrate(
            model_id, body.get("source", ""), body.get("policy"), resolved
        )
        return _deployed_json(deployed)

    # -- cases ---------------------------------------------------------------

    @app.post("/cases")
    async def start_case(request: Request) -> dict:
        body = await request.json()
        model_id = body.get("modelId")
        if model_id is None:
            raise HTTPException(400, "modelId is required")
        case_id, cascade = orch.start_case(
            int(model_id), body.get("payload") or {}, ts=body.get("ts")
        )
        summary = _cascade_json(orch, cascade, int(model_id), case_id)
        summary["caseId"] = case_id
        return summary

    @app.get("/cases")
    def list_cases() -> list[dict]:
        return [
            {
                "modelId": record.pm_id,
                "caseId": record.case_id,
                "version": record.version,
                "status": record.status,
                "createdTs": record.created_ts,
                "closedTs": record.closed_ts,
            }
            for record in orch.cases.values()
        ]

    @app.post("/events")
    async def submit_event(request: Request) -> dict:
        raw = await request.body()
        try:
            event = decode_event(raw)
        except EventDecodeError as exc:
            raise HTTPException(400, str(exc)) from exc
        cascade = orch.submit(event)
        return _cascade_json(orch, cascade, event.pm_id, event.case_id)

    @app.get("/cases/{case_id}/enabled")
    def enabled(case_id: int) -> dict:
        pm_id, case_id = _resolve_case(orch, case_id)
        work = sorted(orch.enabled_work(pm_id, case_id))
        return {
            "modelId": pm_id,
            "caseId": case_id,
            "enabled": [{"node": node, "kind": kind} for node, kind in work],
        }

    @app.get("/cases/{case_id}/state")
    def case_state(case_id: int) -> dict:
        pm_id, case_id = _resolve_case(orch, case_id)
        record = orch.case_record(pm_id, case_id)
        return {
            "modelId": pm_id,
            "caseId": case_id,
            "status": record.status,
            "rows": orch.state_rows(pm_id, case_id),
        }

    @app.get("/cases/{case_id}/variables")
    def case_variables(case_id: int) -> dict:
        pm_id, case_id = _resolve_case(orch, case_id)
        return {
            "modelId": pm_id,
            "caseId": case_id,
            "variables": orch.variables(pm_id, case_id),
        }

    # -- log and push ---------------------------------------------------------

    @app.get("/log")
    def export_log(
        model: int | None = None, case: int | None = None, format: str = "wire"
    ):
        if format == "csv":
            return PlainTextResponse(orch.log.export_csv(model, case))
        if format == "wire":
            return PlainTextResponse(orch.log.export_wire(model, case))
        raise HTTPException(400, f"unknown log format {format!r}")

    @app.get("/subscribe")
    async def subscribe(from_offset: int = 0, max_events: int | None = None):
        """Server-push channel: every event and diagnostic as it happens."""
        q: queue.Queue = queue.Queue()
        for entry in orch.log.entries(from_offset=from_offset):
            q.put((orch.engine.process_stream, json.loads(_wire_text(entry.event))))
        subscribers.append(q)

        async def stream():
            sent = 0
            loop = asyncio.get_event_loop()
            try:
                while max_events is None or sent < max_events:
                    try:
                        stream_name, record = await loop.run_in_executor(
                            None, q.get, True, 0.5
                        )
                    except queue.Empty:
                        if max_events is not None:
                            break
                        yield ": keep-alive\n\n"
                        continue
                    payload = json.dumps(record, separators=(",", ":"))
                    yield f"event: {stream_name}\ndata: {payload}\n\n"
                    sent += 1
            finally:
                if q in subscribers:
                    subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def _binding_dicts(spec: Any) -> list[dict] | None:
    if not spec:
        return None
    resolved = []
    for binding in spec:
        resolved.append(
            {
                "host": binding["host"],
                "inner": binding["inner"],
                "terminators": binding["terminators"],
            }
        )
    return resolved
