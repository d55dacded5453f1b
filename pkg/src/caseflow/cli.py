"""Command line for deploying models, driving cases, and serving the API.

State lives in a data directory: a manifest of deployed model sources plus
the append-only event log. Every invocation rebuilds the engine by replaying
the log's external events, runs one command, and appends what it caused;
replay is the recovery mechanism, there is no other database.

Exit codes: 0 ok, 1 user error, 2 engine fault.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from pathlib import Path

from caseflow.events import (
    LifecycleState,
    RawExecutionEvent,
    to_csv_line,
)
from caseflow.persistence import EXTERNAL, EventLog, parse_wire_log, replay_events
from caseflow.runtime import EngineConfig, Orchestrator, OrchestratorError

USER_ERROR = 1
ENGINE_FAULT = 2


def _parse_value(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_payload(pairs: list[str]) -> dict:
    payload = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"payload entries look like key=value, got {pair!r}")
        payload[key] = _parse_value(value)
    return payload


def _manifest_path(data: Path) -> Path:
    return data / "manifest.json"


def _read_manifest(data: Path) -> list[dict]:
    path = _manifest_path(data)
    if not path.exists():
        return []
    return json.loads(path.read_text(encoding="utf-8"))


def _write_manifest(data: Path, manifest: list[dict]) -> None:
    _manifest_path(data).write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def load_orchestrator(
    data: Path, attach_log: bool = True, config: EngineConfig | None = None
) -> Orchestrator:
    """Rebuild engine state: deploy manifest models, replay the event log."""
    orch = Orchestrator(config or EngineConfig())
    for entry in _read_manifest(data):
        source = (data / entry["source"]).read_bytes()
        bindings = None
        if entry.get("bindings"):
            bindings = [
                {
                    "host": b["host"],
                    "inner": (data / b["source"]).read_text(encoding="utf-8"),
                    "terminators": b["terminators"],
                }
                for b in entry["bindings"]
            ]
        orch.deploy(source, entry["kind"], bindings)
    log_path = data / "events.log"
    if log_path.exists():
        existing = EventLog(log_path)
        external = [e.event for e in existing._entries if e.origin == EXTERNAL]
        existing.close()
        replay_events(orch, external)
    if attach_log:
        orch.log = EventLog(log_path)
    return orch


def cmd_deploy(args) -> int:
    data = Path(args.data)
    (data / "models").mkdir(parents=True, exist_ok=True)
    source_path = Path(args.file)
    stored = data / "models" / source_path.name
    shutil.copyfile(source_path, stored)
    bindings_spec = []
    binding_param = []
    for raw in args.binding or []:
        host, sep, rest = raw.partition("=")
        inner_file, sep2, terminators = rest.partition(":")
        if not sep or not sep2:
            raise SystemExit("bindings look like host=innerfile:Term1,Term2")
        inner_path = Path(inner_file)
        stored_inner = data / "models" / inner_path.name
        shutil.copyfile(inner_path, stored_inner)
        term_list = [t for t in terminators.split(",") if t]
        bindings_spec.append(
            {"host": host, "source": f"models/{inner_path.name}", "terminators": term_list}
        )
        binding_param.append(
            {
                "host": host,
                "inner": inner_path.read_text(encoding="utf-8"),
                "terminators": term_list,
            }
        )
    orch = load_orchestrator(data)
    deployed = orch.deploy(source_path.read_bytes(), args.kind, binding_param or None)
    from caseflow.cql.rules import render_rules

    entry = orch.model_entry(deployed.pm_id)
    rules_path = data / "models" / f"{deployed.pm_id}.rules.txt"
    rules_path.write_text(render_rules(entry.compiled.rules), encoding="utf-8")
    manifest = _read_manifest(data)
    manifest.append(
        {
            "pmId": deployed.pm_id,
            "kind": args.kind,
            "source": f"models/{source_path.name}",
            "bindings": bindings_spec,
        }
    )
    _write_manifest(data, manifest)
    print(f"deployed model {deployed.pm_id} version {deployed.version} ({args.kind})")
    return 0


def _now_ts(args) -> int:
    return args.ts if args.ts is not None else int(time.time() * 1000)


def cmd_start(args) -> int:
    orch = load_orchestrator(Path(args.data))
    case_id, cascade = orch.start_case(args.model, _parse_payload(args.set), ts=_now_ts(args))
    for event in cascade.events:
        print(to_csv_line(event))
    print(f"case {case_id} started")
    return 0 if cascade.ok else ENGINE_FAULT


def cmd_send(args) -> int:
    orch = load_orchestrator(Path(args.data))
    event = RawExecutionEvent(
        args.model,
        args.case,
        args.node,
        LifecycleState.COMPLETED,
        _parse_payload(args.set),
        _now_ts(args),
    )
    cascade = orch.submit(event)
    for emitted in cascade.events:
        print(to_csv_line(emitted))
    for diagnostic in cascade.diagnostics:
        print(f"! {diagnostic.kind}: {diagnostic.detail}")
    return 0 if cascade.ok else ENGINE_FAULT


def _format_enabled(work) -> str:
    names = sorted(node for node, _ in work)
    return ", ".join(names) if names else "None"


def cmd_enabled(args) -> int:
    orch = load_orchestrator(Path(args.data), attach_log=False)
    print("Available tasks are: " + _format_enabled(orch.enabled_work(args.model, args.case)))
    return 0


def cmd_state(args) -> int:
    orch = load_orchestrator(Path(args.data), attach_log=False)
    record = orch.case_record(args.model, args.case)
    print(f"case {args.case} of model {args.model}: {record.status}")
    for row in orch.state_rows(args.model, args.case):
        print("  " + json.dumps(row, sort_keys=True))
    variables = orch.variables(args.model, args.case)
    if variables:
        print("  variables: " + json.dumps(variables, sort_keys=True))
    return 0


def cmd_log(args) -> int:
    orch = load_orchestrator(Path(args.data), attach_log=False)
    log_path = Path(args.data) / "events.log"
    log = EventLog(log_path) if log_path.exists() else orch.log
    if args.format == "csv":
        text = log.export_csv(args.model, args.case)
    else:
        text = log.export_wire(args.model, args.case)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_replay(args) -> int:
    orch = load_orchestrator(Path(args.data), attach_log=False)
    events = parse_wire_log(Path(args.file).read_text(encoding="utf-8"))
    fresh = Orchestrator(EngineConfig())
    for entry in _read_manifest(Path(args.data)):
        source = (Path(args.data) / entry["source"]).read_bytes()
        bindings = None
        if entry.get("bindings"):
            bindings = [
                {
                    "host": b["host"],
                    "inner": (Path(args.data) / b["source"]).read_text(encoding="utf-8"),
                    "terminators": b["terminators"],
                }
                for b in entry["bindings"]
            ]
        fresh.deploy(source, entry["kind"], bindings)
    replay_events(fresh, events)
    for (pm, case_id), record in sorted(fresh.cases.items()):
        print(f"model {pm} case {case_id}: {record.status}")
    del orch
    return 0


def cmd_run_interactive(args) -> int:
    """Prompt with enabled tasks, read a choice and payload, loop to completion."""
    data = Path(args.data)
    orch = load_orchestrator(data)
    if args.case is None:
        case_id, cascade = orch.start_case(
            args.model, _parse_payload(args.set), ts=_now_ts(args)
        )
        for event in cascade.events:
            print(to_csv_line(event))
        print(f"case {case_id} started")
    else:
        case_id = args.case

    while True:
        record = orch.case_record(args.model, case_id)
        if record.status != "running":
            print(f"case {case_id} is {record.status}")
            return 0 if record.status == "completed" else ENGINE_FAULT
        work = orch.enabled_work(args.model, case_id)
        print("\tAvailable tasks are: " + _format_enabled(work))
        if not work:
            return 0
        try:
            choice = input("task> ").strip()
        except EOFError:
            return 0
        if not choice or choice == "quit":
            return 0
        names = {node for node, _ in work}
        if choice not in names:
            print(f"{choice!r} is not available")
            continue
        try:
            payload_line = input("payload (k=v ...)> ").strip()
        except EOFError:
            payload_line = ""
        payload = _parse_payload(payload_line.split()) if payload_line else {}
        event = RawExecutionEvent(
            args.model,
            case_id,
            choice,
            LifecycleState.COMPLETED,
            payload,
            int(time.time() * 1000),
        )
        try:
            cascade = orch.submit(event)
        except OrchestratorError as exc:
            print(f"error: {exc}")
            continue
        for emitted in cascade.events:
            print(to_csv_line(emitted))
        for diagnostic in cascade.diagnostics:
            print(f"! {diagnostic.kind}: {diagnostic.detail}")


def cmd_serve(args) -> int:
    import uvicorn

    from caseflow.server import create_app

    config = EngineConfig.load(args.config) if args.config else None
    orch = load_orchestrator(Path(args.data), config=config)
    uvicorn.run(create_app(orch), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caseflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", default="./caseflow-data", help="state directory")

    p = sub.add_parser("deploy", help="deploy a model file")
    common(p)
    p.add_argument("file")
    p.add_argument("--kind", choices=["bpmn", "dcr", "hybrid"], default="bpmn")
    p.add_argument(
        "--binding",
        action="append",
        help="hybrid binding host=innerfile:Term1,Term2 (repeatable)",
    )
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("start", help="start a new case")
    common(p)
    p.add_argument("--model", type=int, required=True)
    p.add_argument("--set", action="append", help="payload entry k=v", default=[])
    p.add_argument("--ts", type=int)
    p.set_defaults(func=cmd_start)

    p = sub.add_parser("send", help="submit a task/event completion")
    common(p)
    p.add_argument("--model", type=int, required=True)
    p.add_argument("--case", type=int, required=True)
    p.add_argument("node")
    p.add_argument("--set", action="append", help="payload entry k=v", default=[])
    p.add_argument("--ts", type=int)
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("enabled", help="show enabled work for a case")
    common(p)
    p.add_argument("--model", type=int, required=True)
    p.add_argument("--case", type=int, required=True)
    p.set_defaults(func=cmd_enabled)

    p = sub.add_parser("state", help="show case status and state rows")
    common(p)
    p.add_argument("--model", type=int, required=True)
    p.add_argument("--case", type=int, required=True)
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("log", help="export the event log")
    common(p)
    p.add_argument("--model", type=int)
    p.add_argument("--case", type=int)
    p.add_argument("--format", choices=["wire", "csv"], default="wire")
    p.add_argument("--out")
    p.set_defaults(func=cmd_log)

    p = sub.add_parser("replay", help="replay an exported log and print case statuses")
    common(p)
    p.add_argument("file")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("run-interactive", help="drive a case from the terminal")
    common(p)
    p.add_argument("--model", type=int, required=True)
    p.add_argument("--case", type=int)
    p.add_argument("--set", action="append", help="start payload k=v", default=[])
    p.add_argument("--ts", type=int)
    p.set_defaults(func=cmd_run_interactive)

    p = sub.add_parser("serve", help="run the HTTP API")
    common(p)
    p.add_argument("--config", help="key=value engine configuration file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8420)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OrchestratorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USER_ERROR
    except (FileNotFoundError, SystemExit) as exc:
        if isinstance(exc, SystemExit):
            raise
        print(f"error: {exc}", file=sys.stderr)
        return USER_ERROR


if __name__ == "__main__":
    sys.exit(main())
