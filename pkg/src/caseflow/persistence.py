"""Append-only event log, exports, and the replay harness.

Every event of every cascade is appended in cascade order, tagged with its
origin (external submission or engine-derived). The log is the recovery
mechanism: replaying the external events of an exported log into a fresh
engine reproduces identical table contents and case statuses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from caseflow.events import (
    LifecycleState,
    RawExecutionEvent,
    decode_event,
    encode_event,
    to_csv_line,
)

EXTERNAL = "external"
DERIVED = "derived"


@dataclass(frozen=True)
class LogEntry:
    offset: int
    origin: str
    event: RawExecutionEvent


class EventLog:
    """Durable (or in-memory) append-only sequence of log entries."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: list[LogEntry] = []
        self._handle = None
        if self.path is not None and self.path.exists():
            self._load()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("a", encoding="utf-8")

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:  # type: ignore[union-attr]
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                self._entries.append(
                    LogEntry(i, obj["origin"], decode_event(json.dumps(obj["event"])))
                )

    def append(self, event: RawExecutionEvent, origin: str) -> int:
        offset = len(self._entries)
        self._entries.append(LogEntry(offset, origin, event))
        if self._handle is not None:
            record = {"origin": origin, "event": json.loads(encode_event(event))}
            self._handle.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._handle.flush()
        return offset

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def entries(
        self, model: int | None = None, case: int | None = None, from_offset: int = 0
    ) -> list[LogEntry]:
        return [
            e
            for e in self._entries[from_offset:]
            if (model is None or e.event.pm_id == model)
            and (case is None or e.event.case_id == case)
        ]

    def __len__(self) -> int:
        return len(self._entries)

    # -- exports -------------------------------------------------------------

    def export_wire(self, model: int | None = None, case: int | None = None) -> str:
        lines = [encode_event(e.event).decode("utf-8") for e in self.entries(model, case)]
        return "\n".join(lines) + ("\n" if lines else "")

    def export_csv(
        self,
        model: int | None = None,
        case: int | None = None,
        include_ts: bool = True,
        states: set[str] | None = None,
    ) -> str:
        lines = [
            to_csv_line(e.event, include_ts=include_ts)
            for e in self.entries(model, case)
            if states is None or e.event.state.value in states
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def parse_wire_log(text: str) -> list[RawExecutionEvent]:
    return [decode_event(line) for line in text.splitlines() if line.strip()]


def replay_events(orchestrator, events: Iterable[RawExecutionEvent]) -> None:
    """Re-drive the external events of an exported log into an orchestrator.

    Models must already be deployed. External events are recognized by
    shape: a started event of a model's start node opens a case; completed
    events of externally-completable nodes are submissions. Everything else
    was engine-derived and regenerates.
    """
    for event in events:
        entry = orchestrator.model_entry(event.pm_id)
        if (
            event.state is LifecycleState.STARTED
            and entry.start_node is not None
            and event.node_id == entry.start_node
        ):
            orchestrator.start_case(
                event.pm_id, dict(event.payload), ts=event.ts, case_id=event.case_id
            )
            continue
        if event.state is LifecycleState.COMPLETED and orchestrator.is_external_node(
            event.pm_id, event.node_id
        ):
            if entry.kind == "dcr" and not orchestrator.case_exists(
                event.pm_id, event.case_id
            ):
                orchestrator.start_case(
                    event.pm_id, {}, ts=event.ts, case_id=event.case_id
                )
            orchestrator.submit(event)
