"""Shared event vocabulary: lifecycle states, execution events, wire codecs.

Every other module speaks in :class:`RawExecutionEvent` values. An event
manifests one lifecycle change of one node in one case. The wire encoding is
a single-line JSON object with the fields ``pmID``, ``caseID``, ``nodeID``,
``state``, ``payload``, ``ts``; event logs are newline-delimited sequences of
those objects. A human-readable CSV line format is provided alongside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

Scalar = bool | int | float | str

WIRE_FIELDS = ("pmID", "caseID", "nodeID", "state", "payload", "ts")


class LifecycleState(str, Enum):
    """The closed three-state lifecycle of a node execution."""

    STARTED = "started"
    COMPLETED = "completed"
    SKIPPED = "skipped"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


STATE_VALUES = frozenset(s.value for s in LifecycleState)


class EventDecodeError(ValueError):
    """Raised when a wire object cannot be decoded into a valid event."""


class EventValidationError(ValueError):
    """Raised when event fields violate the event invariants."""


def _check_scalar(key: str, value: Any) -> Scalar:
    if isinstance(value, bool) or isinstance(value, (int, float, str)):
        return value
    raise EventValidationError(
        f"payload value for {key!r} must be a scalar, got {type(value).__name__}"
    )


@dataclass(frozen=True)
class RawExecutionEvent:
    """One lifecycle change of one node in one case.

    ``payload`` may be empty but is never absent; values are scalars only.
    ``ts`` is integer milliseconds since the epoch.
    """

    pm_id: int
    case_id: int
    node_id: str
    state: LifecycleState
    payload: Mapping[str, Scalar] = field(default_factory=dict)
    ts: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.pm_id, int) or isinstance(self.pm_id, bool) or self.pm_id < 0:
            raise EventValidationError("pm_id must be a non-negative integer")
        if not isinstance(self.case_id, int) or isinstance(self.case_id, bool) or self.case_id < 0:
            raise EventValidationError("case_id must be a non-negative integer")
        if not self.node_id or not isinstance(self.node_id, str):
            raise EventValidationError("node_id must be a non-empty string")
        if not isinstance(self.state, LifecycleState):
            raise EventValidationError(f"unknown lifecycle state {self.state!r}")
        if not isinstance(self.ts, int) or isinstance(self.ts, bool) or self.ts < 0:
            raise EventValidationError("ts must be a non-negative integer")
        for key, value in self.payload.items():
            if not isinstance(key, str):
                raise EventValidationError("payload keys must be strings")
            _check_scalar(key, value)

    def with_payload(self, payload: Mapping[str, Scalar]) -> "RawExecutionEvent":
        return RawExecutionEvent(
            self.pm_id, self.case_id, self.node_id, self.state, dict(payload), self.ts
        )

    def key(self) -> tuple[int, int, str, str, int]:
        return (self.pm_id, self.case_id, self.node_id, self.state.value, self.ts)


def encode_event(event: RawExecutionEvent) -> bytes:
    """Encode an event into the canonical single-line wire form.

    Deterministic: fixed field order, payload keys sorted. ``decode_event``
    is its exact inverse.
    """
    obj = {
        "pmID": event.pm_id,
        "caseID": event.case_id,
        "nodeID": event.node_id,
        "state": event.state.value,
        "payload": {k: event.payload[k] for k in sorted(event.payload)},
        "ts": event.ts,
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode_event(data: bytes | str) -> RawExecutionEvent:
    """Decode a wire object, validating structure and field types.

    An unknown lifecycle state or a missing/ill-typed field is rejected with
    an error naming the offending field. A legacy ``executor`` field is
    accepted and discarded.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise EventDecodeError(f"malformed wire object: {exc}") from exc
    if not isinstance(obj, dict):
        raise EventDecodeError("wire object must be a JSON object")
    for name in WIRE_FIELDS:
        if name not in obj:
            raise EventDecodeError(f"missing field {name}")
    unknown = set(obj) - set(WIRE_FIELDS) - {"executor"}
    if unknown:
        raise EventDecodeError(f"unknown fields {sorted(unknown)}")

    state_raw = obj["state"]
    if state_raw not in STATE_VALUES:
        raise EventDecodeError(f"unknown lifecycle state {state_raw!r}")
    payload = obj["payload"]
    if not isinstance(payload, dict):
        raise EventDecodeError("field payload must be an object")
    for key, value in payload.items():
        if isinstance(value, (dict, list)) or value is None:
            raise EventDecodeError(f"payload value for {key!r} must be a scalar")
    try:
        return RawExecutionEvent(
            pm_id=obj["pmID"],
            case_id=obj["caseID"],
            node_id=obj["nodeID"],
            state=LifecycleState(state_raw),
            payload=payload,
            ts=obj["ts"],
        )
    except EventValidationError as exc:
        raise EventDecodeError(str(exc)) from exc


def format_scalar(value: Scalar) -> str:
    """Render a payload scalar the way the CSV line format expects."""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def to_csv_line(event: RawExecutionEvent, include_ts: bool = True) -> str:
    """Render the ``pmID,caseID,nodeID,state,{k=v; ...},ts`` line format."""
    pairs = " ".join(
        f"{k}={format_scalar(event.payload[k])};" for k in sorted(event.payload)
    )
    cells = [
        str(event.pm_id),
        str(event.case_id),
        event.node_id,
        event.state.value,
        "{" + pairs + "}",
    ]
    if include_ts:
        cells.append(str(event.ts))
    return ",".join(cells)


def parse_csv_line(line: str) -> tuple[int, int, str, str, dict[str, str], int | None]:
    """Parse a CSV event line into its parts, tolerating stray whitespace.

    The payload values come back as raw strings; callers compare them after
    normalisation. Returns ``(pmID, caseID, nodeID, state, payload, ts)``
    with ``ts`` None when the column is absent.
    """
    brace_open = line.index("{")
    brace_close = line.rindex("}")
    head = [c.strip() for c in line[:brace_open].split(",") if c.strip()]
    if len(head) != 4:
        raise ValueError(f"expected 4 leading columns, got {head!r}")
    payload: dict[str, str] = {}
    body = line[brace_open + 1 : brace_close]
    for chunk in body.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, value = chunk.partition("=")
        payload[key.strip()] = value.strip()
    tail = line[brace_close + 1 :].strip().lstrip(",").strip()
    ts = int(tail) if tail else None
    return int(head[0]), int(head[1]), head[2], head[3], payload, ts
