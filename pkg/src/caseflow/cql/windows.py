"""Tumbling time windows over an ordered event slice.

Only tumbling time windows with a count (or caller-supplied fold) are
supported; that is all the monitoring rules here need. Window boundaries
are multiples of the window length; empty windows between the first and
last event still emit their aggregate (count 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from caseflow.events import RawExecutionEvent


@dataclass(frozen=True)
class WindowSpec:
    length_ms: int
    aggregate: str | Callable[[Sequence[RawExecutionEvent]], object] = "count"
    partition_by: tuple[str, ...] = ()
    output_stream: str | None = None

    def __post_init__(self) -> None:
        if self.length_ms <= 0:
            raise ValueError("window length must be positive")


@dataclass(frozen=True)
class WindowEmission:
    window_start: int
    window_end: int
    partition: tuple
    value: object

    def to_record(self, spec: WindowSpec) -> dict:
        record = {
            "windowStart": self.window_start,
            "windowEnd": self.window_end,
            "value": self.value,
        }
        for name, value in zip(spec.partition_by, self.partition):
            record[name] = value
        return record


def _event_field(event: RawExecutionEvent, name: str):
    mapping = {
        "pmID": event.pm_id,
        "caseID": event.case_id,
        "nodeID": event.node_id,
        "state": event.state.value,
        "ts": event.ts,
    }
    try:
        return mapping[name]
    except KeyError:
        raise ValueError(f"unknown window partition field {name!r}") from None


def eval_window(
    spec: WindowSpec,
    events: Iterable[RawExecutionEvent],
    engine=None,
) -> list[WindowEmission]:
    """One aggregate per window boundary per partition, in time order.

    Requires the slice to be time-ordered. When ``engine`` and
    ``spec.output_stream`` are given, each emission is also published to the
    output stream (relation-to-stream direction).
    """
    ordered = list(events)
    for earlier, later in zip(ordered, ordered[1:]):
        if later.ts < earlier.ts:
            raise ValueError("window input must be time-ordered")
    emissions: list[WindowEmission] = []
    if ordered:
        first_bucket = ordered[0].ts // spec.length_ms
        last_bucket = ordered[-1].ts // spec.length_ms
        partitions: list[tuple] = []
        buckets: dict[tuple, dict[int, list[RawExecutionEvent]]] = {}
        for event in ordered:
            part = tuple(_event_field(event, f) for f in spec.partition_by)
            if part not in buckets:
                buckets[part] = {}
                partitions.append(part)
            buckets[part].setdefault(event.ts // spec.length_ms, []).append(event)
        for bucket in range(first_bucket, last_bucket + 1):
            for part in partitions:
                members = buckets[part].get(bucket, [])
                if spec.aggregate == "count":
                    value: object = len(members)
                else:
                    value = spec.aggregate(members)  # type: ignore[operator]
                emissions.append(
                    WindowEmission(
                        window_start=bucket * spec.length_ms,
                        window_end=(bucket + 1) * spec.length_ms,
                        partition=part,
                        value=value,
                    )
                )
    if engine is not None and spec.output_stream is not None:
        for emission in emissions:
            engine._notify(spec.output_stream, emission.to_record(spec))
    return emissions
