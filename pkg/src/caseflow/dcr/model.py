"""Declarative graph models: events, four relation sets, and a marking.

Accepted inputs are the XML layout of common graph editors (events/labels/
relations/marking sections) and a JSON equivalent with identical field
names. The marking holds the executed, pending, and included event sets.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

Relation = tuple[str, str]


class DcrValidationError(ValueError):
    """Structural problem in a declarative model file."""


@dataclass(frozen=True)
class DcrMarking:
    executed: frozenset[str] = frozenset()
    pending: frozenset[str] = frozenset()
    included: frozenset[str] = frozenset()


@dataclass
class DcrModelIR:
    """Validated declarative model with its initial marking."""

    pm_id: int
    version: int
    events: tuple[str, ...]
    labels: dict[str, str]
    conditions: frozenset[Relation]  # (source, target): source must precede target
    responses: frozenset[Relation]  # executing source makes target pending
    includes: frozenset[Relation]
    excludes: frozenset[Relation]
    marking: DcrMarking
    name: str = ""

    def __post_init__(self) -> None:
        events = set(self.events)
        if len(self.events) != len(events):
            raise DcrValidationError("duplicate event ids")
        for event in self.events:
            if not event or event.startswith("@"):
                raise DcrValidationError(
                    f"event id {event!r} is invalid; names starting with '@' are reserved"
                )
        for rel_name, rel in (
            ("condition", self.conditions),
            ("response", self.responses),
            ("include", self.includes),
            ("exclude", self.excludes),
        ):
            for source, target in rel:
                if source not in events:
                    raise DcrValidationError(f"{rel_name} relation references unknown event {source!r}")
                if target not in events:
                    raise DcrValidationError(f"{rel_name} relation references unknown event {target!r}")
        for part, members in (
            ("executed", self.marking.executed),
            ("pending", self.marking.pending),
            ("included", self.marking.included),
        ):
            unknown = members - events
            if unknown:
                raise DcrValidationError(f"marking {part} references unknown events {sorted(unknown)}")
        for event in self.events:
            self.labels.setdefault(event, event)

    def label(self, event: str) -> str:
        return self.labels.get(event, event)

    def condition_sources(self, event: str) -> tuple[str, ...]:
        return tuple(sorted(s for s, t in self.conditions if t == event))

    def responses_of(self, event: str) -> tuple[str, ...]:
        return tuple(sorted(t for s, t in self.responses if s == event))

    def includes_of(self, event: str) -> tuple[str, ...]:
        return tuple(sorted(t for s, t in self.includes if s == event))

    def excludes_of(self, event: str) -> tuple[str, ...]:
        return tuple(sorted(t for s, t in self.excludes if s == event))


def build_dcr(
    pm_id: int,
    version: int,
    events: list[str],
    conditions: set[Relation] | None = None,
    responses: set[Relation] | None = None,
    includes: set[Relation] | None = None,
    excludes: set[Relation] | None = None,
    executed: set[str] | None = None,
    pending: set[str] | None = None,
    included: set[str] | None = None,
    labels: dict[str, str] | None = None,
    name: str = "",
) -> DcrModelIR:
    """Programmatic constructor; ``included`` defaults to all events."""
    return DcrModelIR(
        pm_id=pm_id,
        version=version,
        events=tuple(events),
        labels=dict(labels or {}),
        conditions=frozenset(conditions or set()),
        responses=frozenset(responses or set()),
        includes=frozenset(includes or set()),
        excludes=frozenset(excludes or set()),
        marking=DcrMarking(
            executed=frozenset(executed or set()),
            pending=frozenset(pending or set()),
            included=frozenset(included if included is not None else events),
        ),
        name=name,
    )


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_xml(text: str) -> DcrModelIR:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise DcrValidationError(f"not well-formed XML: {exc}") from exc

    pm_raw = root.get("pmId") or root.get("id") or ""
    try:
        pm_id = int(pm_raw)
    except ValueError:
        raise DcrValidationError(f"dcrgraph pmId must be an integer, got {pm_raw!r}") from None
    version = int(root.get("version", "1"))
    name = root.get("name", "")

    events: list[str] = []
    labels: dict[str, str] = {}
    relations: dict[str, set[Relation]] = {
        "condition": set(),
        "response": set(),
        "include": set(),
        "exclude": set(),
    }
    marking: dict[str, set[str]] = {}

    for element in root.iter():
        tag = _strip_ns(element.tag)
        if tag == "events":
            for child in element:
                if _strip_ns(child.tag) == "event":
                    events.append(child.get("id", ""))
        elif tag == "labelMappings":
            for child in element:
                if _strip_ns(child.tag) == "labelMapping":
                    labels[child.get("eventId", "")] = child.get("labelId", "")
        elif tag in ("conditions", "responses", "includes", "excludes"):
            rel_name = tag[:-1]
            for child in element:
                relations[rel_name].add(
                    (child.get("sourceId", ""), child.get("targetId", ""))
                )
        elif tag in ("executed", "included", "pendingResponses"):
            key = "pending" if tag == "pendingResponses" else tag
            marking[key] = {
                child.get("id", "") for child in element if _strip_ns(child.tag) == "event"
            }

    if not any(_strip_ns(e.tag) == "marking" for e in root.iter()):
        raise DcrValidationError("missing marking section")

    return DcrModelIR(
        pm_id=pm_id,
        version=version,
        events=tuple(events),
        labels=labels,
        conditions=frozenset(relations["condition"]),
        responses=frozenset(relations["response"]),
        includes=frozenset(relations["include"]),
        excludes=frozenset(relations["exclude"]),
        marking=DcrMarking(
            executed=frozenset(marking.get("executed", set())),
            pending=frozenset(marking.get("pending", set())),
            included=frozenset(marking.get("included", set())),
        ),
        name=name,
    )


def _parse_json(text: str) -> DcrModelIR:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DcrValidationError(f"not valid JSON: {exc}") from exc
    if "marking" not in obj:
        raise DcrValidationError("missing marking section")
    marking = obj["marking"]
    pairs = lambda rel: frozenset((s, t) for s, t in obj.get(rel, []))  # noqa: E731
    return DcrModelIR(
        pm_id=int(obj["pmId"]),
        version=int(obj.get("version", 1)),
        events=tuple(obj["events"]),
        labels=dict(obj.get("labels", {})),
        conditions=pairs("conditions"),
        responses=pairs("responses"),
        includes=pairs("includes"),
        excludes=pairs("excludes"),
        marking=DcrMarking(
            executed=frozenset(marking.get("executed", [])),
            pending=frozenset(marking.get("pendingResponses", marking.get("pending", []))),
            included=frozenset(marking.get("included", [])),
        ),
        name=obj.get("name", ""),
    )


def parse_dcr(data: bytes | str) -> DcrModelIR:
    """Read a declarative model from XML or the JSON twin format."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    stripped = data.lstrip()
    if stripped.startswith("<"):
        return _parse_xml(data)
    return _parse_json(data)
