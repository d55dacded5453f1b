"""Direct declarative-transition reference: sets in, sets out, no tables.

The marking is the triple (executed, pending, included). An event is
enabled when it is included and every included condition source has been
executed. Executing event e yields: executed' = executed + {e};
included' = (included + includes(e)) - excludes(e);
pending' = (pending - {e}) + responses(e).
"""

from __future__ import annotations

from dataclasses import dataclass

from caseflow.dcr.model import DcrModelIR


class NotEnabled(RuntimeError):
    pass


@dataclass(frozen=True)
class RefMarking:
    executed: frozenset[str]
    pending: frozenset[str]
    included: frozenset[str]


def dcr_initial(model: DcrModelIR) -> RefMarking:
    return RefMarking(
        executed=model.marking.executed,
        pending=model.marking.pending,
        included=model.marking.included,
    )


def dcr_enabled(model: DcrModelIR, marking: RefMarking, event: str) -> bool:
    if event not in marking.included:
        return False
    return all(
        source not in marking.included or source in marking.executed
        for source in model.condition_sources(event)
    )


def dcr_step(model: DcrModelIR, marking: RefMarking, event: str) -> RefMarking:
    if not dcr_enabled(model, marking, event):
        raise NotEnabled(f"event {event!r} is not enabled")
    included = (marking.included | set(model.includes_of(event))) - set(
        model.excludes_of(event)
    )
    pending = (marking.pending - {event}) | set(model.responses_of(event))
    return RefMarking(
        executed=marking.executed | {event},
        pending=frozenset(pending),
        included=frozenset(included),
    )


def dcr_enabled_set(model: DcrModelIR, marking: RefMarking) -> set[str]:
    return {e for e in model.events if dcr_enabled(model, marking, e)}


def dcr_accepting(marking: RefMarking) -> bool:
    return not (marking.included & marking.pending)
