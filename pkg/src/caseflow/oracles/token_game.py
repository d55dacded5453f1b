"""Reference interpreter for imperative models: direct graph walking.

Implements the same observable semantics as the compiled rules, but as a
recursive token propagation over the model graph, with no rule machinery,
no cascade queue, and no relational tables. Differential tests drive the
rule engine and this interpreter with the same external actions and compare
the observations of each step as multisets.

Token kinds: a live token reaches a node when its predecessor completed and
the edge condition holds; a skip token covers dead paths so joins can
synchronize. Joins act on the last recorded terminal state per node, with a
first/subsequent wait-set distinction for loop entries.
"""

from __future__ import annotations

from caseflow import exprlang
from caseflow.bpmn.analysis import classify_join_inputs
from caseflow.bpmn.model import BpmnModelIR, NodeKind

COMPLETED = "completed"
SKIPPED = "skipped"
STARTED = "started"


class NotOffered(RuntimeError):
    """Completion submitted for a task that is not currently offered."""


class NotQuiescent(RuntimeError):
    """A propagation wave failed to settle; the model loops without work."""


class TokenGame:
    def __init__(self, model: BpmnModelIR, naive_or_joins: bool = False):
        self.model = model
        self.naive_or_joins = naive_or_joins
        self.classification = classify_join_inputs(model)
        self.last: dict[str, tuple[str, int]] = {}
        self.offered: set[str] = set()
        self.variables: dict = {}
        self.case_done = False
        self._observations: list[tuple[str, str]] = []
        self._pending: list[tuple[str, str, int]] = []
        self.max_propagations = 100_000

    # -- external actions ----------------------------------------------------

    def start_case(self, payload: dict, ts: int) -> list[tuple[str, str]]:
        start = self.model.start_node
        self.variables = dict(payload)
        self._observations = [(start, STARTED)]
        self.last[start] = (STARTED, ts)
        self._terminal(start, COMPLETED, ts)
        return self._drain()

    def complete_task(self, node: str, payload: dict, ts: int) -> list[tuple[str, str]]:
        if node not in self.offered:
            raise NotOffered(f"task {node!r} is not offered")
        self.offered.discard(node)
        self._observations = []
        self.variables.update(payload)
        self._terminal(node, COMPLETED, ts)
        return self._drain()

    def _drain(self) -> list[tuple[str, str]]:
        observations = self._observations
        self._observations = []
        return observations

    # -- propagation ---------------------------------------------------------

    def _terminal(self, node: str, state: str, ts: int) -> None:
        """Record a node reaching completed/skipped and settle the wave."""
        self._pending.append((node, state, ts))
        steps = 0
        while self._pending:
            steps += 1
            if steps > self.max_propagations:
                raise NotQuiescent("propagation did not settle")
            current, current_state, current_ts = self._pending.pop(0)
            self._settle(current, current_state, current_ts)

    def _settle(self, node: str, state: str, ts: int) -> None:
        self._observations.append((node, state))
        self.last[node] = (state, ts)
        kind = self.model.kind_of(node)
        if kind is NodeKind.END_EVENT and state == COMPLETED:
            self.case_done = True
            self.last = {
                n: v
                for n, v in self.last.items()
                if not (v[0] == COMPLETED and n != node)
            }
            return
        for edge in self.model.out_edges(node):
            self._route(node, edge.target, state, ts)

    def _route(self, source: str, target: str, source_state: str, ts: int) -> None:
        if self.model.is_join(target):
            self._join_signal(target, source, source_state, ts)
            return
        cond = self.model.condition(source, target)
        live = source_state == COMPLETED and exprlang.evaluate_bool(cond, self.variables)
        kind = self.model.kind_of(target)
        if kind in (NodeKind.TASK, NodeKind.ADHOC_SUBPROCESS):
            if live:
                self.offered.add(target)
                self._observations.append((target, STARTED))
            else:
                self._pending.append((target, SKIPPED, ts))
            return
        # Gateways and end events are engine-driven and instantaneous.
        self._pending.append((target, COMPLETED if live else SKIPPED, ts))

    # -- joins ----------------------------------------------------------------

    def _state_of(self, node: str) -> tuple[str, int] | None:
        return self.last.get(node)

    def _all_in_state(self, nodes, states) -> bool:
        for node in nodes:
            recorded = self._state_of(node)
            if recorded is None or recorded[0] not in states:
                return False
        return True

    def _fresh(self, join: str, waited) -> bool:
        own = self._state_of(join)
        if own is None:
            return True
        return all(
            self._state_of(w) is not None and own[1] < self._state_of(w)[1]
            for w in waited
        )

    def _join_signal(self, join: str, source: str, source_state: str, ts: int) -> None:
        kind = self.model.kind_of(join)
        preds = sorted(self.model.predecessors(join))
        if kind is NodeKind.AND_GATEWAY:
            if self._all_in_state(preds, {source_state}) and self._fresh(join, preds):
                self._pending.append((join, source_state, ts))
            elif (
                self._all_in_state(preds, {COMPLETED, SKIPPED})
                and not self._all_in_state(preds, {COMPLETED})
                and not self._all_in_state(preds, {SKIPPED})
                and self._fresh(join, preds)
            ):
                self._observations.append((join, "!and-join-mixed-input"))
            return
        if kind is NodeKind.OR_GATEWAY:
            self._or_join_signal(join, preds, ts)
            return
        self._xor_join_signal(join, source, source_state, ts)

    def _or_join_signal(self, join: str, preds: list[str], ts: int) -> None:
        group = self.classification[join]
        loopless = sorted(group.loopless)
        looping = sorted(group.looping)
        if self.naive_or_joins:
            waited = preds
        elif loopless and looping:
            waited = loopless if self._state_of(join) is None else looping
            if self._state_of(join) is None and not loopless:
                return
        else:
            waited = looping if looping else loopless
        if not waited:
            return
        if not self._all_in_state(waited, {COMPLETED, SKIPPED}):
            return
        if not self._fresh(join, waited):
            return
        if loopless and looping and not self.naive_or_joins:
            if self._state_of(join) is None and set(waited) != set(loopless):
                return
        any_completed = any(self._state_of(w)[0] == COMPLETED for w in waited)
        self._pending.append((join, COMPLETED if any_completed else SKIPPED, ts))

    def _xor_join_signal(self, join: str, source: str, source_state: str, ts: int) -> None:
        group = self.classification[join]
        loopless = sorted(group.loopless)
        looping = sorted(group.looping)
        if source_state == COMPLETED:
            cond = self.model.condition(source, join)
            if exprlang.evaluate_bool(cond, self.variables):
                self._pending.append((join, COMPLETED, ts))
            return
        # Skip signals forward only once the active wait group is all dead.
        if loopless and looping:
            if source in loopless:
                if self._state_of(join) is None and self._all_in_state(
                    loopless, {SKIPPED}
                ):
                    self._pending.append((join, SKIPPED, ts))
            else:
                if (
                    self._state_of(join) is not None
                    and self._all_in_state(looping, {SKIPPED})
                    and self._fresh(join, looping)
                ):
                    self._pending.append((join, SKIPPED, ts))
            return
        waited = looping if looping else loopless
        if self._all_in_state(waited, {SKIPPED}) and self._fresh(join, waited):
            self._pending.append((join, SKIPPED, ts))
